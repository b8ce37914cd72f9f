//! Water-section rows: node balances, the four-row head-loss hull for
//! plain pipes, big-M pump hydraulics with the convex pump power model,
//! tank dynamics, valves, and the piecewise-linear desalination epigraph.

use std::f64::consts::SQRT_2;

use crate::conic::{AffineExpr, ConicError, EquationId, ProgramBuilder, Relation};

use super::{tag, BuildCtx, IndexMaps, Symbol};

/// Watts per (m^3/h of flow times meter of head): rho * g / 3600.
const PUMP_W_PER_M3H_M: f64 = 2.725;

pub fn build_water(
    ctx: &BuildCtx,
    b: &mut ProgramBuilder,
    maps: &IndexMaps,
) -> Result<(), ConicError> {
    let spec = ctx.spec;
    let steps = ctx.scenario.steps;
    let kq = ctx.flow_per_hour; // m^3/step -> m^3/h
    let chord = 2.0 * SQRT_2 - 2.0;
    let offset = 3.0 - 2.0 * SQRT_2;

    let elevation =
        |id: &str| spec.water.nodes.iter().find(|n| n.id == id).map_or(0.0, |n| n.elevation);

    for t in 0..steps {
        for node in &spec.water.nodes {
            // mass balance: inflow + desalination - tank fill = demand (+
            // electrolysis draw at its attachment node)
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for pipe in &spec.water.pipes {
                if pipe.to == node.id {
                    coeffs.push((maps.require(Symbol::PipeFlow, &pipe.id, t), 1.0));
                }
                if pipe.from == node.id {
                    coeffs.push((maps.require(Symbol::PipeFlow, &pipe.id, t), -1.0));
                }
            }
            if node.desalination.is_some() {
                coeffs.push((maps.require(Symbol::DesalFlow, &node.id, t), 1.0));
            }
            if node.tank.is_some() {
                coeffs.push((maps.require(Symbol::TankFlow, &node.id, t), -1.0));
            }
            if spec.hydrogen.water_node == node.id {
                coeffs.push((maps.require(Symbol::ElectrolysisWater, "", t), -1.0));
            }
            b.add_row(
                coeffs,
                Relation::Eq,
                ctx.scenario.demand(&node.id, t),
                tag(EquationId::WaterBalance, &node.id, t),
            )?;
        }

        for pipe in &spec.water.pipes {
            let yf = maps.require(Symbol::Head, &pipe.from, t);
            let yt = maps.require(Symbol::Head, &pipe.to, t);
            let f = maps.require(Symbol::PipeFlow, &pipe.id, t);
            let h = elevation(&pipe.from) - elevation(&pipe.to);
            let r = pipe.r_w;

            match &pipe.pump {
                None => {
                    // head-loss hull on yhat = y_from - y_to + h over
                    // [-a, fmax]; a is the reverse-flow magnitude
                    let fmax = pipe.f_max;
                    let a = -pipe.f_min;
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0), (f, -chord * r * fmax)],
                        Relation::Le,
                        offset * r * fmax * fmax - h,
                        tag(EquationId::HeadEnvUpperChord, &pipe.id, t).reducible(),
                    )?;
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0), (f, -chord * r * a)],
                        Relation::Ge,
                        -offset * r * a * a - h,
                        tag(EquationId::HeadEnvLowerChord, &pipe.id, t).reducible(),
                    )?;
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0), (f, -2.0 * r * fmax)],
                        Relation::Ge,
                        -r * fmax * fmax - h,
                        tag(EquationId::HeadEnvLowerTangent, &pipe.id, t).reducible(),
                    )?;
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0), (f, -2.0 * r * a)],
                        Relation::Le,
                        r * a * a - h,
                        tag(EquationId::HeadEnvUpperTangent, &pipe.id, t).reducible(),
                    )?;
                }
                Some(pump) => {
                    let yg = maps.require(Symbol::PumpGainHead, &pipe.id, t);
                    let bp = maps.require(Symbol::PumpOn, &pipe.id, t);
                    let pp = maps.require(Symbol::PumpPower, &pipe.id, t);
                    let m = pump.big_m;
                    let fmax = pipe.f_max;

                    // friction floor: r f^2 <= yhat + ygain + M (1 - bp),
                    // as the cone || (2 sqrt(r) f, w - 1) || <= w + 1
                    let w_expr = AffineExpr::new(
                        vec![(yf, 1.0), (yt, -1.0), (yg, 1.0), (bp, -m)],
                        h + m,
                    );
                    let mut wm1 = w_expr.clone();
                    wm1.constant -= 1.0;
                    let mut wp1 = w_expr.clone();
                    wp1.constant += 1.0;
                    b.add_soc(
                        wp1,
                        vec![AffineExpr::term(f, 2.0 * r.sqrt()), wm1],
                        tag(EquationId::PumpHeadLower, &pipe.id, t).reducible(),
                    )?;

                    // linear ceiling: yhat + ygain <= r fmax f + M (1 - bp)
                    b.add_row(
                        vec![
                            (yf, 1.0),
                            (yt, -1.0),
                            (yg, 1.0),
                            (f, -r * fmax),
                            (bp, m),
                        ],
                        Relation::Le,
                        m - h,
                        tag(EquationId::PumpHeadUpper, &pipe.id, t).reducible(),
                    )?;

                    // flow only while running
                    b.add_row(
                        vec![(f, 1.0), (bp, -fmax)],
                        Relation::Le,
                        0.0,
                        tag(EquationId::PumpFlowGate, &pipe.id, t).reducible(),
                    )?;

                    // gain head under the pump curve a0 + a1 f(m^3/h)
                    b.add_row(
                        vec![(yg, 1.0), (bp, -pump.a0), (f, -pump.a1 * kq)],
                        Relation::Le,
                        0.0,
                        tag(EquationId::PumpCurveLink, &pipe.id, t).reducible(),
                    )?;

                    // pump power, watts: eta P >= 2.725 (a1 fh^2 + a0 fh)
                    let watts = pump.efficiency * ctx.base * 1e6;
                    if pump.a1 > 0.0 {
                        let w2 = AffineExpr::new(
                            vec![(pp, watts), (f, -PUMP_W_PER_M3H_M * pump.a0 * kq)],
                            0.0,
                        );
                        let mut w2m1 = w2.clone();
                        w2m1.constant -= 1.0;
                        let mut w2p1 = w2.clone();
                        w2p1.constant += 1.0;
                        let quad = 2.0 * (PUMP_W_PER_M3H_M * pump.a1).sqrt() * kq;
                        b.add_soc(
                            w2p1,
                            vec![AffineExpr::term(f, quad), w2m1],
                            tag(EquationId::PumpPowerLower, &pipe.id, t).reducible(),
                        )?;
                    } else {
                        b.add_row(
                            vec![(pp, watts), (f, -PUMP_W_PER_M3H_M * pump.a0 * kq)],
                            Relation::Ge,
                            0.0,
                            tag(EquationId::PumpPowerLower, &pipe.id, t).reducible(),
                        )?;
                    }
                    // chord ceiling keeps power zero when the pump is off
                    b.add_row(
                        vec![
                            (pp, watts),
                            (f, -PUMP_W_PER_M3H_M * (pump.a1 * fmax * kq + pump.a0) * kq),
                        ],
                        Relation::Le,
                        0.0,
                        tag(EquationId::PumpPowerUpper, &pipe.id, t).reducible(),
                    )?;
                }
            }
        }

        // tanks: volume recursion every step, head coupling inside the
        // horizon
        for node in &spec.water.nodes {
            if let Some(tank) = &node.tank {
                b.add_row(
                    vec![
                        (maps.require(Symbol::TankVolume, &node.id, t + 1), 1.0),
                        (maps.require(Symbol::TankVolume, &node.id, t), -1.0),
                        (maps.require(Symbol::TankFlow, &node.id, t), -1.0),
                    ],
                    Relation::Eq,
                    0.0,
                    tag(EquationId::TankVolume, &node.id, t),
                )?;
                if t + 1 < steps {
                    b.add_row(
                        vec![
                            (maps.require(Symbol::Head, &node.id, t + 1), tank.area),
                            (maps.require(Symbol::Head, &node.id, t), -tank.area),
                            (maps.require(Symbol::TankFlow, &node.id, t), -1.0),
                        ],
                        Relation::Eq,
                        0.0,
                        tag(EquationId::TankHead, &node.id, t),
                    )?;
                }
            }
        }

        // pressure-reducing valves bound the head difference of feeding
        // pipes
        for node in &spec.water.nodes {
            if let Some(prv) = &node.prv {
                for pipe in spec.water.pipes.iter().filter(|p| p.to == node.id) {
                    let yf = maps.require(Symbol::Head, &pipe.from, t);
                    let yt = maps.require(Symbol::Head, &pipe.to, t);
                    let h = elevation(&pipe.from) - elevation(&pipe.to);
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0)],
                        Relation::Le,
                        prv.pressure_bound - h,
                        tag(EquationId::PrvUpper, &pipe.id, t).reducible(),
                    )?;
                    b.add_row(
                        vec![(yf, 1.0), (yt, -1.0)],
                        Relation::Ge,
                        -prv.pressure_bound - h,
                        tag(EquationId::PrvLower, &pipe.id, t).reducible(),
                    )?;
                }
            }
        }

        // desalination: convex epigraph of the stepwise energy curve,
        // segment lines through the quarter-capacity breakpoints
        for node in &spec.water.nodes {
            if let Some(d) = &node.desalination {
                let fdes = maps.require(Symbol::DesalFlow, &node.id, t);
                let pdes = maps.require(Symbol::DesalPower, &node.id, t);
                let bdes = maps.require(Symbol::DesalOn, &node.id, t);
                let energy = ctx.base * ctx.step_h; // p.u. -> MWh per step
                for (k, &ek) in d.e.iter().enumerate() {
                    let gap: f64 = d.e[..k].iter().map(|&ej| ek - ej).sum();
                    let ck = 0.25 * d.f_max * gap;
                    b.add_row(
                        vec![(pdes, energy), (fdes, -ek), (bdes, ck)],
                        Relation::Ge,
                        0.0,
                        tag(EquationId::DesalPowerSeg, &format!("{}/s{}", node.id, k + 1), t)
                            .reducible(),
                    )?;
                }
                b.add_row(
                    vec![(fdes, 1.0), (bdes, -d.f_max)],
                    Relation::Le,
                    0.0,
                    tag(EquationId::DesalFlowGate, &node.id, t).reducible(),
                )?;
            }
        }
    }
    Ok(())
}
