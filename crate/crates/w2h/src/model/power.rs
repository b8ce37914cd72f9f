//! Power-section rows: branch-flow voltage drops, relaxed current cones,
//! apparent-power caps, nodal balances, and the wind net-transfer link.

use crate::conic::{AffineExpr, ConicError, EquationId, ProgramBuilder, Relation};

use super::{tag, BuildCtx, IndexMaps, Symbol};

pub fn build_power(
    ctx: &BuildCtx,
    b: &mut ProgramBuilder,
    maps: &IndexMaps,
) -> Result<(), ConicError> {
    let spec = ctx.spec;
    let base = ctx.base;

    for t in 0..ctx.scenario.steps {
        let pwind = super::wind_power(ctx.scenario.wind_speed[t], &spec.wind) / base;

        // net transfer: pt = pwind - (pwe + psw) + pwedg
        b.add_row(
            vec![
                (maps.require(Symbol::NetTransfer, "", t), 1.0),
                (maps.require(Symbol::ElectrolysisP, "", t), 1.0),
                (maps.require(Symbol::WindSurplusP, "", t), 1.0),
                (maps.require(Symbol::WedgP, "", t), -1.0),
            ],
            Relation::Eq,
            pwind,
            tag(EquationId::NetTransfer, "", t),
        )?;

        // dedicated diesel cannot exceed the electrolyzer draw
        b.add_row(
            vec![
                (maps.require(Symbol::WedgP, "", t), 1.0),
                (maps.require(Symbol::ElectrolysisP, "", t), -1.0),
            ],
            Relation::Le,
            0.0,
            tag(EquationId::WedgCap, "", t).reducible(),
        )?;

        // hydrogen system injects its fuel-cell output
        b.add_row(
            vec![
                (maps.require(Symbol::HydrogenInjP, "", t), 1.0),
                (maps.require(Symbol::FuelCellP, "", t), -1.0),
            ],
            Relation::Eq,
            0.0,
            tag(EquationId::HydrogenInjection, "", t),
        )?;

        for line in &spec.power.lines {
            let vf = maps.require(Symbol::VoltageSq, &line.from, t);
            let vt = maps.require(Symbol::VoltageSq, &line.to, t);
            let i = maps.require(Symbol::CurrentSq, &line.id, t);
            let p = maps.require(Symbol::LineP, &line.id, t);
            let q = maps.require(Symbol::LineQ, &line.id, t);
            let z2 = line.r * line.r + line.x * line.x;

            // voltage drop along the branch
            b.add_row(
                vec![
                    (vf, 1.0),
                    (vt, -1.0),
                    (p, -2.0 * line.r),
                    (q, -2.0 * line.x),
                    (i, z2),
                ],
                Relation::Eq,
                0.0,
                tag(EquationId::VoltageDrop, &line.id, t),
            )?;

            // relaxed power-current coupling p^2 + q^2 <= V I as a cone;
            // never removed, dropping it could unbound the surrogate
            b.add_soc(
                AffineExpr::new(vec![(vf, 1.0), (i, 1.0)], 0.0),
                vec![
                    AffineExpr::term(p, 2.0),
                    AffineExpr::term(q, 2.0),
                    AffineExpr::new(vec![(vf, 1.0), (i, -1.0)], 0.0),
                ],
                tag(EquationId::LineCurrentCone, &line.id, t),
            )?;

            // thermal apparent-power cap
            b.add_soc(
                AffineExpr::constant(line.s_max / base),
                vec![AffineExpr::term(p, 1.0), AffineExpr::term(q, 1.0)],
                tag(EquationId::LineApparentPower, &line.id, t).reducible(),
            )?;
        }

        // nodal balances
        for bus in &spec.power.buses {
            let mut pc: Vec<(usize, f64)> = Vec::new();
            let mut qc: Vec<(usize, f64)> = Vec::new();
            for line in &spec.power.lines {
                if line.to == bus.id {
                    pc.push((maps.require(Symbol::LineP, &line.id, t), 1.0));
                    pc.push((maps.require(Symbol::CurrentSq, &line.id, t), -line.r));
                    qc.push((maps.require(Symbol::LineQ, &line.id, t), 1.0));
                    qc.push((maps.require(Symbol::CurrentSq, &line.id, t), -line.x));
                }
                if line.from == bus.id {
                    pc.push((maps.require(Symbol::LineP, &line.id, t), -1.0));
                    qc.push((maps.require(Symbol::LineQ, &line.id, t), -1.0));
                }
            }
            if bus.diesel.is_some() {
                pc.push((maps.require(Symbol::DieselP, &bus.id, t), 1.0));
                qc.push((maps.require(Symbol::DieselQ, &bus.id, t), 1.0));
            }
            if spec.wind.bus == bus.id {
                pc.push((maps.require(Symbol::WindSurplusP, "", t), 1.0));
                qc.push((maps.require(Symbol::WindSurplusQ, "", t), 1.0));
            }
            if spec.hydrogen.power_bus == bus.id {
                pc.push((maps.require(Symbol::HydrogenInjP, "", t), 1.0));
                qc.push((maps.require(Symbol::HydrogenInjQ, "", t), 1.0));
            }
            for node in &spec.water.nodes {
                if let Some(d) = &node.desalination {
                    if d.power_bus == bus.id {
                        pc.push((maps.require(Symbol::DesalPower, &node.id, t), -1.0));
                    }
                }
            }
            for pipe in &spec.water.pipes {
                if let Some(pm) = &pipe.pump {
                    if pm.power_bus == bus.id {
                        pc.push((maps.require(Symbol::PumpPower, &pipe.id, t), -1.0));
                    }
                }
            }
            b.add_row(
                pc,
                Relation::Eq,
                ctx.scenario.load_p(&bus.id, t) / base,
                tag(EquationId::ActiveBalance, &bus.id, t),
            )?;
            b.add_row(
                qc,
                Relation::Eq,
                ctx.scenario.load_q(&bus.id, t) / base,
                tag(EquationId::ReactiveBalance, &bus.id, t),
            )?;
        }

        // farm inverter bounds the grid injection
        b.add_soc(
            AffineExpr::constant(spec.wind.inverter_mva / base),
            vec![
                AffineExpr::term(maps.require(Symbol::WindSurplusP, "", t), 1.0),
                AffineExpr::term(maps.require(Symbol::WindSurplusQ, "", t), 1.0),
            ],
            tag(EquationId::WindInverter, "", t).reducible(),
        )?;
    }
    Ok(())
}
