//! Hydrogen, carbon-capture, and methanation rows: production and water
//! conversions, tank balance with the methanation hydrogen draw, the
//! shared inverter cone, binary gating with the AEL minimum load, mutual
//! exclusion, switching lockout, and chemical income.

use crate::conic::{AffineExpr, ConicError, EquationId, ProgramBuilder, Relation};

use super::{tag, BuildCtx, IndexMaps, Symbol, Technology};

/// kg of hydrogen consumed per tonne of CO2 recycled by methanation
/// (Sabatier stoichiometry: 182 g per kg of carbon dioxide).
const H2_KG_PER_TON_CO2: f64 = 182.0;

/// AEL minimum operating fraction of the electrolyzer rating.
const AEL_MIN_LOAD: f64 = 0.2;

pub fn build_hydrogen_ccs(
    ctx: &BuildCtx,
    b: &mut ProgramBuilder,
    maps: &IndexMaps,
    tech: &Technology,
    fixed_we_prefix: Option<&[u8]>,
) -> Result<(), ConicError> {
    let spec = ctx.spec;
    let h = &spec.hydrogen;
    let steps = ctx.scenario.steps;
    let mwh = ctx.base * ctx.step_h; // p.u. power over one step -> MWh

    for t in 0..steps {
        let pwe = maps.require(Symbol::ElectrolysisP, "", t);
        let pfc = maps.require(Symbol::FuelCellP, "", t);
        let qhs = maps.require(Symbol::HydrogenInjQ, "", t);
        let hwe = maps.require(Symbol::HydrogenProd, "", t);
        let dwe = maps.require(Symbol::ElectrolysisWater, "", t);
        let hfc = maps.require(Symbol::FuelCellH, "", t);
        let bwe = maps.require(Symbol::ElectrolysisOn, "", t);
        let bfc = maps.require(Symbol::FuelCellOn, "", t);

        // production: kg of hydrogen from the energy drawn
        b.add_row(
            vec![(hwe, 1.0), (pwe, -h.kg_per_mwh * mwh)],
            Relation::Eq,
            0.0,
            tag(EquationId::ElectrolysisConversion, "", t),
        )?;
        // water consumed by electrolysis
        b.add_row(
            vec![(dwe, 1.0), (hwe, -h.water_m3_per_kg)],
            Relation::Eq,
            0.0,
            tag(EquationId::ElectrolysisWater, "", t),
        )?;
        // tank balance with dissipation, demand, and the methanation draw
        b.add_row(
            vec![
                (maps.require(Symbol::HydrogenTankVolume, "", t + 1), 1.0),
                (maps.require(Symbol::HydrogenTankVolume, "", t), -(1.0 - h.dissipation)),
                (hwe, -1.0),
                (hfc, 1.0),
                (maps.require(Symbol::CarbonReused, "", t), H2_KG_PER_TON_CO2),
            ],
            Relation::Eq,
            -ctx.scenario.hydrogen_demand[t],
            tag(EquationId::HydrogenTankBalance, "", t),
        )?;
        // fuel-cell conversion back to power
        b.add_row(
            vec![(pfc, mwh), (hfc, -h.mwh_per_kg_fc)],
            Relation::Eq,
            0.0,
            tag(EquationId::FuelCellConversion, "", t),
        )?;
        // shared inverter: ||(pwe - pfc, qhs)|| <= rating
        b.add_soc(
            AffineExpr::constant(h.inverter_mva / ctx.base),
            vec![
                AffineExpr::new(vec![(pwe, 1.0), (pfc, -1.0)], 0.0),
                AffineExpr::term(qhs, 1.0),
            ],
            tag(EquationId::HydrogenInverter, "", t).reducible(),
        )?;

        // gating: capacity always, minimum load only for AEL
        let pwe_cap = h.electrolyzer_max_mw / ctx.base;
        b.add_row(
            vec![(pwe, 1.0), (bwe, -pwe_cap)],
            Relation::Le,
            0.0,
            tag(EquationId::ElectrolysisCap, "", t).reducible(),
        )?;
        if matches!(tech, Technology::Ael { .. }) {
            b.add_row(
                vec![(bwe, AEL_MIN_LOAD * pwe_cap), (pwe, -1.0)],
                Relation::Le,
                0.0,
                tag(EquationId::ElectrolysisFloor, "", t).reducible(),
            )?;
        }
        b.add_row(
            vec![(hfc, 1.0), (bfc, -h.fuel_cell.h_max_kg)],
            Relation::Le,
            0.0,
            tag(EquationId::FuelCellCap, "", t).reducible(),
        )?;
        if h.fuel_cell.h_min_kg > 0.0 {
            b.add_row(
                vec![(bfc, h.fuel_cell.h_min_kg), (hfc, -1.0)],
                Relation::Le,
                0.0,
                tag(EquationId::FuelCellFloor, "", t).reducible(),
            )?;
        }
        // electrolysis and fuel cell never run together
        b.add_row(
            vec![(bwe, 1.0), (bfc, 1.0)],
            Relation::Le,
            1.0,
            tag(EquationId::MutualExclusion, "", t),
        )?;

        // carbon chain
        let cdg = maps.require(Symbol::CarbonProduced, "", t);
        let mut emit_coeffs = vec![(cdg, 1.0)];
        for bus in &spec.power.buses {
            if bus.diesel.is_some() {
                emit_coeffs
                    .push((maps.require(Symbol::DieselP, &bus.id, t), -spec.ccs.tons_co2_per_mwh * mwh));
            }
        }
        emit_coeffs
            .push((maps.require(Symbol::WedgP, "", t), -spec.ccs.tons_co2_per_mwh * mwh));
        b.add_row(emit_coeffs, Relation::Eq, 0.0, tag(EquationId::CarbonFromDiesel, "", t))?;

        b.add_row(
            vec![
                (maps.require(Symbol::CarbonEmitted, "", t), 1.0),
                (cdg, -1.0),
                (maps.require(Symbol::CarbonStored, "", t), 1.0),
                (maps.require(Symbol::CarbonReused, "", t), 1.0),
            ],
            Relation::Eq,
            0.0,
            tag(EquationId::CarbonSplit, "", t),
        )?;

        // methanation income
        b.add_row(
            vec![
                (maps.require(Symbol::ChemIncome, "", t), 1.0),
                (
                    maps.require(Symbol::CarbonReused, "", t),
                    -spec.ccs.chem_price * spec.ccs.chem_per_ton_co2,
                ),
            ],
            Relation::Eq,
            0.0,
            tag(EquationId::ChemicalIncome, "", t),
        )?;
    }

    // AEL switching lockout: after an on->off transition the unit stays
    // off for the next `downtime_steps` steps
    if let Technology::Ael { downtime_steps } = tech {
        for t in 1..steps {
            let prev = maps.require(Symbol::ElectrolysisOn, "", t - 1);
            let cur = maps.require(Symbol::ElectrolysisOn, "", t);
            for l in 1..=*downtime_steps {
                if t + l >= steps {
                    break;
                }
                let future = maps.require(Symbol::ElectrolysisOn, "", t + l);
                b.add_row(
                    vec![(prev, 1.0), (cur, -1.0), (future, 1.0)],
                    Relation::Le,
                    1.0,
                    tag(EquationId::Downtime, &format!("l{l}"), t),
                )?;
            }
        }
    }

    // pinned on/off prefix from the rolling horizon
    if let Some(prefix) = fixed_we_prefix {
        for (t, &v) in prefix.iter().enumerate() {
            b.add_row(
                vec![(maps.require(Symbol::ElectrolysisOn, "", t), 1.0)],
                Relation::Eq,
                v as f64,
                tag(EquationId::ElectrolysisPin, "", t),
            )?;
        }
    }
    Ok(())
}
