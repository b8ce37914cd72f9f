mod common;

use std::collections::BTreeMap;

use w2h::bnb::{solve_misocp, MixedStatus};
use w2h::model::{assemble, wind_power, SystemSpec, Technology, WindFarm};
use w2h::scenario::{sample_scenario, GeneratorConfig};
use w2h::solver::{solve_socp, SolveStatus};

fn load_spec(name: &str) -> SystemSpec {
    let path = format!("{}/../../specs/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    serde_json::from_str(&text).unwrap()
}

fn gen_config(steps: usize, seed: u64) -> GeneratorConfig {
    let path = format!("{}/../../specs/gen-default.json", env!("CARGO_MANIFEST_DIR"));
    let mut cfg: GeneratorConfig =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    cfg.steps = steps;
    cfg.seed = seed;
    cfg
}

#[test]
fn wind_curve_matches_hand_values() {
    let farm = WindFarm {
        bus: "b".into(),
        v_cut_in: 3.0,
        v_rated: 12.0,
        v_cut_out: 25.0,
        rated_mw: 2.0,
        inverter_mva: 3.0,
    };
    assert_eq!(wind_power(0.0, &farm), 0.0);
    assert_eq!(wind_power(12.0, &farm), 2.0);
    assert_eq!(wind_power(18.0, &farm), 2.0);
    assert_eq!(wind_power(25.1, &farm), 0.0);
    // cubic ramp: 2 * (4.5/9)^3 = 0.25
    let v = wind_power(7.5, &farm);
    assert!((v - 0.25).abs() < 1e-12, "got {v}");
}

#[test]
fn wind_curve_is_continuous_below_cutout() {
    let farm = WindFarm {
        bus: "b".into(),
        v_cut_in: 3.0,
        v_rated: 12.0,
        v_cut_out: 25.0,
        rated_mw: 2.0,
        inverter_mva: 3.0,
    };
    for k in 0..2499 {
        let v = k as f64 * 0.01;
        let lo = wind_power(v, &farm);
        let hi = wind_power(v + 0.01, &farm);
        assert!((hi - lo).abs() < 0.01, "jump at v={v}");
    }
    assert_eq!(wind_power(2.9, &farm), 0.0);
    assert_eq!(wind_power(25.0001, &farm), 0.0);
}

#[test]
fn micro_spec_assembles_and_relaxation_solves() {
    let spec = load_spec("micro");
    spec.validate().unwrap();
    let (scenario, _) = sample_scenario(&gen_config(6, 7), &spec);
    let (prog, maps) =
        assemble(&spec, &scenario, &spec.hydrogen.technology.clone(), None).unwrap();
    assert_eq!(maps.binaries.len(), 4 * 6);

    // continuous relaxation must be feasible
    let mut relaxed = prog.clone();
    for &b in &prog.binaries {
        relaxed.variables[b].kind = w2h::conic::VarKind::Continuous;
    }
    relaxed.binaries.clear();
    let sol = solve_socp(&relaxed, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal, "relaxation: {:?}", sol.kkt_residuals);
}

#[test]
fn micro_spec_full_solve_is_feasible_and_conserves_hydrogen() {
    let spec = load_spec("micro");
    let (scenario, _) = sample_scenario(&gen_config(6, 3), &spec);
    let (prog, maps) =
        assemble(&spec, &scenario, &spec.hydrogen.technology.clone(), None).unwrap();

    let sol = solve_misocp(&prog, 0.0, 200_000).unwrap();
    assert_eq!(sol.status, MixedStatus::Optimal);
    let x = &sol.continuous.as_ref().unwrap().primal;
    assert!(prog.max_violation(x) < 1e-7, "violation {:.2e}", prog.max_violation(x));

    // telescoped tank balance: V_T - V_0 equals accumulated flows
    use w2h::model::Symbol;
    let t_end = scenario.steps;
    let mut expect = x[maps.require(Symbol::HydrogenTankVolume, "", 0)];
    for t in 0..t_end {
        let hwe = x[maps.require(Symbol::HydrogenProd, "", t)];
        let hfc = x[maps.require(Symbol::FuelCellH, "", t)];
        let chi = x[maps.require(Symbol::CarbonReused, "", t)];
        expect = (1.0 - spec.hydrogen.dissipation) * expect + hwe
            - hfc
            - scenario.hydrogen_demand[t]
            - 182.0 * chi;
    }
    let got = x[maps.require(Symbol::HydrogenTankVolume, "", t_end)];
    assert!((got - expect).abs() < 1e-8, "tank drift {got} vs {expect}");

    // mutual exclusion on the incumbent
    for t in 0..t_end {
        let we = x[maps.require(Symbol::ElectrolysisOn, "", t)];
        let fc = x[maps.require(Symbol::FuelCellOn, "", t)];
        assert!(we + fc <= 1.0 + 1e-9);
    }
}

#[test]
fn city13_relaxation_solves() {
    let spec = load_spec("city13");
    spec.validate().unwrap();
    let (scenario, _) = sample_scenario(&gen_config(4, 11), &spec);
    let (prog, _) = assemble(&spec, &scenario, &spec.hydrogen.technology.clone(), None).unwrap();

    let mut relaxed = prog.clone();
    for &b in &prog.binaries {
        relaxed.variables[b].kind = w2h::conic::VarKind::Continuous;
    }
    relaxed.binaries.clear();
    let sol = solve_socp(&relaxed, 1e-7).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal, "relaxation: {:?}", sol.kkt_residuals);
}

#[test]
fn pem_program_has_strictly_fewer_rows_than_ael() {
    let spec = load_spec("micro");
    let (scenario, _) = sample_scenario(&gen_config(12, 1), &spec);
    let ael = spec.hydrogen.technology.clone();
    let (prog_ael, _) = assemble(&spec, &scenario, &ael, None).unwrap();
    let (prog_pem, _) = assemble(&spec, &scenario, &Technology::Pem, None).unwrap();
    assert!(prog_pem.rows.len() < prog_ael.rows.len());
    assert_eq!(prog_pem.socs.len(), prog_ael.socs.len());
}

#[test]
fn assembled_program_round_trips_through_text() {
    let spec = load_spec("micro");
    let (scenario, _) = sample_scenario(&gen_config(3, 5), &spec);
    let (prog, _) = assemble(&spec, &scenario, &spec.hydrogen.technology.clone(), None).unwrap();
    let text = prog.to_text();
    let parsed = w2h::ConicProgram::from_text(&text).unwrap();
    assert_eq!(prog, parsed);
}

#[test]
fn prefix_pins_electrolyzer_status() {
    let spec = load_spec("micro");
    let (scenario, _) = sample_scenario(&gen_config(14, 9), &spec);
    let tech = Technology::Ael { downtime_steps: 12 };
    let prefix = vec![1u8; 12];
    let (prog, maps) = assemble(&spec, &scenario, &tech, Some(&prefix)).unwrap();
    let sol = solve_misocp(&prog, 0.0, 400_000).unwrap();
    assert_eq!(sol.status, MixedStatus::Optimal);
    for t in 0..12 {
        let idx = maps.require(w2h::model::Symbol::ElectrolysisOn, "", t);
        assert_eq!(sol.binaries[&idx], 1, "step {t} not pinned");
    }
}

/// Counting oracle: tallies expected variable and row counts per asset
/// template, independently of the builders.
#[test]
fn counts_match_template_tally() {
    let spec = load_spec("city13");
    let t = 5usize;
    let (scenario, _) = sample_scenario(&gen_config(t, 2), &spec);
    let (prog, _) = assemble(&spec, &scenario, &spec.hydrogen.technology.clone(), None).unwrap();

    let buses = spec.power.buses.len();
    let lines = spec.power.lines.len();
    let diesels = spec.power.buses.iter().filter(|b| b.diesel.is_some()).count();
    let nodes = spec.water.nodes.len();
    let pipes = spec.water.pipes.len();
    let pumps = spec.water.pipes.iter().filter(|p| p.pump.is_some()).count();
    let plain = pipes - pumps;
    let desals = spec.water.nodes.iter().filter(|n| n.desalination.is_some()).count();
    let tanks = spec.water.nodes.iter().filter(|n| n.tank.is_some()).count();
    let prv_feeds: usize = spec
        .water
        .nodes
        .iter()
        .filter(|n| n.prv.is_some())
        .map(|n| spec.water.pipes.iter().filter(|p| p.to == n.id).count())
        .sum();
    let fc_floor = usize::from(spec.hydrogen.fuel_cell.h_min_kg > 0.0);

    // variables: per-step templates plus the two tank series
    let per_step_cont = buses          // voltage
        + 2 * diesels                  // diesel p, q
        + 3 * lines                    // current, line p, line q
        + 4                            // psw qsw pt pwedg
        + 4                            // phs qhs pfc pwe
        + nodes                        // heads
        + pipes                        // flows
        + tanks                        // tank flow
        + 2 * desals                   // desal flow + power
        + 2 * pumps                    // pump power + gain head
        + 3                            // hwe dwe hfc
        + 5; // cdg ce cs cchi ichi
    let per_step_bin = pumps + desals + 2;
    let want_vars = t * (per_step_cont + per_step_bin) + (tanks + 1) * (t + 1);
    assert_eq!(prog.num_vars(), want_vars);

    // binaries
    assert_eq!(prog.binaries.len(), t * per_step_bin);

    // linear rows per step
    let per_step_rows = 1              // net transfer
        + 1                            // wedg cap
        + 1                            // hydrogen injection link
        + lines                        // voltage drops
        + 2 * buses                    // nodal balances
        + nodes                        // water balances
        + 4 * plain                    // head-loss hull
        + 4 * pumps                    // head upper, flow gate, curve link, power upper
        + tanks                        // volume recursion
        + 2 * prv_feeds                // valve bounds
        + 5 * desals                   // 4 segments + gate
        + 4                            // conversions h2: 4a 4b 4c 4d
        + 1 + fc_floor                 // fc cap (+ floor)
        + 2                            // we cap + AEL floor
        + 1                            // mutual exclusion
        + 3; // carbon: from-diesel, split, income
    let tank_head_rows = tanks * (t - 1);
    let downtime: usize = (1..t)
        .map(|step| {
            let ts = match spec.hydrogen.technology {
                Technology::Ael { downtime_steps } => downtime_steps,
                Technology::Pem => 0,
            };
            (1..=ts).take_while(|l| step + l < t).count()
        })
        .sum();
    assert_eq!(prog.rows.len(), t * per_step_rows + tank_head_rows + downtime);

    // cone rows per step: line cones + caps, wind inverter, hydrogen
    // inverter, pump friction + power (quadratic curve term present)
    let quad_pumps = spec
        .water
        .pipes
        .iter()
        .filter(|p| p.pump.as_ref().is_some_and(|pm| pm.a1 > 0.0))
        .count();
    let want_socs = t * (2 * lines + 1 + 1 + pumps + quad_pumps);
    assert_eq!(prog.socs.len(), want_socs);
}

#[test]
fn fixing_then_extending_stays_feasible_in_original() {
    // every feasible point of the fixed program extends to the original
    for seed in [2u64, 8] {
        let prog = common::random_misocp(9000 + seed, 6, 6);
        let assignment = common::assignment(&prog, (seed * 23 % 64) as u32);
        let fixed = match prog.fix_binaries(&assignment) {
            Ok(f) => f,
            Err(_) => continue,
        };
        // sample candidate points from box + rows of the fixed program;
        // verify classification agrees with the original intersected with
        // the assignment
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        for _ in 0..100 {
            let mut x = vec![0.0; prog.num_vars()];
            for v in &prog.variables {
                let lo = v.lower.max(-10.0);
                let hi = v.upper.min(10.0);
                x[v.index] = rng.gen_range(lo..=hi);
            }
            for (&idx, &val) in &assignment {
                x[idx] = val as f64;
            }
            let in_fixed = fixed.max_violation(&x) <= 1e-9;
            let in_orig = prog.max_violation(&x) <= 1e-9;
            assert_eq!(in_fixed, in_orig);
            checked += 1;
        }
        assert_eq!(checked, 100);
    }
}
