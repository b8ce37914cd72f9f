mod common;

use std::collections::{BTreeMap, HashSet};

use w2h::learn::{
    build_stages, evaluate_accuracy, generate_dataset, train_cart_on, train_fse, CartParams,
    GenOptions, MultiStagePredictor, StageDesign, StrategyDataset,
};
use w2h::model::SystemSpec;
use w2h::scenario::GeneratorConfig;
use w2h::solver::{solve_socp, SolveStatus};

fn load_spec() -> SystemSpec {
    let path = format!("{}/../../specs/micro.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_cfg(steps: usize, seed: u64) -> GeneratorConfig {
    let path = format!("{}/../../specs/gen-default.json", env!("CARGO_MANIFEST_DIR"));
    let mut cfg: GeneratorConfig =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    cfg.steps = steps;
    cfg.seed = seed;
    cfg
}

/// Shared fixture: one small dataset generated once.
fn dataset() -> &'static (StrategyDataset, w2h::learn::GenReport) {
    use std::sync::OnceLock;
    static DS: OnceLock<(StrategyDataset, w2h::learn::GenReport)> = OnceLock::new();
    DS.get_or_init(|| {
        let spec = load_spec();
        let opts = GenOptions { max_n: 40, target_miss_prob: 0.01, workers: 2, ..Default::default() };
        generate_dataset(&spec, &gen_cfg(6, 100), &opts).unwrap()
    })
}

#[test]
fn dataset_has_expected_shape() {
    let (ds, report) = dataset();
    assert_eq!(report.samples, 40);
    assert_eq!(ds.samples.len(), 40);
    assert!(report.distinct >= 2, "want strategy diversity, got {}", report.distinct);
    assert_eq!(ds.layout.binaries.len(), 4 * 6);
    // features: wind + 2 bus loads + 3 node demands + hydrogen, 6 steps each
    assert_eq!(ds.feature_names.len(), 6 * (1 + 2 + 3 + 1));
    // scenario ids are ordered
    let ids: Vec<u64> = ds.samples.iter().map(|s| s.scenario_id).collect();
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    assert_eq!(ids, sorted);
}

#[test]
fn max_n_one_gives_unit_missing_mass() {
    let spec = load_spec();
    let opts = GenOptions { max_n: 1, ..Default::default() };
    let (ds, report) = generate_dataset(&spec, &gen_cfg(6, 100), &opts).unwrap();
    assert_eq!(ds.samples.len(), 1);
    assert_eq!(report.missing_mass, 1.0);
}

#[test]
fn constant_sampler_converges_to_zero_missing_mass() {
    // amplitude and noise zero: every scenario is identical
    let spec = load_spec();
    let mut cfg = gen_cfg(4, 55);
    for shape in [&mut cfg.wind, &mut cfg.load, &mut cfg.water, &mut cfg.hydrogen] {
        shape.amplitude = 0.0;
        shape.sigma = 0.0;
    }
    let opts = GenOptions { max_n: 24, target_miss_prob: 0.05, ..Default::default() };
    let (ds, report) = generate_dataset(&spec, &cfg, &opts).unwrap();
    assert_eq!(report.distinct, 1);
    assert!(report.missing_mass <= 0.05, "mass {}", report.missing_mass);
    assert!(ds.samples.len() < 24, "stopping rule should fire early");
}

#[test]
fn strategy_replay_reproduces_the_optimum() {
    // feed an extracted strategy back through fix + reduce and re-solve
    let spec = load_spec();
    let (ds, _) = dataset();
    let tech = spec.hydrogen.technology.clone();
    for sample in ds.samples.iter().take(4) {
        let mut cfg = gen_cfg(6, 100);
        cfg.seed += sample.scenario_id;
        let (scenario, _) = w2h::scenario::sample_scenario(&cfg, &spec);
        let (prog, maps) = w2h::model::assemble(&spec, &scenario, &tech, None).unwrap();
        let full = w2h::bnb::solve_misocp(&prog, 0.0, 200_000).unwrap();

        let bits = &ds.strategies[sample.label];
        let assignment: BTreeMap<usize, u8> = maps
            .binaries
            .iter()
            .zip(&bits.binaries)
            .map(|(m, &v)| (m.var, v))
            .collect();
        let fixed = prog.fix_binaries(&assignment).unwrap();
        let active: HashSet<_> = fixed
            .reducible_tags()
            .into_iter()
            .zip(&bits.active)
            .filter(|(_, &v)| v == 1)
            .map(|(t, _)| t.clone())
            .collect();
        let reduced = fixed.reduce_to_active(&active).unwrap();
        let sol = solve_socp(&reduced, 1e-8).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let rel = (sol.objective - full.objective).abs() / (1.0 + full.objective.abs());
        assert!(rel <= 1e-6, "scenario {}: {} vs {}", sample.scenario_id, sol.objective, full.objective);
    }
}

#[test]
fn acivp_equals_single_stage_fse() {
    let (ds, _) = dataset();
    let rows: Vec<usize> = (0..ds.samples.len()).collect();
    let params = CartParams::default();
    let a = train_cart_on(ds, params, &rows).unwrap();
    let groups = build_stages(&StageDesign::Acivp, &ds.layout).unwrap();
    let b = train_fse(ds, StageDesign::Acivp, groups, params, &rows).unwrap();
    for s in &ds.samples {
        assert_eq!(
            a.predict_bits(&s.features).unwrap(),
            b.predict_bits(&s.features).unwrap()
        );
    }
    assert_eq!(a.subs.len(), 1);
}

#[test]
fn fully_grown_trees_memorize_training_data() {
    let (ds, _) = dataset();
    let rows: Vec<usize> = (0..ds.samples.len()).collect();
    for design in [StageDesign::Acivp, StageDesign::Physical, StageDesign::Coupled] {
        let groups = build_stages(&design, &ds.layout).unwrap();
        let pred = train_fse(ds, design, groups, CartParams::default(), &rows).unwrap();
        let report = evaluate_accuracy(&pred, ds, &rows).unwrap();
        assert_eq!(report.exact_strategy, 1.0, "{design:?} failed to memorize");
    }
}

#[test]
fn teacher_forcing_dominates_free_running_per_stage() {
    let (ds, _) = dataset();
    let (train, hold) = ds.split_holdout();
    assert!(!hold.is_empty() && !train.is_empty());
    let groups = build_stages(&StageDesign::Physical, &ds.layout).unwrap();
    let pred =
        train_fse(ds, StageDesign::Physical, groups, CartParams::default(), &train).unwrap();
    let report = evaluate_accuracy(&pred, ds, &hold).unwrap();
    for ((name, free), (_, forced)) in report.per_group.iter().zip(&report.teacher_per_group) {
        assert!(
            forced + 1e-12 >= *free,
            "stage {name}: teacher-forced {forced} < free-running {free}"
        );
    }
}

#[test]
fn dataset_text_round_trips() {
    let (ds, _) = dataset();
    let text = ds.to_text();
    let parsed = StrategyDataset::from_text(&text).unwrap();
    assert_eq!(*ds, parsed);
    assert_eq!(text, parsed.to_text());
}

#[test]
fn predictor_text_round_trips() {
    let (ds, _) = dataset();
    let rows: Vec<usize> = (0..ds.samples.len()).collect();
    for design in [StageDesign::Physical, StageDesign::Time, StageDesign::Count(3)] {
        let groups = build_stages(&design, &ds.layout).unwrap();
        let pred = train_fse(ds, design, groups, CartParams::default(), &rows).unwrap();
        let text = pred.to_text();
        let parsed = MultiStagePredictor::from_text(&text).unwrap();
        assert_eq!(pred, parsed);
        assert_eq!(text, parsed.to_text());
        for s in ds.samples.iter().take(5) {
            assert_eq!(
                pred.predict_bits(&s.features).unwrap(),
                parsed.predict_bits(&s.features).unwrap()
            );
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = load_spec();
    let opts = GenOptions { max_n: 10, workers: 2, ..Default::default() };
    let (a, ra) = generate_dataset(&spec, &gen_cfg(6, 42), &opts).unwrap();
    let opts1 = GenOptions { max_n: 10, workers: 1, ..Default::default() };
    let (b, rb) = generate_dataset(&spec, &gen_cfg(6, 42), &opts1).unwrap();
    assert_eq!(a, b, "dataset content must not depend on worker count");
    assert_eq!(ra, rb);
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn prediction_on_perturbed_features_stays_in_leaf() {
    let (ds, _) = dataset();
    let rows: Vec<usize> = (0..ds.samples.len()).collect();
    let pred = train_cart_on(ds, CartParams::default(), &rows).unwrap();
    let s = &ds.samples[0];
    let base = pred.predict_bits(&s.features).unwrap();
    let mut nudged = s.features.clone();
    for v in nudged.iter_mut() {
        *v += 1e-9;
    }
    assert_eq!(base, pred.predict_bits(&nudged).unwrap());
}
