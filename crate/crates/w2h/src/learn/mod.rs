//! Offline strategy learning: dataset generation from exact solves,
//! strategy fingerprints, decision-tree training, and single- or
//! multi-stage prediction.
//!
//! A *strategy* is the pair (optimal binary assignment, active
//! inequality set) of one solved instance, encoded as bit vectors in the
//! canonical layouts fixed by [`IndexMaps`](crate::model::IndexMaps) and
//! [`ConicProgram::reducible_tags`]. Sampling stops by the Good-Turing
//! missing-mass rule: the probability that a fresh instance reveals an
//! unseen strategy is estimated by `N1/N` (strategies seen exactly once
//! over samples drawn).

mod cart;
mod fse;
mod io;

pub use cart::{CartParams, TrainedCart};
pub use fse::{
    build_stages, evaluate_accuracy, order_stages, order_stages_first_only, predict_acivp,
    predict_fse, train_cart_on, train_fse, AccuracyReport, MultiStagePredictor, StageDesign,
    StageGroup, SubPredictor, TargetSlice,
};

use std::collections::HashMap;

use thiserror::Error;

use crate::bnb::{solve_misocp, MixedSolution, MixedStatus};
use crate::conic::{ConicProgram, ConstraintTag};
use crate::model::{assemble, BinaryKind, IndexMaps, Scenario, SystemSpec};
use crate::scenario::{sample_scenario, GeneratorConfig};
use crate::solver::extract_active_set;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("binary variable {0} is not integral within tolerance")]
    NonIntegralBinary(usize),
    #[error("feature or target layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("stage groups must partition the target bits")]
    OverlappingStages,
    #[error("mixed-integer solve failed for scenario {0}")]
    SolveFailed(u64),
    #[error("spec error: {0}")]
    Spec(#[from] crate::model::SpecError),
    #[error("parse error at line {0}: {1}")]
    Parse(usize, String),
}

/// One strategy fingerprint: binary assignment bits in the
/// `IndexMaps::binaries` layout, active-set bits over the reducible tags
/// in program order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StrategyBits {
    pub binaries: Vec<u8>,
    pub active: Vec<u8>,
}

/// Target-side layout of a dataset: which binary each bit is, and which
/// constraint tag each active bit refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLayout {
    pub binaries: Vec<(BinaryKind, String, usize)>,
    pub reducible_tags: Vec<ConstraintTag>,
    pub steps: usize,
}

impl TargetLayout {
    pub fn n_bits(&self) -> usize {
        self.binaries.len() + self.reducible_tags.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scenario_id: u64,
    pub features: Vec<f64>,
    /// index into [`StrategyDataset::strategies`]
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyDataset {
    pub feature_names: Vec<String>,
    pub layout: TargetLayout,
    /// deduplicated strategies; a sample's label indexes this list
    pub strategies: Vec<StrategyBits>,
    pub samples: Vec<Sample>,
}

impl StrategyDataset {
    /// Full target bits of a sample.
    pub fn bits_of(&self, sample: &Sample) -> Vec<u8> {
        let s = &self.strategies[sample.label];
        s.binaries.iter().chain(s.active.iter()).copied().collect()
    }

    /// Deterministic 80/20 split on hashed scenario ids; returns
    /// (training rows, holdout rows).
    pub fn split_holdout(&self) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut hold = Vec::new();
        for (row, s) in self.samples.iter().enumerate() {
            if splitmix(s.scenario_id ^ 0x5DEECE66D) % 5 == 0 {
                hold.push(row);
            } else {
                train.push(row);
            }
        }
        (train, hold)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Input features of one instance: realized/forecast series flattened in
/// spec order — wind speed, active load per bus, water demand per node,
/// hydrogen demand.
pub fn features_of(spec: &SystemSpec, scenario: &Scenario) -> (Vec<f64>, Vec<String>) {
    let t_steps = scenario.steps;
    let mut values = Vec::new();
    let mut names = Vec::new();
    for (t, v) in scenario.wind_speed.iter().enumerate() {
        values.push(*v);
        names.push(format!("wind@{t}"));
    }
    for bus in &spec.power.buses {
        for t in 0..t_steps {
            values.push(scenario.load_p(&bus.id, t));
            names.push(format!("pl[{}]@{t}", bus.id));
        }
    }
    for node in &spec.water.nodes {
        for t in 0..t_steps {
            values.push(scenario.demand(&node.id, t));
            names.push(format!("d[{}]@{t}", node.id));
        }
    }
    for (t, v) in scenario.hydrogen_demand.iter().enumerate() {
        values.push(*v);
        names.push(format!("hd@{t}"));
    }
    (values, names)
}

/// Reads the strategy fingerprint out of an exact solution: binaries in
/// the index-map layout, active set extracted from the embedded solve of
/// the fixed program.
pub fn extract_strategy(
    sol: &MixedSolution,
    fixed_prog: &ConicProgram,
    maps: &IndexMaps,
    eps: f64,
) -> Result<StrategyBits, LearnError> {
    let cont = sol.continuous.as_ref().ok_or(LearnError::EmptyDataset)?;
    let mut binaries = Vec::with_capacity(maps.binaries.len());
    for meta in &maps.binaries {
        let v = *sol.binaries.get(&meta.var).ok_or(LearnError::NonIntegralBinary(meta.var))?;
        let x = cont.primal[meta.var];
        if (x - v as f64).abs() > 1e-6 {
            return Err(LearnError::NonIntegralBinary(meta.var));
        }
        binaries.push(v);
    }
    let active = extract_active_set(cont, fixed_prog, eps);
    let bits = fixed_prog
        .reducible_tags()
        .into_iter()
        .map(|tag| u8::from(active.tags.contains(tag)))
        .collect();
    Ok(StrategyBits { binaries, active: bits })
}

pub struct GenOptions {
    pub target_miss_prob: f64,
    pub max_n: usize,
    pub workers: usize,
    /// slack tolerance for active-set extraction
    pub eps_active: f64,
    pub node_limit: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            target_miss_prob: 0.05,
            max_n: 2000,
            workers: 1,
            eps_active: 1e-6,
            node_limit: 200_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenReport {
    pub samples: usize,
    pub distinct: usize,
    /// Good-Turing missing mass N1/N at the stop
    pub missing_mass: f64,
    /// scenario ids skipped because the exact solve failed
    pub skipped: Vec<u64>,
}

/// Scenario ids are processed in fixed-size batches so the stopping
/// decision does not depend on the worker count or scheduling.
const GEN_BATCH: usize = 8;

/// Generates a labeled dataset by exact offline solves. Scenario `k` is
/// drawn with `cfg.seed + k`; sampling continues until the Good-Turing
/// missing mass drops to the target or `max_n` samples are collected.
pub fn generate_dataset(
    spec: &SystemSpec,
    cfg: &GeneratorConfig,
    opts: &GenOptions,
) -> Result<(StrategyDataset, GenReport), LearnError> {
    spec.validate()?;
    let tech = spec.hydrogen.technology.clone();

    let solve_one = |id: u64| -> Result<(Vec<f64>, Vec<String>, StrategyBits, TargetLayout), u64> {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(id);
        let (scenario, _) = sample_scenario(&c, spec);
        let (prog, maps) = assemble(spec, &scenario, &tech, None).map_err(|_| id)?;
        let sol = solve_misocp(&prog, 0.0, opts.node_limit).map_err(|_| id)?;
        if sol.status != MixedStatus::Optimal {
            return Err(id);
        }
        let fixed = prog.fix_binaries(&sol.binaries).map_err(|_| id)?;
        let bits = extract_strategy(&sol, &fixed, &maps, opts.eps_active).map_err(|_| id)?;
        let (features, names) = features_of(spec, &scenario);
        let layout = TargetLayout {
            binaries: maps
                .binaries
                .iter()
                .map(|m| (m.kind, m.asset.clone(), m.step))
                .collect(),
            reducible_tags: fixed.reducible_tags().into_iter().cloned().collect(),
            steps: scenario.steps,
        };
        Ok((features, names, bits, layout))
    };

    let mut dataset: Option<StrategyDataset> = None;
    let mut label_of: HashMap<StrategyBits, usize> = HashMap::new();
    let mut label_counts: Vec<usize> = Vec::new();
    let mut report = GenReport::default();
    let mut next_id = 0u64;

    'outer: while report.samples < opts.max_n {
        let batch: Vec<u64> =
            (0..GEN_BATCH as u64).map(|k| next_id + k).collect();
        next_id += GEN_BATCH as u64;

        let workers = opts.workers.max(1).min(batch.len());
        let results: Vec<Result<_, u64>> = if workers <= 1 {
            batch.iter().map(|&id| solve_one(id)).collect()
        } else {
            // split the batch across scoped workers; merge preserves id order
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .chunks(batch.len().div_ceil(workers))
                    .map(|chunk| {
                        let solve_one = &solve_one;
                        scope.spawn(move || {
                            chunk.iter().map(|&id| solve_one(id)).collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
            })
        };

        for (k, res) in results.into_iter().enumerate() {
            if report.samples >= opts.max_n {
                break;
            }
            let id = batch[k];
            match res {
                Err(id) => report.skipped.push(id),
                Ok((features, names, bits, layout)) => {
                    let ds = dataset.get_or_insert_with(|| StrategyDataset {
                        feature_names: names.clone(),
                        layout: layout.clone(),
                        strategies: Vec::new(),
                        samples: Vec::new(),
                    });
                    if ds.feature_names.len() != features.len() {
                        return Err(LearnError::LayoutMismatch(
                            "feature length varies across scenarios".into(),
                        ));
                    }
                    let label = match label_of.get(&bits) {
                        Some(&l) => {
                            label_counts[l] += 1;
                            l
                        }
                        None => {
                            let l = ds.strategies.len();
                            ds.strategies.push(bits.clone());
                            label_of.insert(bits, l);
                            label_counts.push(1);
                            l
                        }
                    };
                    ds.samples.push(Sample { scenario_id: id, features, label });
                    report.samples += 1;
                }
            }
        }

        if report.samples > 0 {
            let n1 = label_counts.iter().filter(|&&c| c == 1).count();
            report.missing_mass = n1 as f64 / report.samples as f64;
            report.distinct = label_counts.len();
            if report.missing_mass <= opts.target_miss_prob {
                break 'outer;
            }
        }
        // guard against a sampler whose instances never solve
        if report.samples == 0 && report.skipped.len() >= 4 * GEN_BATCH {
            return Err(LearnError::SolveFailed(report.skipped[0]));
        }
    }

    let ds = dataset.ok_or(LearnError::EmptyDataset)?;
    Ok((ds, report))
}
