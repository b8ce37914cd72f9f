//! Stage designs and the chained multi-stage predictor.
//!
//! Every design lowers to the same structure: an ordered chain of target
//! slices, each predicted by one multiclass tree over the distinct
//! sub-patterns of its bits, consuming the input features plus the bits
//! of every earlier slice (ground truth while training, predictions at
//! inference). A design only fixes how the target bits are partitioned
//! and reported:
//!
//! * `Acivp` — one stage holding everything (the single-stage baseline);
//! * `Physical` — pump, desalination, fuel-cell, electrolysis, active
//!   set: five stages;
//! * `Time` — one stage per step plus the active set;
//! * `Count(k)` — `k - 1` equal slices of the binaries plus the active
//!   set;
//! * `Coupled` — fuel cell feeding electrolysis and pumps feeding
//!   desalination as two stages of two chained slices each, then the
//!   active set.

use serde::{Deserialize, Serialize};

use super::cart::{CartParams, TrainedCart};
use super::{LearnError, StrategyBits, StrategyDataset, TargetLayout};
use crate::model::BinaryKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageDesign {
    Acivp,
    Physical,
    Time,
    Count(usize),
    Coupled,
}

impl StageDesign {
    pub fn as_str(&self) -> String {
        match self {
            StageDesign::Acivp => "acivp".into(),
            StageDesign::Physical => "physical".into(),
            StageDesign::Time => "time".into(),
            StageDesign::Count(k) => format!("count:{k}"),
            StageDesign::Coupled => "coupled".into(),
        }
    }

    pub fn parse(s: &str) -> Option<StageDesign> {
        Some(match s {
            "acivp" => StageDesign::Acivp,
            "physical" => StageDesign::Physical,
            "time" => StageDesign::Time,
            "coupled" => StageDesign::Coupled,
            _ => {
                let k = s.strip_prefix("count:")?.parse().ok()?;
                StageDesign::Count(k)
            }
        })
    }
}

/// A contiguous set of target bits predicted by one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSlice {
    pub name: String,
    /// indices into the concatenated target bits (binaries then active)
    pub bits: Vec<usize>,
}

/// A reported stage: one or more chained slices.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGroup {
    pub name: String,
    pub subs: Vec<TargetSlice>,
}

impl StageGroup {
    fn single(name: &str, bits: Vec<usize>) -> StageGroup {
        StageGroup { name: name.into(), subs: vec![TargetSlice { name: name.into(), bits }] }
    }
}

/// Builds the ordered stage groups of a design over a dataset layout.
pub fn build_stages(
    design: &StageDesign,
    layout: &TargetLayout,
) -> Result<Vec<StageGroup>, LearnError> {
    let nb = layout.binaries.len();
    let na = layout.reducible_tags.len();
    let active_bits: Vec<usize> = (nb..nb + na).collect();
    let of_kind = |kind: BinaryKind| -> Vec<usize> {
        layout
            .binaries
            .iter()
            .enumerate()
            .filter(|(_, (k, _, _))| *k == kind)
            .map(|(i, _)| i)
            .collect()
    };

    let groups = match design {
        StageDesign::Acivp => {
            vec![StageGroup::single("all", (0..nb + na).collect())]
        }
        StageDesign::Physical => vec![
            StageGroup::single("pump", of_kind(BinaryKind::Pump)),
            StageGroup::single("desalination", of_kind(BinaryKind::Desalination)),
            StageGroup::single("fuel-cell", of_kind(BinaryKind::FuelCell)),
            StageGroup::single("electrolysis", of_kind(BinaryKind::Electrolysis)),
            StageGroup::single("active-set", active_bits),
        ],
        StageDesign::Time => {
            let mut groups: Vec<StageGroup> = (0..layout.steps)
                .map(|t| {
                    let bits = layout
                        .binaries
                        .iter()
                        .enumerate()
                        .filter(|(_, (_, _, step))| *step == t)
                        .map(|(i, _)| i)
                        .collect();
                    StageGroup::single(&format!("step-{t}"), bits)
                })
                .collect();
            groups.push(StageGroup::single("active-set", active_bits));
            groups
        }
        StageDesign::Count(k) => {
            if *k < 2 {
                return Err(LearnError::LayoutMismatch("count design needs k >= 2".into()));
            }
            let parts = k - 1;
            let chunk = nb / parts;
            let mut groups = Vec::new();
            let mut start = 0;
            for p in 0..parts {
                let end = if p + 1 == parts { nb } else { start + chunk };
                groups.push(StageGroup::single(&format!("block-{p}"), (start..end).collect()));
                start = end;
            }
            groups.push(StageGroup::single("active-set", active_bits));
            groups
        }
        StageDesign::Coupled => vec![
            StageGroup {
                name: "fc-we".into(),
                subs: vec![
                    TargetSlice { name: "fuel-cell".into(), bits: of_kind(BinaryKind::FuelCell) },
                    TargetSlice {
                        name: "electrolysis".into(),
                        bits: of_kind(BinaryKind::Electrolysis),
                    },
                ],
            },
            StageGroup {
                name: "pump-des".into(),
                subs: vec![
                    TargetSlice { name: "pump".into(), bits: of_kind(BinaryKind::Pump) },
                    TargetSlice {
                        name: "desalination".into(),
                        bits: of_kind(BinaryKind::Desalination),
                    },
                ],
            },
            StageGroup::single("active-set", active_bits),
        ],
    };
    Ok(groups)
}

/// Sorts groups by descending baseline accuracy; ties keep the original
/// order. Returns the permutation (indices into the input).
pub fn order_stages(accuracies: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..accuracies.len()).collect();
    order.sort_by(|&a, &b| {
        accuracies[b].partial_cmp(&accuracies[a]).unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// For designs with an intrinsic order (time, coupled): only the best
/// group moves to the front, the rest keep their relative order.
pub fn order_stages_first_only(accuracies: &[f64]) -> Vec<usize> {
    if accuracies.is_empty() {
        return Vec::new();
    }
    let mut best = 0;
    for (i, &a) in accuracies.iter().enumerate() {
        if a > accuracies[best] {
            best = i;
        }
    }
    let mut order = vec![best];
    order.extend((0..accuracies.len()).filter(|&i| i != best));
    order
}

/// One slice's classifier: distinct bit patterns as classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPredictor {
    pub slice: TargetSlice,
    pub patterns: Vec<Vec<u8>>,
    /// absent when the slice is empty
    pub tree: Option<TrainedCart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStagePredictor {
    pub design: StageDesign,
    pub groups: Vec<StageGroup>,
    /// flattened chain over all groups, in training order
    pub subs: Vec<SubPredictor>,
    pub group_of_sub: Vec<usize>,
    pub feature_len: usize,
    pub layout: TargetLayout,
    pub params: CartParams,
}

/// Trains the chained predictor. Stage `k` is trained on the input
/// features plus the ground-truth bits of stages before it (teacher
/// forcing); `rows` selects the training samples.
pub fn train_fse(
    ds: &StrategyDataset,
    design: StageDesign,
    groups: Vec<StageGroup>,
    params: CartParams,
    rows: &[usize],
) -> Result<MultiStagePredictor, LearnError> {
    if rows.is_empty() || ds.samples.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let total_bits = ds.layout.n_bits();
    let mut seen = vec![false; total_bits];
    for g in &groups {
        for s in &g.subs {
            for &b in &s.bits {
                if b >= total_bits || seen[b] {
                    return Err(LearnError::OverlappingStages);
                }
                seen[b] = true;
            }
        }
    }
    if seen.iter().any(|&v| !v) {
        return Err(LearnError::OverlappingStages);
    }

    let truth: Vec<Vec<u8>> = rows.iter().map(|&r| ds.bits_of(&ds.samples[r])).collect();
    let base: Vec<&[f64]> = rows.iter().map(|&r| ds.samples[r].features.as_slice()).collect();

    let mut subs = Vec::new();
    let mut group_of_sub = Vec::new();
    let mut prefix_bits: Vec<usize> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for slice in &g.subs {
            if slice.bits.is_empty() {
                subs.push(SubPredictor { slice: slice.clone(), patterns: Vec::new(), tree: None });
                group_of_sub.push(gi);
                continue;
            }
            // features: phi ++ ground-truth bits of all earlier slices
            let xs: Vec<Vec<f64>> = truth
                .iter()
                .zip(&base)
                .map(|(bits, phi)| {
                    let mut x = Vec::with_capacity(phi.len() + prefix_bits.len());
                    x.extend_from_slice(phi);
                    x.extend(prefix_bits.iter().map(|&b| bits[b] as f64));
                    x
                })
                .collect();
            let mut patterns: Vec<Vec<u8>> = Vec::new();
            let mut labels = Vec::with_capacity(truth.len());
            for bits in &truth {
                let pat: Vec<u8> = slice.bits.iter().map(|&b| bits[b]).collect();
                let label = match patterns.iter().position(|p| *p == pat) {
                    Some(l) => l,
                    None => {
                        patterns.push(pat);
                        patterns.len() - 1
                    }
                };
                labels.push(label);
            }
            let tree = TrainedCart::fit(&xs, &labels, params);
            subs.push(SubPredictor { slice: slice.clone(), patterns, tree: Some(tree) });
            group_of_sub.push(gi);
            prefix_bits.extend_from_slice(&slice.bits);
        }
    }

    Ok(MultiStagePredictor {
        design,
        groups,
        subs,
        group_of_sub,
        feature_len: ds.feature_names.len(),
        layout: ds.layout.clone(),
        params,
    })
}

/// Single-stage training: identical to `train_fse` with the degenerate
/// one-group design.
pub fn train_cart_on(
    ds: &StrategyDataset,
    params: CartParams,
    rows: &[usize],
) -> Result<MultiStagePredictor, LearnError> {
    let groups = build_stages(&StageDesign::Acivp, &ds.layout)?;
    train_fse(ds, StageDesign::Acivp, groups, params, rows)
}

impl MultiStagePredictor {
    /// Free-running inference: each slice consumes the predictions of the
    /// slices before it.
    pub fn predict_bits(&self, features: &[f64]) -> Result<Vec<u8>, LearnError> {
        if features.len() != self.feature_len {
            return Err(LearnError::LayoutMismatch(format!(
                "feature length {} != {}",
                features.len(),
                self.feature_len
            )));
        }
        let total = self.layout.n_bits();
        let mut bits = vec![0u8; total];
        let mut x: Vec<f64> = features.to_vec();
        for sub in &self.subs {
            let Some(tree) = &sub.tree else { continue };
            let label = tree.predict(&x);
            let pattern = &sub.patterns[label];
            for (&b, &v) in sub.slice.bits.iter().zip(pattern) {
                bits[b] = v;
            }
            x.extend(sub.slice.bits.iter().map(|&b| bits[b] as f64));
        }
        Ok(bits)
    }

    pub fn predict(&self, features: &[f64]) -> Result<StrategyBits, LearnError> {
        let bits = self.predict_bits(features)?;
        let nb = self.layout.binaries.len();
        Ok(StrategyBits { binaries: bits[..nb].to_vec(), active: bits[nb..].to_vec() })
    }
}

/// Single-stage prediction (the baseline method).
pub fn predict_acivp(
    pred: &MultiStagePredictor,
    features: &[f64],
) -> Result<StrategyBits, LearnError> {
    pred.predict(features)
}

/// Multi-stage prediction (identical call shape; the predictor carries
/// its stages).
pub fn predict_fse(
    pred: &MultiStagePredictor,
    features: &[f64],
) -> Result<StrategyBits, LearnError> {
    pred.predict(features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub n: usize,
    /// fraction of holdout rows whose full strategy matches exactly
    pub exact_strategy: f64,
    /// free-running accuracy per stage group (all group bits correct)
    pub per_group: Vec<(String, f64)>,
    /// teacher-forced accuracy per stage group
    pub teacher_per_group: Vec<(String, f64)>,
    /// fraction of individual target bits predicted correctly
    pub per_bit: f64,
}

/// Evaluates exact-strategy, per-stage (free-running and teacher-forced),
/// and per-bit accuracy over the given holdout rows.
pub fn evaluate_accuracy(
    pred: &MultiStagePredictor,
    ds: &StrategyDataset,
    rows: &[usize],
) -> Result<AccuracyReport, LearnError> {
    if rows.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let total = ds.layout.n_bits();
    let ngroups = pred.groups.len();
    let mut exact = 0usize;
    let mut bit_hits = 0usize;
    let mut group_hits = vec![0usize; ngroups];
    let mut teacher_hits = vec![0usize; ngroups];

    for &r in rows {
        let truth = ds.bits_of(&ds.samples[r]);
        let phi = &ds.samples[r].features;
        let got = pred.predict_bits(phi)?;
        if got == truth {
            exact += 1;
        }
        bit_hits += got.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let mut group_ok = vec![true; ngroups];
        for (si, sub) in pred.subs.iter().enumerate() {
            let gi = pred.group_of_sub[si];
            if sub.slice.bits.iter().any(|&b| got[b] != truth[b]) {
                group_ok[gi] = false;
            }
        }
        for (gi, ok) in group_ok.iter().enumerate() {
            group_hits[gi] += usize::from(*ok);
        }

        // teacher-forced: every slice sees ground-truth prefixes
        let mut x: Vec<f64> = phi.clone();
        let mut t_ok = vec![true; ngroups];
        for (si, sub) in pred.subs.iter().enumerate() {
            let gi = pred.group_of_sub[si];
            if let Some(tree) = &sub.tree {
                let label = tree.predict(&x);
                let pattern = &sub.patterns[label];
                let want: Vec<u8> = sub.slice.bits.iter().map(|&b| truth[b]).collect();
                if *pattern != want {
                    t_ok[gi] = false;
                }
            }
            x.extend(sub.slice.bits.iter().map(|&b| truth[b] as f64));
        }
        for (gi, ok) in t_ok.iter().enumerate() {
            teacher_hits[gi] += usize::from(*ok);
        }
    }

    let n = rows.len();
    Ok(AccuracyReport {
        n,
        exact_strategy: exact as f64 / n as f64,
        per_group: pred
            .groups
            .iter()
            .zip(&group_hits)
            .map(|(g, &h)| (g.name.clone(), h as f64 / n as f64))
            .collect(),
        teacher_per_group: pred
            .groups
            .iter()
            .zip(&teacher_hits)
            .map(|(g, &h)| (g.name.clone(), h as f64 / n as f64))
            .collect(),
        per_bit: bit_hits as f64 / (n * total) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ConstraintTag, EquationId};

    fn layout(npump: usize, ndes: usize, steps: usize, nact: usize) -> TargetLayout {
        let mut binaries = Vec::new();
        for p in 0..npump {
            for t in 0..steps {
                binaries.push((BinaryKind::Pump, format!("p{p}"), t));
            }
        }
        for d in 0..ndes {
            for t in 0..steps {
                binaries.push((BinaryKind::Desalination, format!("n{d}"), t));
            }
        }
        for t in 0..steps {
            binaries.push((BinaryKind::FuelCell, String::new(), t));
        }
        for t in 0..steps {
            binaries.push((BinaryKind::Electrolysis, String::new(), t));
        }
        let reducible_tags = (0..nact)
            .map(|i| ConstraintTag::new(EquationId::Custom, format!("r{i}"), 0).reducible())
            .collect();
        TargetLayout { binaries, reducible_tags, steps }
    }

    #[test]
    fn physical_design_partitions_into_five() {
        let l = layout(2, 1, 4, 7);
        let groups = build_stages(&StageDesign::Physical, &l).unwrap();
        assert_eq!(groups.len(), 5);
        let mut all: Vec<usize> =
            groups.iter().flat_map(|g| g.subs.iter().flat_map(|s| s.bits.clone())).collect();
        all.sort_unstable();
        assert_eq!(all, (0..l.n_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn time_design_has_steps_plus_one_groups() {
        let l = layout(1, 1, 24, 5);
        let groups = build_stages(&StageDesign::Time, &l).unwrap();
        assert_eq!(groups.len(), 25);
    }

    #[test]
    fn count_design_splits_evenly() {
        let l = layout(2, 2, 24, 3); // 2*24 + 2*24 + 24 + 24 = 144 binaries
        let groups = build_stages(&StageDesign::Count(3), &l).unwrap();
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0].subs[0].bits.len(), 72);
        assert_eq!(groups[1].subs[0].bits.len(), 72);
        assert_eq!(groups[2].subs[0].bits.len(), 3);
    }

    #[test]
    fn coupled_design_is_three_groups_five_slices() {
        let l = layout(1, 1, 6, 4);
        let groups = build_stages(&StageDesign::Coupled, &l).unwrap();
        assert_eq!(groups.len(), 3);
        let slices: usize = groups.iter().map(|g| g.subs.len()).sum();
        assert_eq!(slices, 5);
        assert_eq!(groups[0].subs[0].name, "fuel-cell");
        assert_eq!(groups[0].subs[1].name, "electrolysis");
    }

    #[test]
    fn ordering_sorts_descending_with_stable_ties() {
        assert_eq!(order_stages(&[0.7, 0.9, 0.8]), vec![1, 2, 0]);
        assert_eq!(order_stages(&[0.5, 0.5, 0.5]), vec![0, 1, 2]);
        assert_eq!(order_stages_first_only(&[0.7, 0.9, 0.8]), vec![1, 0, 2]);
    }
}
