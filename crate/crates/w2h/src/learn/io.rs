//! Line-oriented text files for datasets and predictors; both round-trip
//! bit-exactly (reals carry 17 significant digits).

use std::fmt::Write as _;

use super::cart::{CartNode, CartParams, TrainedCart};
use super::fse::{MultiStagePredictor, StageDesign, StageGroup, SubPredictor, TargetSlice};
use super::{LearnError, Sample, StrategyBits, StrategyDataset, TargetLayout};
use crate::conic::ConstraintTag;
use crate::model::BinaryKind;

fn kind_str(k: BinaryKind) -> &'static str {
    match k {
        BinaryKind::Pump => "pump",
        BinaryKind::Desalination => "desal",
        BinaryKind::FuelCell => "fc",
        BinaryKind::Electrolysis => "we",
    }
}

fn kind_parse(s: &str) -> Option<BinaryKind> {
    Some(match s {
        "pump" => BinaryKind::Pump,
        "desal" => BinaryKind::Desalination,
        "fc" => BinaryKind::FuelCell,
        "we" => BinaryKind::Electrolysis,
        _ => return None,
    })
}

fn bits_str(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

fn bits_parse(s: &str) -> Option<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(0u8),
            '1' => Some(1u8),
            _ => None,
        })
        .collect()
}

fn tag_str(t: &ConstraintTag) -> String {
    format!(
        "{}@{}:{}:{}",
        t.equation.as_str(),
        t.asset,
        t.step,
        if t.reducible { "r" } else { "n" }
    )
}

fn tag_parse(s: &str) -> Option<ConstraintTag> {
    let at = s.find('@')?;
    let equation = crate::conic::EquationId::parse(&s[..at])?;
    let rest = &s[at + 1..];
    let mut parts = rest.rsplitn(3, ':');
    let red = parts.next()?;
    let step: usize = parts.next()?.parse().ok()?;
    let asset = parts.next()?.to_string();
    Some(ConstraintTag {
        equation,
        asset,
        step,
        reducible: match red {
            "r" => true,
            "n" => false,
            _ => return None,
        },
    })
}

fn layout_lines(out: &mut String, layout: &TargetLayout) {
    let _ = writeln!(out, "steps {}", layout.steps);
    for (kind, asset, step) in &layout.binaries {
        let a = if asset.is_empty() { "-" } else { asset };
        let _ = writeln!(out, "binbit {} {} {}", kind_str(*kind), a, step);
    }
    for tag in &layout.reducible_tags {
        let _ = writeln!(out, "acttag {}", tag_str(tag));
    }
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader { lines: text.lines().enumerate(), peeked: None }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        for (n, line) in self.lines.by_ref() {
            if !line.is_empty() {
                return Some((n, line));
            }
        }
        None
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.next();
        }
        self.peeked
    }
}

fn err(n: usize, msg: &str) -> LearnError {
    LearnError::Parse(n + 1, msg.to_string())
}

fn parse_layout(r: &mut LineReader) -> Result<TargetLayout, LearnError> {
    let (n, line) = r.next().ok_or_else(|| err(0, "missing steps"))?;
    let steps: usize = line
        .strip_prefix("steps ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(n, "bad steps"))?;
    let mut binaries = Vec::new();
    let mut reducible_tags = Vec::new();
    while let Some((n, line)) = r.peek() {
        if let Some(rest) = line.strip_prefix("binbit ") {
            let mut it = rest.split(' ');
            let kind = it.next().and_then(kind_parse).ok_or_else(|| err(n, "bad kind"))?;
            let asset = it.next().ok_or_else(|| err(n, "bad asset"))?;
            let step: usize =
                it.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad step"))?;
            let asset = if asset == "-" { String::new() } else { asset.to_string() };
            binaries.push((kind, asset, step));
            r.next();
        } else if let Some(rest) = line.strip_prefix("acttag ") {
            reducible_tags.push(tag_parse(rest).ok_or_else(|| err(n, "bad tag"))?);
            r.next();
        } else {
            break;
        }
    }
    Ok(TargetLayout { binaries, reducible_tags, steps })
}

impl StrategyDataset {
    pub fn to_text(&self) -> String {
        let mut out = String::from("w2h-dataset v1\n");
        let _ = writeln!(out, "features {} {}", self.feature_names.len(), self.feature_names.join(" "));
        layout_lines(&mut out, &self.layout);
        for s in &self.strategies {
            let _ = writeln!(out, "strategy {} {}", bits_str(&s.binaries), bits_str(&s.active));
        }
        for s in &self.samples {
            let _ = write!(out, "sample {} {}", s.scenario_id, s.label);
            for v in &s.features {
                let _ = write!(out, " {:.16e}", v);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<StrategyDataset, LearnError> {
        let mut r = LineReader::new(text);
        let (n, line) = r.next().ok_or_else(|| err(0, "empty file"))?;
        if line != "w2h-dataset v1" {
            return Err(err(n, "not a dataset file"));
        }
        let (n, line) = r.next().ok_or_else(|| err(n, "missing features"))?;
        let rest = line.strip_prefix("features ").ok_or_else(|| err(n, "missing features"))?;
        let mut it = rest.split(' ');
        let count: usize =
            it.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad feature count"))?;
        let feature_names: Vec<String> = it.map(str::to_string).collect();
        if feature_names.len() != count {
            return Err(err(n, "feature count mismatch"));
        }
        let layout = parse_layout(&mut r)?;

        let mut strategies = Vec::new();
        let mut samples = Vec::new();
        while let Some((n, line)) = r.next() {
            if let Some(rest) = line.strip_prefix("strategy ") {
                let (b, a) = rest.split_once(' ').ok_or_else(|| err(n, "bad strategy"))?;
                strategies.push(StrategyBits {
                    binaries: bits_parse(b).ok_or_else(|| err(n, "bad bits"))?,
                    active: bits_parse(a).ok_or_else(|| err(n, "bad bits"))?,
                });
            } else if let Some(rest) = line.strip_prefix("sample ") {
                let mut it = rest.split(' ');
                let scenario_id: u64 =
                    it.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad id"))?;
                let label: usize =
                    it.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad label"))?;
                let features = it
                    .map(|v| v.parse::<f64>().map_err(|_| err(n, "bad feature value")))
                    .collect::<Result<Vec<f64>, _>>()?;
                if features.len() != count {
                    return Err(err(n, "feature length mismatch"));
                }
                samples.push(Sample { scenario_id, features, label });
            } else {
                return Err(err(n, "unknown record"));
            }
        }
        Ok(StrategyDataset { feature_names, layout, strategies, samples })
    }
}

impl MultiStagePredictor {
    pub fn to_text(&self) -> String {
        let mut out = String::from("w2h-predictor v1\n");
        let _ = writeln!(out, "design {}", self.design.as_str());
        let _ = writeln!(
            out,
            "params {} {} {}",
            self.params.max_depth, self.params.min_leaf, self.params.seed
        );
        let _ = writeln!(out, "features {}", self.feature_len);
        layout_lines(&mut out, &self.layout);
        for g in &self.groups {
            let _ = writeln!(out, "group {}", g.name);
        }
        for (si, sub) in self.subs.iter().enumerate() {
            let _ = write!(
                out,
                "sub {} {} {}",
                self.group_of_sub[si],
                sub.slice.name,
                sub.slice.bits.len()
            );
            for b in &sub.slice.bits {
                let _ = write!(out, " {b}");
            }
            out.push('\n');
            for p in &sub.patterns {
                let _ = writeln!(out, "pattern {}", bits_str(p));
            }
            match &sub.tree {
                None => {
                    let _ = writeln!(out, "tree none");
                }
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "tree {} depth {} leaves {} nf {}",
                        t.nodes.len(),
                        t.depth,
                        t.leaf_count,
                        t.n_features
                    );
                    for node in &t.nodes {
                        match node {
                            CartNode::Leaf { label } => {
                                let _ = writeln!(out, "leaf {label}");
                            }
                            CartNode::Split { feature, threshold, left, right } => {
                                let _ = writeln!(
                                    out,
                                    "split {feature} {threshold:.16e} {left} {right}"
                                );
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MultiStagePredictor, LearnError> {
        let mut r = LineReader::new(text);
        let (n, line) = r.next().ok_or_else(|| err(0, "empty file"))?;
        if line != "w2h-predictor v1" {
            return Err(err(n, "not a predictor file"));
        }
        let (n, line) = r.next().ok_or_else(|| err(n, "missing design"))?;
        let design = line
            .strip_prefix("design ")
            .and_then(StageDesign::parse)
            .ok_or_else(|| err(n, "bad design"))?;
        let (n, line) = r.next().ok_or_else(|| err(n, "missing params"))?;
        let toks: Vec<&str> =
            line.strip_prefix("params ").ok_or_else(|| err(n, "bad params"))?.split(' ').collect();
        if toks.len() != 3 {
            return Err(err(n, "bad params"));
        }
        let params = CartParams {
            max_depth: toks[0].parse().map_err(|_| err(n, "bad max depth"))?,
            min_leaf: toks[1].parse().map_err(|_| err(n, "bad min leaf"))?,
            seed: toks[2].parse().map_err(|_| err(n, "bad seed"))?,
        };
        let (n, line) = r.next().ok_or_else(|| err(n, "missing features"))?;
        let feature_len: usize = line
            .strip_prefix("features ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(n, "bad feature count"))?;
        let layout = parse_layout(&mut r)?;

        let mut group_names = Vec::new();
        while let Some((_, line)) = r.peek() {
            if let Some(name) = line.strip_prefix("group ") {
                group_names.push(name.to_string());
                r.next();
            } else {
                break;
            }
        }

        let mut groups: Vec<StageGroup> =
            group_names.iter().map(|name| StageGroup { name: name.clone(), subs: Vec::new() }).collect();
        let mut subs = Vec::new();
        let mut group_of_sub = Vec::new();
        while let Some((n, line)) = r.next() {
            let rest = line.strip_prefix("sub ").ok_or_else(|| err(n, "expected sub"))?;
            let toks: Vec<&str> = rest.split(' ').collect();
            if toks.len() < 3 {
                return Err(err(n, "bad sub header"));
            }
            let gi: usize = toks[0].parse().map_err(|_| err(n, "bad group index"))?;
            let name = toks[1].to_string();
            let nbits: usize = toks[2].parse().map_err(|_| err(n, "bad bit count"))?;
            if toks.len() != 3 + nbits {
                return Err(err(n, "bit count mismatch"));
            }
            let bits = toks[3..]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| err(n, "bad bit index")))
                .collect::<Result<Vec<_>, _>>()?;
            let slice = TargetSlice { name, bits };
            if gi >= groups.len() {
                return Err(err(n, "group index out of range"));
            }
            groups[gi].subs.push(slice.clone());

            let mut patterns = Vec::new();
            while let Some((n2, line)) = r.peek() {
                if let Some(p) = line.strip_prefix("pattern ") {
                    patterns.push(bits_parse(p).ok_or_else(|| err(n2, "bad pattern"))?);
                    r.next();
                } else {
                    break;
                }
            }
            let (n3, line) = r.next().ok_or_else(|| err(n, "missing tree"))?;
            let tree = if line == "tree none" {
                None
            } else {
                let toks: Vec<&str> =
                    line.strip_prefix("tree ").ok_or_else(|| err(n3, "bad tree"))?.split(' ').collect();
                let count: usize = toks[0].parse().map_err(|_| err(n3, "bad node count"))?;
                let depth: usize = toks
                    .get(2)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(n3, "bad depth"))?;
                let leaf_count: usize = toks
                    .get(4)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(n3, "bad leaf count"))?;
                let n_features: usize = toks
                    .get(6)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(n3, "bad feature width"))?;
                let mut nodes = Vec::with_capacity(count);
                for _ in 0..count {
                    let (n4, line) = r.next().ok_or_else(|| err(n3, "truncated tree"))?;
                    if let Some(rest) = line.strip_prefix("leaf ") {
                        nodes.push(CartNode::Leaf {
                            label: rest.parse().map_err(|_| err(n4, "bad leaf"))?,
                        });
                    } else if let Some(rest) = line.strip_prefix("split ") {
                        let t: Vec<&str> = rest.split(' ').collect();
                        if t.len() != 4 {
                            return Err(err(n4, "bad split"));
                        }
                        nodes.push(CartNode::Split {
                            feature: t[0].parse().map_err(|_| err(n4, "bad feature"))?,
                            threshold: t[1].parse().map_err(|_| err(n4, "bad threshold"))?,
                            left: t[2].parse().map_err(|_| err(n4, "bad left"))?,
                            right: t[3].parse().map_err(|_| err(n4, "bad right"))?,
                        });
                    } else {
                        return Err(err(n4, "bad tree node"));
                    }
                }
                Some(TrainedCart { nodes, depth, leaf_count, params, n_features })
            };
            subs.push(SubPredictor { slice, patterns, tree });
            group_of_sub.push(gi);
        }

        Ok(MultiStagePredictor {
            design,
            groups,
            subs,
            group_of_sub,
            feature_len,
            layout,
            params,
        })
    }
}
