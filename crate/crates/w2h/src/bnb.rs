//! Exact branch-and-bound over the binary variables of a conic program.
//!
//! Node selection is best-bound with deterministic tie-breaking (creation
//! order), branching picks the most fractional binary (ties to the
//! smallest index) and explores the `0` child first. Subproblems are the
//! continuous relaxations solved by [`solve_socp`]; an incumbent is
//! obtained by re-solving with its binaries fixed exactly, which also
//! yields the embedded continuous solution required by callers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use thiserror::Error;

use crate::conic::{ConicProgram, VarKind};
use crate::solver::{solve_socp, ContinuousSolution, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Search stopped at the node limit; the incumbent and gap are the
    /// best proven so far.
    NodeLimit,
    NumericalFailure,
}

/// Solution of a mixed-integer program.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub status: MixedStatus,
    /// value per binary variable index
    pub binaries: BTreeMap<usize, u8>,
    /// continuous solution of the final fixed program
    pub continuous: Option<ContinuousSolution>,
    pub objective: f64,
    pub node_count: usize,
    /// proven relative optimality gap
    pub gap: f64,
}

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("relative gap must lie in [0, 0.05]")]
    BadRelGap,
    #[error("enumeration limited to 20 binaries, got {0}")]
    TooManyBinaries(usize),
}

/// Tolerance for declaring a relaxation value integral.
const INT_TOL: f64 = 1e-6;
/// Continuous subproblem tolerance.
const NODE_TOL: f64 = 1e-8;
/// Pruning slack relative to the incumbent: nodes within the solver's
/// noise floor of the incumbent cannot improve it meaningfully.
const PRUNE_REL: f64 = 1e-7;

pub struct BnbOptions<'a> {
    pub node_limit: usize,
    /// `node id parent depth bound status` per evaluated node
    pub log: Option<&'a mut dyn Write>,
}

impl Default for BnbOptions<'_> {
    fn default() -> Self {
        BnbOptions { node_limit: 100_000, log: None }
    }
}

struct Node {
    id: usize,
    parent: isize,
    depth: usize,
    /// inherited lower bound (parent relaxation objective)
    bound: f64,
    /// bound quantized to the solver's noise floor, so degenerate
    /// plateaus compare as exact ties
    qbound: i64,
    fixed: BTreeMap<usize, u8>,
}

/// Quantizes a bound to ~1e-7 relative resolution for node ordering.
fn quantize(bound: f64) -> i64 {
    if bound == f64::NEG_INFINITY {
        return i64::MIN;
    }
    (bound / (1.0 + bound.abs()) * 1e7).round() as i64
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the smallest quantized bound
    // pops first. Ties pop the newest node, so plateaus of equal bounds
    // are explored as a dive that reaches an incumbent quickly and then
    // prunes the remaining equal-bound siblings.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .qbound
            .cmp(&self.qbound)
            .then_with(|| self.id.cmp(&other.id))
    }
}

pub fn solve_misocp(
    prog: &ConicProgram,
    rel_gap: f64,
    node_limit: usize,
) -> Result<MixedSolution, BnbError> {
    solve_misocp_with(prog, rel_gap, BnbOptions { node_limit, log: None })
}

pub fn solve_misocp_with(
    prog: &ConicProgram,
    rel_gap: f64,
    mut opts: BnbOptions,
) -> Result<MixedSolution, BnbError> {
    if !(0.0..=0.05).contains(&rel_gap) {
        return Err(BnbError::BadRelGap);
    }
    if prog.binaries.is_empty() {
        // degenerate: pure continuous program
        let sol = solve_socp(prog, NODE_TOL).expect("continuous program");
        let status = match sol.status {
            SolveStatus::Optimal => MixedStatus::Optimal,
            SolveStatus::Infeasible => MixedStatus::Infeasible,
            SolveStatus::Unbounded => MixedStatus::Unbounded,
            SolveStatus::NumericalFailure => MixedStatus::NumericalFailure,
        };
        let objective = sol.objective;
        return Ok(MixedSolution {
            status,
            binaries: BTreeMap::new(),
            continuous: Some(sol),
            objective,
            node_count: 1,
            gap: 0.0,
        });
    }

    // relaxation template: binaries become continuous in [0, 1]
    let mut relaxed = prog.clone();
    for &b in &prog.binaries {
        relaxed.variables[b].kind = VarKind::Continuous;
    }
    relaxed.binaries.clear();

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        parent: -1,
        depth: 0,
        bound: f64::NEG_INFINITY,
        qbound: quantize(f64::NEG_INFINITY),
        fixed: BTreeMap::new(),
    });
    let mut next_id = 1usize;
    let mut node_count = 0usize;

    let mut incumbent: Option<MixedSolution> = None;
    let mut inc_obj = f64::INFINITY;
    let mut hit_limit = false;
    let mut root_status: Option<MixedStatus> = None;

    while let Some(node) = heap.pop() {
        let prune_eps = PRUNE_REL * (1.0 + inc_obj.abs());
        if node.bound >= inc_obj - prune_eps {
            log_node(&mut opts.log, &node, node.bound, "pruned");
            continue;
        }
        if (inc_obj - node.bound).max(0.0) <= rel_gap * inc_obj.abs().max(1.0)
            && incumbent.is_some()
        {
            log_node(&mut opts.log, &node, node.bound, "gap-pruned");
            continue;
        }
        if node_count >= opts.node_limit {
            hit_limit = true;
            break;
        }

        // evaluate the relaxation with this node's binaries pinned; the
        // template is mutated in place and restored, the rows never change
        for (&idx, &v) in &node.fixed {
            relaxed.variables[idx].lower = v as f64;
            relaxed.variables[idx].upper = v as f64;
        }
        node_count += 1;
        let mut sol = solve_socp(&relaxed, NODE_TOL).expect("relaxation is continuous");
        if sol.status == SolveStatus::NumericalFailure {
            sol = solve_socp(&relaxed, 1e-6).expect("relaxation is continuous");
        }
        for &idx in node.fixed.keys() {
            relaxed.variables[idx].lower = 0.0;
            relaxed.variables[idx].upper = 1.0;
        }
        match sol.status {
            SolveStatus::Infeasible => {
                log_node(&mut opts.log, &node, f64::INFINITY, "infeasible");
                if node.depth == 0 {
                    root_status = Some(MixedStatus::Infeasible);
                }
                continue;
            }
            SolveStatus::Unbounded => {
                log_node(&mut opts.log, &node, f64::NEG_INFINITY, "unbounded");
                root_status = Some(MixedStatus::Unbounded);
                break;
            }
            SolveStatus::NumericalFailure => {
                log_node(&mut opts.log, &node, node.bound, "failed");
                // keep searching below this node rather than trusting it
                if let Some(&branch_var) =
                    prog.binaries.iter().find(|b| !node.fixed.contains_key(b))
                {
                    for v in [0u8, 1u8] {
                        let mut fixed = node.fixed.clone();
                        fixed.insert(branch_var, v);
                        heap.push(Node {
                            id: next_id,
                            parent: node.id as isize,
                            depth: node.depth + 1,
                            bound: node.bound,
                            qbound: quantize(node.bound),
                            fixed,
                        });
                        next_id += 1;
                    }
                }
                continue;
            }
            SolveStatus::Optimal => {}
        }
        let bound = sol.objective;
        if bound >= inc_obj - prune_eps {
            log_node(&mut opts.log, &node, bound, "pruned");
            continue;
        }

        // fractional scan: most fractional binary, ties by smallest index
        let mut branch_var = None;
        let mut worst_frac = INT_TOL;
        for &b in &prog.binaries {
            let frac = (sol.primal[b] - sol.primal[b].round()).abs();
            if frac > worst_frac {
                worst_frac = frac;
                branch_var = Some(b);
            }
        }

        match branch_var {
            None => {
                // integral relaxation: clean-solve with binaries fixed
                let assignment: BTreeMap<usize, u8> = prog
                    .binaries
                    .iter()
                    .map(|&b| (b, sol.primal[b].round() as u8))
                    .collect();
                log_node(&mut opts.log, &node, bound, "integral");
                if let Ok(fixed_prog) = prog.fix_binaries(&assignment) {
                    let mut fsol = solve_socp(&fixed_prog, NODE_TOL).expect("fixed program");
                    if fsol.status == SolveStatus::NumericalFailure {
                        fsol = solve_socp(&fixed_prog, 1e-6).expect("fixed program");
                    }
                    if fsol.status == SolveStatus::Optimal && fsol.objective < inc_obj {
                        inc_obj = fsol.objective;
                        incumbent = Some(MixedSolution {
                            status: MixedStatus::Optimal,
                            binaries: assignment,
                            objective: fsol.objective,
                            continuous: Some(fsol),
                            node_count: 0,
                            gap: 0.0,
                        });
                    }
                }
            }
            Some(b) => {
                log_node(&mut opts.log, &node, bound, "branched");
                for v in [0u8, 1u8] {
                    let mut fixed = node.fixed.clone();
                    fixed.insert(b, v);
                    heap.push(Node {
                        id: next_id,
                        parent: node.id as isize,
                        depth: node.depth + 1,
                        bound,
                        qbound: quantize(bound),
                        fixed,
                    });
                    next_id += 1;
                }
            }
        }
    }

    let best_open = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some(mut best) => {
            best.node_count = node_count;
            best.gap = if hit_limit {
                ((best.objective - best_open).max(0.0)) / best.objective.abs().max(1.0)
            } else {
                0.0
            };
            best.status = if hit_limit { MixedStatus::NodeLimit } else { MixedStatus::Optimal };
            Ok(best)
        }
        None => Ok(MixedSolution {
            status: if hit_limit {
                MixedStatus::NodeLimit
            } else {
                root_status.unwrap_or(MixedStatus::Infeasible)
            },
            binaries: BTreeMap::new(),
            continuous: None,
            objective: f64::NAN,
            node_count,
            gap: f64::INFINITY,
        }),
    }
}

fn log_node(log: &mut Option<&mut dyn Write>, node: &Node, bound: f64, status: &str) {
    if let Some(w) = log.as_deref_mut() {
        let _ = writeln!(
            w,
            "node {} parent {} depth {} bound {:.9e} status {}",
            node.id, node.parent, node.depth, bound, status
        );
    }
}

/// Exact optimum by solving all `2^n` binary fixings; the test oracle for
/// [`solve_misocp`]. Infeasible fixings are skipped.
pub fn enumerate_oracle(prog: &ConicProgram) -> Result<MixedSolution, BnbError> {
    let nb = prog.binaries.len();
    if nb > 20 {
        return Err(BnbError::TooManyBinaries(nb));
    }
    let mut best: Option<MixedSolution> = None;
    let mut unbounded = false;
    for mask in 0u32..(1u32 << nb) {
        let assignment: BTreeMap<usize, u8> = prog
            .binaries
            .iter()
            .enumerate()
            .map(|(k, &idx)| (idx, ((mask >> k) & 1) as u8))
            .collect();
        let fixed = match prog.fix_binaries(&assignment) {
            Ok(p) => p,
            Err(_) => continue, // assignment contradicts a constant row
        };
        let sol = solve_socp(&fixed, NODE_TOL).expect("fixed program");
        match sol.status {
            SolveStatus::Optimal => {
                if best.as_ref().map_or(true, |b| sol.objective < b.objective) {
                    best = Some(MixedSolution {
                        status: MixedStatus::Optimal,
                        binaries: assignment,
                        objective: sol.objective,
                        continuous: Some(sol),
                        node_count: 1 << nb,
                        gap: 0.0,
                    });
                }
            }
            SolveStatus::Unbounded => unbounded = true,
            _ => {}
        }
    }
    Ok(best.unwrap_or(MixedSolution {
        status: if unbounded { MixedStatus::Unbounded } else { MixedStatus::Infeasible },
        binaries: BTreeMap::new(),
        continuous: None,
        objective: f64::NAN,
        node_count: 1 << nb,
        gap: f64::INFINITY,
    }))
}
