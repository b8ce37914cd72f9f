//! Primal-dual interior-point solver for continuous second-order cone
//! programs.
//!
//! The program is lowered to the standard form `min c'x : Ax + s = b, s in
//! K` with `K` a product of zero, nonnegative, and second-order cones, and
//! solved on the homogeneous self-dual embedding with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector. Each iteration factors one
//! quasi-definite KKT matrix ([`kkt`]) and reuses the factor for the
//! predictor, corrector, and constant-column solves.
//!
//! Infeasibility and unboundedness are reported through certificates of
//! the embedding rather than errors.

pub mod cones;
pub mod kkt;

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::conic::{ConicProgram, ConstraintTag, Relation};
use cones::{degree, h_slot_count, step_length, ConeBlock, Scalings};
use kkt::LdlSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Outcome of a continuous solve, in the original program's coordinates.
#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    pub status: SolveStatus,
    /// value per variable index
    pub primal: Vec<f64>,
    /// dual multiplier per tagged row; for cone rows the bound component
    pub duals: HashMap<ConstraintTag, f64>,
    /// normalized slack per tagged inequality/cone row
    pub slacks: HashMap<ConstraintTag, f64>,
    pub objective: f64,
    /// (primal residual, dual residual, relative gap)
    pub kkt_residuals: (f64, f64, f64),
    pub iterations: usize,
}

/// Tags whose rows are satisfied as equalities at the solution.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub tags: std::collections::HashSet<ConstraintTag>,
    pub tolerance: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("program still contains binary variables; fix them first")]
    HasBinaries,
    #[error("tolerance must lie in (0, 1e-3]")]
    BadTolerance,
}

pub struct SolveOptions<'a> {
    pub max_iter: usize,
    pub log: Option<&'a mut dyn Write>,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions { max_iter: 200, log: None }
    }
}

/// Static regularization of the quasi-definite KKT system.
const STATIC_REG: f64 = 1e-8;

pub fn solve_socp(prog: &ConicProgram, tol: f64) -> Result<ContinuousSolution, SolverError> {
    solve_socp_with(prog, tol, SolveOptions::default())
}

pub fn solve_socp_with(
    prog: &ConicProgram,
    tol: f64,
    mut opts: SolveOptions,
) -> Result<ContinuousSolution, SolverError> {
    if !prog.binaries.is_empty() {
        return Err(SolverError::HasBinaries);
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(SolverError::BadTolerance);
    }

    let sf = StdForm::build(prog);
    let n = sf.n;
    let m = sf.m;

    // trivial programs: no constraints at all
    if m == 0 {
        let feasible_obj = prog.objective.constant;
        let status = if sf.c.iter().all(|&ci| ci == 0.0) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        return Ok(ContinuousSolution {
            status,
            primal: vec![0.0; n],
            duals: HashMap::new(),
            slacks: HashMap::new(),
            objective: if status == SolveStatus::Optimal { feasible_obj } else { f64::NAN },
            kkt_residuals: (0.0, 0.0, 0.0),
            iterations: 0,
        });
    }

    let blocks = &sf.blocks;
    let deg = degree(blocks);
    // residual normalization on the equilibrated system: relative to the
    // data when iterates are modest, relative to the iterate magnitude
    // when the optimal face is ill-conditioned and the unscaled point is
    // large
    let bnorm = sf.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cnorm = sf.c.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    // certificates are judged on the equilibrated system, where the data
    // norm is close to one
    let inf_tol = 1e-8 * (1.0 + bnorm.max(cnorm));

    // KKT pattern: [0 A'; A -H], upper triangle
    let mut triplets: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        triplets.push((i, i));
    }
    for j in 0..n {
        for p in sf.colptr[j]..sf.colptr[j + 1] {
            triplets.push((j, n + sf.rowidx[p]));
        }
    }
    let a_trip_base = n;
    let h_base = triplets.len();
    {
        // H slot positions mirror Scalings::fill_h layout
        let mut o = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } | ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        triplets.push((n + o + i, n + o + i));
                    }
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    for j in 0..dim {
                        for i in 0..=j {
                            triplets.push((n + o + i, n + o + j));
                        }
                    }
                    o += dim;
                }
            }
        }
    }
    let mut ldl = LdlSolver::new(n + m, &triplets, n, STATIC_REG);
    let h_slots = h_slot_count(blocks);
    debug_assert_eq!(h_base + h_slots, triplets.len());

    // iterates
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut s = vec![0.0; m];
    cones::unit_init(blocks, &mut s);
    cones::unit_init(blocks, &mut z);
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let mut scal = Scalings::default();
    let mut status = SolveStatus::NumericalFailure;
    let mut iterations = 0;
    let mut metrics = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    // workspaces
    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut x2 = vec![0.0; n + m];
    let mut ws = StepWorkspace::new(n, m);

    for iter in 0..=opts.max_iter {
        iterations = iter;

        // residuals of the embedding
        sf.at_mul(&z, &mut rx);
        for i in 0..n {
            rx[i] += sf.c[i] * tau;
        }
        sf.a_mul(&x, &mut rz);
        for i in 0..m {
            rz[i] += s[i] - sf.b[i] * tau;
        }
        let cx = dot(&sf.c, &x);
        let bz = dot(&sf.b, &z);
        let rtau = cx + bz + kappa;
        let mu = (dot(&s, &z) + tau * kappa) / (deg + 1) as f64;

        let pobj = cx / tau;
        let dobj = -bz / tau;
        let xn = inf_norm(&x) / tau;
        let sn = inf_norm(&s) / tau;
        let zn = inf_norm(&z) / tau;
        let pres = (inf_norm(&rz) / tau) / (1.0 + bnorm).max(xn + sn);
        let dres = (inf_norm(&rx) / tau) / (1.0 + cnorm).max(xn + zn);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        metrics = (pres, dres, gap);

        if let Some(log) = opts.log.as_deref_mut() {
            let _ = writeln!(log, "iter {iter} mu {mu:.3e} p-res {pres:.3e} d-res {dres:.3e} gap {gap:.3e}");
        }

        if pres <= tol && dres <= tol && gap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Farkas certificates; valid independently of tau
        if iter > 0 {
            if bz < -1e-10 {
                let mut atz = vec![0.0; n];
                sf.at_mul(&z, &mut atz);
                if inf_norm(&atz) <= inf_tol * (-bz) {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
            if cx < -1e-10 {
                let mut axs = vec![0.0; m];
                sf.a_mul(&x, &mut axs);
                for i in 0..m {
                    axs[i] += s[i];
                }
                if inf_norm(&axs) <= inf_tol * (-cx) {
                    status = SolveStatus::Unbounded;
                    break;
                }
            }
        }
        if iter == opts.max_iter {
            status = SolveStatus::NumericalFailure;
            break;
        }

        if scal.update(blocks, &s, &z).is_err() {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // refresh KKT values and factor
        ldl.clear_values();
        {
            let mut t = a_trip_base;
            for j in 0..n {
                for p in sf.colptr[j]..sf.colptr[j + 1] {
                    ldl.set(t, sf.values[p]);
                    t += 1;
                }
            }
        }
        {
            let base = h_base;
            scal.fill_h(blocks, |slot, v| ldl.set(base + slot, -v));
        }
        if ldl.factor().is_err() {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // constant column: K [x2; z2] = [-c; b]
        {
            let rhs: Vec<f64> = sf
                .c
                .iter()
                .map(|&v| -v)
                .chain(sf.b.iter().copied())
                .collect();
            ldl.solve(&rhs, &mut x2);
        }
        let (x2x, x2z) = x2.split_at(n);
        let cx2 = dot(&sf.c, x2x);
        let bz2 = dot(&sf.b, x2z);
        let den = kappa / tau - cx2 - bz2;

        // predictor: pure Newton step toward zero residuals
        for i in 0..n {
            ws.rhs_x[i] = -rx[i];
        }
        for i in 0..m {
            ws.rhs_z[i] = -rz[i];
        }
        scal.lambda_sq(blocks, &mut ws.rhs_s);
        for v in ws.rhs_s.iter_mut() {
            *v = -*v;
        }
        let ok = solve_step(
            &sf, &mut ldl, &scal, blocks, &mut ws, rtau, -tau * kappa, tau, kappa, den, x2x, x2z,
        );
        if !ok {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let alpha_aff = {
            let a = step_length(blocks, &s, &ws.ds, 1.0);
            let a = step_length(blocks, &z, &ws.dz, a);
            let a = if ws.dtau < 0.0 { a.min(-tau / ws.dtau) } else { a };
            if ws.dkappa < 0.0 {
                a.min(-kappa / ws.dkappa)
            } else {
                a
            }
        };
        let mu_aff = {
            let mut acc = 0.0;
            for i in 0..m {
                acc += (s[i] + alpha_aff * ws.ds[i]) * (z[i] + alpha_aff * ws.dz[i]);
            }
            acc += (tau + alpha_aff * ws.dtau) * (kappa + alpha_aff * ws.dkappa);
            acc / (deg + 1) as f64
        };
        let sigma = (mu_aff / mu).powi(3).clamp(1e-8, 0.9999);

        // corrector with centering
        let one_ms = 1.0 - sigma;
        for i in 0..n {
            ws.rhs_x[i] = -one_ms * rx[i];
        }
        for i in 0..m {
            ws.rhs_z[i] = -one_ms * rz[i];
        }
        scal.lambda_sq(blocks, &mut ws.rhs_s);
        scal.add_correction(blocks, &ws.ds, &ws.dz, &mut ws.rhs_s);
        scal.sub_sigma_mu(blocks, sigma * mu, &mut ws.rhs_s);
        for v in ws.rhs_s.iter_mut() {
            *v = -*v;
        }
        let rhs_kappa = sigma * mu - tau * kappa - ws.dtau * ws.dkappa;
        let ok = solve_step(
            &sf, &mut ldl, &scal, blocks, &mut ws, one_ms * rtau, rhs_kappa, tau, kappa, den,
            x2x, x2z,
        );
        if !ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        let alpha = {
            let a = step_length(blocks, &s, &ws.ds, f64::INFINITY);
            let a = step_length(blocks, &z, &ws.dz, a);
            let a = if ws.dtau < 0.0 { a.min(-tau / ws.dtau) } else { a };
            let a = if ws.dkappa < 0.0 { a.min(-kappa / ws.dkappa) } else { a };
            (0.99 * a).min(1.0)
        };
        if std::env::var_os("W2H_IPM_DEBUG").is_some() {
            let mut e1v = vec![0.0; n];
            sf.at_mul(&ws.dz, &mut e1v);
            let mut e1 = 0.0f64;
            for i in 0..n {
                e1 = e1.max((e1v[i] + sf.c[i] * ws.dtau + one_ms * rx[i]).abs());
            }
            let mut e2v = vec![0.0; m];
            sf.a_mul(&ws.dx, &mut e2v);
            let mut e2 = 0.0f64;
            for i in 0..m {
                e2 = e2.max((e2v[i] + ws.ds[i] - sf.b[i] * ws.dtau + one_ms * rz[i]).abs());
            }
            eprintln!(
                "  dbg it {iter} alpha {alpha:.2e} sigma {sigma:.2e} tau {tau:.3e} kappa {kappa:.2e} newton e1 {e1:.2e} e2 {e2:.2e} bumps {}",
                ldl.dynamic_bumps
            );
        }
        if !alpha.is_finite() || alpha < 1e-11 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        for i in 0..n {
            x[i] += alpha * ws.dx[i];
        }
        for i in 0..m {
            z[i] += alpha * ws.dz[i];
            s[i] += alpha * ws.ds[i];
        }
        tau += alpha * ws.dtau;
        kappa += alpha * ws.dkappa;
    }

    // map back to program coordinates
    let mut primal = vec![0.0; n];
    let mut duals = HashMap::new();
    let mut slacks = HashMap::new();
    let mut objective = f64::NAN;
    if status == SolveStatus::Optimal {
        for i in 0..n {
            primal[i] = sf.dscale[i] * x[i] / tau;
        }
        objective = dot(&sf.c, &x) / tau + prog.objective.constant;
        for (r, row) in prog.rows.iter().enumerate() {
            let std_row = sf.linear_std[r];
            duals.insert(row.tag.clone(), sf.escale[std_row] * z[std_row] / tau);
            if row.rel != Relation::Eq {
                let raw = s[std_row] / sf.escale[std_row] / tau;
                slacks.insert(row.tag.clone(), raw / (1.0 + row.rhs.abs()));
            }
        }
        for (r, soc) in prog.socs.iter().enumerate() {
            let base = sf.soc_std[r];
            duals.insert(soc.tag.clone(), sf.escale[base] * z[base] / tau);
            let t = soc.bound.eval(&primal);
            let un = soc.members.iter().map(|e| e.eval(&primal).powi(2)).sum::<f64>().sqrt();
            slacks.insert(soc.tag.clone(), (t - un) / (1.0 + t.abs()));
        }
    } else if status == SolveStatus::Unbounded {
        // unbounded ray, normalized by the objective improvement rate
        let cx = dot(&sf.c, &x);
        if cx < 0.0 {
            for i in 0..n {
                primal[i] = sf.dscale[i] * x[i] / (-cx);
            }
        }
    }

    Ok(ContinuousSolution {
        status,
        primal,
        duals,
        slacks,
        objective,
        kkt_residuals: metrics,
        iterations,
    })
}

/// Includes a reducible row in the active set when its normalized slack is
/// at most `eps` or its dual magnitude clears `1e-6 * (1 + |objective|)`.
pub fn extract_active_set(
    sol: &ContinuousSolution,
    prog: &ConicProgram,
    eps: f64,
) -> ActiveSet {
    let dual_eps = 1e-6 * (1.0 + sol.objective.abs());
    let mut tags = std::collections::HashSet::new();
    for tag in prog.reducible_tags() {
        let slack = sol.slacks.get(tag).copied().unwrap_or(0.0);
        let dual = sol.duals.get(tag).copied().unwrap_or(0.0);
        if slack <= eps || dual.abs() >= dual_eps {
            tags.insert(tag.clone());
        }
    }
    ActiveSet { tags, tolerance: eps }
}

struct StepWorkspace {
    rhs_x: Vec<f64>,
    rhs_z: Vec<f64>,
    rhs_s: Vec<f64>,
    dx: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    shift: Vec<f64>,
    kkt_rhs: Vec<f64>,
    kkt_sol: Vec<f64>,
    tmp_m: Vec<f64>,
    tmp_m2: Vec<f64>,
}

impl StepWorkspace {
    fn new(n: usize, m: usize) -> Self {
        StepWorkspace {
            rhs_x: vec![0.0; n],
            rhs_z: vec![0.0; m],
            rhs_s: vec![0.0; m],
            dx: vec![0.0; n],
            dz: vec![0.0; m],
            ds: vec![0.0; m],
            dtau: 0.0,
            dkappa: 0.0,
            shift: vec![0.0; m],
            kkt_rhs: vec![0.0; n + m],
            kkt_sol: vec![0.0; n + m],
            tmp_m: vec![0.0; m],
            tmp_m2: vec![0.0; m],
        }
    }
}

/// Solves one Newton system of the embedding given the factored KKT and
/// the constant column `(x2, z2)`. Reads `rhs_x/rhs_z/rhs_s` from the
/// workspace and leaves the direction in `dx/dz/ds/dtau/dkappa`.
#[allow(clippy::too_many_arguments)]
fn solve_step(
    sf: &StdForm,
    ldl: &mut LdlSolver,
    scal: &Scalings,
    blocks: &[ConeBlock],
    ws: &mut StepWorkspace,
    rhs_tau: f64,
    rhs_kappa: f64,
    tau: f64,
    kappa: f64,
    den: f64,
    x2x: &[f64],
    x2z: &[f64],
) -> bool {
    let n = sf.n;
    let m = sf.m;
    scal.shift(blocks, &ws.rhs_s, &mut ws.shift);
    for i in 0..n {
        ws.kkt_rhs[i] = ws.rhs_x[i];
    }
    for i in 0..m {
        ws.kkt_rhs[n + i] = ws.rhs_z[i] - ws.shift[i];
    }
    ldl.solve(&ws.kkt_rhs, &mut ws.kkt_sol);
    let (x1, z1) = ws.kkt_sol.split_at(n);

    let num = rhs_tau + rhs_kappa / tau + dot(&sf.c, x1) + dot(&sf.b, z1);
    if den.abs() < 1e-300 {
        return false;
    }
    let dtau = num / den;
    for i in 0..n {
        ws.dx[i] = x1[i] + dtau * x2x[i];
    }
    for i in 0..m {
        ws.dz[i] = z1[i] + dtau * x2z[i];
    }
    // ds = shift - H dz
    scal.mul_w(blocks, &ws.dz, &mut ws.tmp_m);
    scal.mul_w(blocks, &ws.tmp_m, &mut ws.tmp_m2);
    for i in 0..m {
        ws.ds[i] = ws.shift[i] - ws.tmp_m2[i];
    }
    ws.dtau = dtau;
    ws.dkappa = (rhs_kappa - kappa * dtau) / tau;
    ws.dx.iter().chain(ws.dz.iter()).all(|v| v.is_finite())
        && dtau.is_finite()
        && ws.dkappa.is_finite()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Standard-form data: `min c'x : Ax + s = b, s in K`, with zero-cone rows
/// first, then nonnegative rows, then second-order cones.
///
/// The data is Ruiz-equilibrated: the stored system is `(EAD) x' + s' =
/// Eb` with `c' = Dc`, where `E` is uniform across each cone block so the
/// scaled slack stays in the same cone. Primal values map back through
/// `x = D x'`, duals through `z = E z'`, and the objective needs no
/// correction since `c''x' = c'x`.
struct StdForm {
    n: usize,
    m: usize,
    // A in CSC over the n variable columns
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    blocks: Vec<ConeBlock>,
    /// std row of each program linear row
    linear_std: Vec<usize>,
    /// std row of each program cone row's bound component
    soc_std: Vec<usize>,
    /// column scales D
    dscale: Vec<f64>,
    /// row scales E
    escale: Vec<f64>,
}

impl StdForm {
    fn build(prog: &ConicProgram) -> StdForm {
        let n = prog.num_vars();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new(); // (row, col, val)
        let mut b = Vec::new();
        let mut blocks = Vec::new();
        let mut linear_std = vec![0usize; prog.rows.len()];
        let mut soc_std = vec![0usize; prog.socs.len()];

        // zero cone: program equality rows, then pinned variables
        let mut row = 0usize;
        for (r, lr) in prog.rows.iter().enumerate() {
            if lr.rel == Relation::Eq {
                linear_std[r] = row;
                for &(i, v) in &lr.coeffs {
                    entries.push((row, i, v));
                }
                b.push(lr.rhs);
                row += 1;
            }
        }
        for var in &prog.variables {
            if var.lower == var.upper && var.lower.is_finite() {
                entries.push((row, var.index, 1.0));
                b.push(var.lower);
                row += 1;
            }
        }
        if row > 0 {
            blocks.push(ConeBlock::Zero { dim: row });
        }

        // nonneg cone: inequality rows and open bounds
        let nn_start = row;
        for (r, lr) in prog.rows.iter().enumerate() {
            match lr.rel {
                Relation::Eq => {}
                Relation::Le => {
                    linear_std[r] = row;
                    for &(i, v) in &lr.coeffs {
                        entries.push((row, i, v));
                    }
                    b.push(lr.rhs);
                    row += 1;
                }
                Relation::Ge => {
                    linear_std[r] = row;
                    for &(i, v) in &lr.coeffs {
                        entries.push((row, i, -v));
                    }
                    b.push(-lr.rhs);
                    row += 1;
                }
            }
        }
        for var in &prog.variables {
            if var.lower == var.upper && var.lower.is_finite() {
                continue; // already pinned by an equality row
            }
            if var.upper.is_finite() {
                entries.push((row, var.index, 1.0));
                b.push(var.upper);
                row += 1;
            }
            if var.lower.is_finite() {
                entries.push((row, var.index, -1.0));
                b.push(-var.lower);
                row += 1;
            }
        }
        if row > nn_start {
            blocks.push(ConeBlock::NonNeg { dim: row - nn_start });
        }

        // second-order cones: s = (bound, members)
        for (r, soc) in prog.socs.iter().enumerate() {
            soc_std[r] = row;
            for &(i, v) in &soc.bound.coeffs {
                entries.push((row, i, -v));
            }
            b.push(soc.bound.constant);
            row += 1;
            for mexpr in &soc.members {
                for &(i, v) in &mexpr.coeffs {
                    entries.push((row, i, -v));
                }
                b.push(mexpr.constant);
                row += 1;
            }
            blocks.push(ConeBlock::Soc { dim: soc.members.len() + 1 });
        }

        let m = row;
        // CSC assembly over columns
        let mut colptr = vec![0usize; n + 1];
        for &(_, j, _) in &entries {
            colptr[j + 1] += 1;
        }
        for j in 0..n {
            colptr[j + 1] += colptr[j];
        }
        let mut next = colptr.clone();
        let mut rowidx = vec![0usize; entries.len()];
        let mut values = vec![0.0; entries.len()];
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&e| (entries[e].1, entries[e].0));
        for e in order {
            let (r, jcol, v) = entries[e];
            let p = next[jcol];
            next[jcol] += 1;
            rowidx[p] = r;
            values[p] = v;
        }

        let mut c = vec![0.0; n];
        for &(i, v) in &prog.objective.coeffs {
            c[i] = v;
        }

        let mut sf = StdForm {
            n,
            m,
            colptr,
            rowidx,
            values,
            b,
            c,
            blocks,
            linear_std,
            soc_std,
            dscale: vec![1.0; n],
            escale: vec![1.0; m],
        };
        sf.equilibrate();
        sf
    }

    /// Ruiz equilibration: alternately divide rows and columns by the
    /// square root of their largest magnitude, with one shared factor per
    /// cone block. Ten rounds are plenty for convergence.
    fn equilibrate(&mut self) {
        // map each row to the start of its block for uniform scaling
        let mut block_of = vec![0usize; self.m];
        let mut block_starts = Vec::with_capacity(self.blocks.len());
        {
            let mut o = 0;
            for (k, b) in self.blocks.iter().enumerate() {
                block_starts.push(o);
                for i in o..o + b.dim() {
                    block_of[i] = k;
                }
                o += b.dim();
            }
        }
        let uniform: Vec<bool> =
            self.blocks.iter().map(|b| matches!(b, ConeBlock::Soc { .. })).collect();

        for _ in 0..10 {
            let mut row_max = vec![0.0f64; self.m];
            let mut col_max = vec![0.0f64; self.n];
            for j in 0..self.n {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    let v = self.values[p].abs();
                    let i = self.rowidx[p];
                    row_max[i] = row_max[i].max(v);
                    col_max[j] = col_max[j].max(v);
                }
            }
            // share the per-block maximum across cone rows
            let mut block_max = vec![0.0f64; self.blocks.len()];
            for i in 0..self.m {
                block_max[block_of[i]] = block_max[block_of[i]].max(row_max[i]);
            }
            let mut row_f = vec![1.0f64; self.m];
            for i in 0..self.m {
                let mx = if uniform[block_of[i]] { block_max[block_of[i]] } else { row_max[i] };
                if mx > 0.0 && mx.is_finite() {
                    row_f[i] = 1.0 / mx.sqrt();
                }
            }
            let mut col_f = vec![1.0f64; self.n];
            for j in 0..self.n {
                if col_max[j] > 0.0 && col_max[j].is_finite() {
                    col_f[j] = 1.0 / col_max[j].sqrt();
                }
            }
            for j in 0..self.n {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    self.values[p] *= row_f[self.rowidx[p]] * col_f[j];
                }
            }
            for i in 0..self.m {
                self.b[i] *= row_f[i];
                self.escale[i] *= row_f[i];
            }
            for j in 0..self.n {
                self.c[j] *= col_f[j];
                self.dscale[j] *= col_f[j];
            }
        }
        let _ = block_starts;
    }

    fn a_mul(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    y[self.rowidx[p]] += self.values[p] * xj;
                }
            }
        }
    }

    fn at_mul(&self, z: &[f64], y: &mut [f64]) {
        for j in 0..self.n {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.values[p] * z[self.rowidx[p]];
            }
            y[j] = acc;
        }
    }
}
