//! Shared instance generators for integration tests.
//!
//! `constructed_socp` builds a feasible SOCP from a chosen primal-dual
//! optimal pair, so the optimal value is known by construction and serves
//! as an oracle that is independent of the solver. `random_misocp` builds
//! bounded mixed-integer instances that are feasible at a planted
//! reference point, for branch-and-bound versus enumeration checks.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use w2h::conic::{AffineExpr, ConicProgram, ConstraintTag, EquationId, ProgramBuilder, Relation};

fn tag(asset: String) -> ConstraintTag {
    ConstraintTag::new(EquationId::Custom, asset, 0)
}

/// Builds `min c'x` over unbounded variables with a mix of equality,
/// inequality, and cone rows that are all consistent with a planted
/// optimal point and duals. Returns the program and its optimal value.
pub fn constructed_socp(seed: u64) -> (ConicProgram, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10usize);
    let x_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

    let mut b = ProgramBuilder::new();
    for i in 0..n {
        b.add_continuous(format!("x{i}"), f64::NEG_INFINITY, f64::INFINITY);
    }
    let mut c = vec![0.0f64; n];

    let eval = |coeffs: &[(usize, f64)], x: &[f64]| -> f64 {
        coeffs.iter().map(|&(i, v)| v * x[i]).sum()
    };
    let rand_coeffs = |rng: &mut ChaCha8Rng| -> Vec<(usize, f64)> {
        let k = rng.gen_range(2..=n.min(4));
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        let mut cs: Vec<(usize, f64)> =
            idx[..k].iter().map(|&i| (i, rng.gen_range(-1.5..1.5))).collect();
        cs.sort_by_key(|&(i, _)| i);
        cs
    };

    // equality rows with free duals
    for e in 0..rng.gen_range(0..=2usize) {
        let a = rand_coeffs(&mut rng);
        let y: f64 = rng.gen_range(-1.0..1.0);
        for &(i, v) in &a {
            c[i] -= y * v;
        }
        let rhs = eval(&a, &x_star);
        b.add_row(a, Relation::Eq, rhs, tag(format!("eq{e}"))).unwrap();
    }
    // active inequalities carry positive duals, inactive ones a margin
    let n_act = rng.gen_range(1..=3usize);
    let n_inact = rng.gen_range(1..=3usize);
    for r in 0..n_act + n_inact {
        let a = rand_coeffs(&mut rng);
        let at = eval(&a, &x_star);
        if r < n_act {
            let z: f64 = rng.gen_range(0.2..1.5);
            for &(i, v) in &a {
                c[i] -= z * v;
            }
            b.add_row(a, Relation::Le, at, tag(format!("act{r}"))).unwrap();
        } else {
            let margin: f64 = rng.gen_range(0.3..2.0);
            b.add_row(a, Relation::Le, at + margin, tag(format!("slk{r}"))).unwrap();
        }
    }
    // cone rows; the active one gets a boundary dual
    for s in 0..rng.gen_range(1..=2usize) {
        let k = rng.gen_range(2..=3usize);
        let mut members = Vec::new();
        let mut u_star = Vec::new();
        for _ in 0..k {
            let coeffs = rand_coeffs(&mut rng);
            let shift: f64 = rng.gen_range(-0.5..0.5);
            u_star.push(eval(&coeffs, &x_star) + shift);
            members.push(AffineExpr::new(coeffs, shift));
        }
        let norm = u_star.iter().map(|v| v * v).sum::<f64>().sqrt().max(0.1);
        let f0 = rand_coeffs(&mut rng);
        let active = rng.gen_bool(0.5);
        let g0 = if active {
            norm - eval(&f0, &x_star)
        } else {
            norm + rng.gen_range(0.2..1.0) - eval(&f0, &x_star)
        };
        if active {
            // dual (z0, -z0 * u*/||u*||) lies on the dual cone boundary
            let z0: f64 = rng.gen_range(0.2..1.0);
            for &(i, v) in &f0 {
                c[i] += z0 * v;
            }
            for (m, &um) in members.iter().zip(&u_star) {
                let zm = -z0 * um / norm;
                for &(i, v) in &m.coeffs {
                    c[i] += zm * v;
                }
            }
        }
        b.add_soc(AffineExpr::new(f0, g0), members, tag(format!("soc{s}"))).unwrap();
    }

    for (i, &ci) in c.iter().enumerate() {
        b.obj_term(i, ci);
    }
    let prog = b.build().unwrap();
    let opt = c.iter().zip(&x_star).map(|(a, b)| a * b).sum();
    (prog, opt)
}

/// Bounded mixed-integer SOCP, feasible at a planted point whose binary
/// coordinates are integral. `n_bin` binaries, about `n_cont` continuous
/// variables, with gating rows that tie continuous variables to binaries.
pub fn random_misocp(seed: u64, n_bin: usize, n_cont: usize) -> ConicProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ProgramBuilder::new();
    let mut x0: Vec<f64> = Vec::new();

    let bins: Vec<usize> = (0..n_bin).map(|i| b.add_binary(format!("b{i}"))).collect();
    for _ in 0..n_bin {
        x0.push(if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    }
    let conts: Vec<usize> =
        (0..n_cont).map(|i| b.add_continuous(format!("x{i}"), 0.0, 10.0)).collect();
    for _ in 0..n_cont {
        x0.push(rng.gen_range(0.0..3.0));
    }

    // gating rows x <= ub * b; force the reference point consistent
    let n_gates = n_bin.min(n_cont);
    for g in 0..n_gates {
        let xc = conts[g];
        let bg = bins[g];
        let ub: f64 = rng.gen_range(2.0..8.0);
        if x0[bg] == 0.0 {
            x0[xc] = 0.0;
        } else {
            x0[xc] = x0[xc].min(ub);
        }
        b.add_row(vec![(xc, 1.0), (bg, -ub)], Relation::Le, 0.0, tag(format!("gate{g}")))
            .unwrap();
    }
    // a knapsack-style row over binaries
    if n_bin >= 2 {
        let lhs: f64 = bins.iter().map(|&bi| x0[bi]).sum();
        let cap = lhs + rng.gen_range(0.0..1.5);
        b.add_row(
            bins.iter().map(|&bi| (bi, 1.0)).collect(),
            Relation::Le,
            cap.floor().max(1.0),
            tag("knap".into()),
        )
        .unwrap();
    }
    // random linear couplings, feasible at x0 with a margin
    for r in 0..n_cont {
        let k = rng.gen_range(2..=3usize).min(n_cont);
        let mut coeffs = Vec::new();
        for _ in 0..k {
            coeffs.push((conts[rng.gen_range(0..n_cont)], rng.gen_range(-1.0..1.0)));
        }
        let at: f64 = coeffs.iter().map(|&(i, v)| v * x0[i]).sum();
        b.add_row(coeffs, Relation::Le, at + rng.gen_range(0.2..2.0), tag(format!("lin{r}")))
            .unwrap();
    }
    // one cone: ||(x_i, x_j)|| <= t
    if n_cont >= 3 {
        let (xi, xj, t) = (conts[0], conts[1], conts[n_cont - 1]);
        x0[t] = (x0[xi] * x0[xi] + x0[xj] * x0[xj]).sqrt() + rng.gen_range(0.1..1.0);
        b.add_soc(
            AffineExpr::term(t, 1.0),
            vec![AffineExpr::term(xi, 1.0), AffineExpr::term(xj, 1.0)],
            tag("cone".into()),
        )
        .unwrap();
    }
    for v in 0..n_bin + n_cont {
        b.obj_term(v, rng.gen_range(-1.0..1.0));
    }
    b.build().unwrap()
}

/// All-binaries assignment map from a bit pattern, for enumeration in
/// tests.
pub fn assignment(prog: &ConicProgram, bits: u32) -> BTreeMap<usize, u8> {
    prog.binaries
        .iter()
        .enumerate()
        .map(|(k, &idx)| (idx, ((bits >> k) & 1) as u8))
        .collect()
}
