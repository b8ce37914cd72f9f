mod common;

use w2h::conic::{AffineExpr, ConstraintTag, EquationId, ProgramBuilder, Relation};
use w2h::solver::{extract_active_set, solve_socp, solve_socp_with, SolveOptions, SolveStatus};

fn tag(asset: &str) -> ConstraintTag {
    ConstraintTag::new(EquationId::Custom, asset, 0)
}

#[test]
fn min_x_above_one() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    b.add_row(vec![(x, 1.0)], Relation::Ge, 1.0, tag("lo")).unwrap();
    b.obj_term(x, 1.0);
    let prog = b.build().unwrap();

    let sol = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal[x] - 1.0).abs() < 1e-7);
    assert!((sol.objective - 1.0).abs() < 1e-7);
}

#[test]
fn norm_of_3_4_is_5() {
    let mut b = ProgramBuilder::new();
    let t = b.add_continuous("t", f64::NEG_INFINITY, f64::INFINITY);
    b.add_soc(
        AffineExpr::term(t, 1.0),
        vec![AffineExpr::constant(3.0), AffineExpr::constant(4.0)],
        tag("norm"),
    )
    .unwrap();
    b.obj_term(t, 1.0);
    let prog = b.build().unwrap();

    let sol = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 5.0).abs() < 1e-6, "objective {}", sol.objective);
}

#[test]
fn detects_infeasible() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", 0.0, 1.0);
    b.add_row(vec![(x, 1.0)], Relation::Ge, 2.0, tag("impossible")).unwrap();
    b.obj_term(x, 1.0);
    let prog = b.build().unwrap();
    let sol = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn detects_unbounded() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    b.add_row(vec![(x, 1.0)], Relation::Le, 5.0, tag("cap")).unwrap();
    b.obj_term(x, 1.0); // min x with x unbounded below
    let prog = b.build().unwrap();
    let sol = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

#[test]
fn twenty_constructed_socps_match_their_planted_optima() {
    for seed in 0..20u64 {
        let (prog, opt) = common::constructed_socp(1000 + seed);
        let sol = solve_socp(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let rel = (sol.objective - opt).abs() / (1.0 + opt.abs());
        assert!(rel <= 1e-6, "seed {seed}: got {} want {} rel {rel:.2e}", sol.objective, opt);
        let (p, d, g) = sol.kkt_residuals;
        assert!(p <= 1e-7 && d <= 1e-7 && g <= 1e-7, "seed {seed}: residuals {:?}", (p, d, g));
    }
}

#[test]
fn active_set_picks_binding_row() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    b.add_row(vec![(x, 1.0)], Relation::Ge, 1.0, tag("lo").reducible()).unwrap();
    b.add_row(vec![(x, 1.0)], Relation::Le, 9.0, tag("hi").reducible()).unwrap();
    b.obj_term(x, 1.0);
    let prog = b.build().unwrap();

    let sol = solve_socp(&prog, 1e-8).unwrap();
    let active = extract_active_set(&sol, &prog, 1e-6);
    assert!(active.tags.contains(&tag("lo").reducible()));
    assert!(!active.tags.contains(&tag("hi").reducible()));
}

#[test]
fn interior_optimum_has_empty_active_set() {
    // min (distance-like) t with ||(x-1, y-2)|| <= t, generous box rows
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    let y = b.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
    let t = b.add_continuous("t", f64::NEG_INFINITY, f64::INFINITY);
    b.add_soc(
        AffineExpr::term(t, 1.0),
        vec![AffineExpr::new(vec![(x, 1.0)], -1.0), AffineExpr::new(vec![(y, 1.0)], -2.0)],
        tag("dist"),
    )
    .unwrap();
    b.add_row(vec![(x, 1.0)], Relation::Le, 50.0, tag("bx").reducible()).unwrap();
    b.add_row(vec![(y, 1.0)], Relation::Le, 50.0, tag("by").reducible()).unwrap();
    b.obj_term(t, 1.0);
    let prog = b.build().unwrap();

    let sol = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.objective.abs() < 1e-5);
    let active = extract_active_set(&sol, &prog, 1e-6);
    assert!(active.tags.is_empty(), "unexpected active rows: {:?}", active.tags);
}

#[test]
fn monotone_eps_grows_active_set() {
    let (prog, _) = common::constructed_socp(7);
    let sol = solve_socp(&prog, 1e-8).unwrap();
    let small = extract_active_set(&sol, &prog, 1e-8);
    let large = extract_active_set(&sol, &prog, 1e-3);
    assert!(small.tags.is_subset(&large.tags));
}

#[test]
fn objective_scaling_leaves_point_and_active_set_alone() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    let y = b.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
    b.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0, tag("lo").reducible()).unwrap();
    b.add_row(vec![(x, 1.0), (y, -1.0)], Relation::Le, 10.0, tag("hi").reducible()).unwrap();
    b.obj_term(x, 1.0);
    b.obj_term(y, 2.0);
    let prog = b.build().unwrap();
    let sol1 = solve_socp(&prog, 1e-8).unwrap();
    let act1 = extract_active_set(&sol1, &prog, 1e-6);

    let mut scaled = prog.clone();
    for c in scaled.objective.coeffs.iter_mut() {
        c.1 *= 10.0;
    }
    let sol2 = solve_socp(&scaled, 1e-8).unwrap();
    let act2 = extract_active_set(&sol2, &scaled, 1e-6);

    for i in 0..prog.num_vars() {
        assert!((sol1.primal[i] - sol2.primal[i]).abs() < 1e-6);
    }
    assert_eq!(act1.tags, act2.tags);
}

#[test]
fn complementary_slackness_at_optimum() {
    for seed in [3u64, 11, 19] {
        let (prog, _) = common::constructed_socp(seed);
        let sol = solve_socp(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let scale = 1.0 + sol.objective.abs();
        for row in &prog.rows {
            if row.rel == Relation::Eq {
                continue;
            }
            let slack = sol.slacks[&row.tag] * (1.0 + row.rhs.abs());
            let dual = sol.duals[&row.tag];
            assert!(
                (slack * dual).abs() <= 1e-6 * scale,
                "seed {seed} row {} slack*dual = {:.2e}",
                row.tag,
                slack * dual
            );
        }
    }
}

#[test]
fn iteration_log_has_expected_shape() {
    let mut b = ProgramBuilder::new();
    let x = b.add_continuous("x", 0.0, 5.0);
    b.add_row(vec![(x, 1.0)], Relation::Ge, 1.0, tag("lo")).unwrap();
    b.obj_term(x, 1.0);
    let prog = b.build().unwrap();

    let mut log = Vec::new();
    let sol = solve_socp_with(&prog, 1e-8, SolveOptions { max_iter: 200, log: Some(&mut log) })
        .unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let text = String::from_utf8(log).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("iter 0 mu "), "log line: {first}");
    assert!(first.contains(" p-res ") && first.contains(" d-res ") && first.contains(" gap "));
}

#[test]
fn deterministic_across_runs() {
    let (prog, _) = common::constructed_socp(42);
    let a = solve_socp(&prog, 1e-8).unwrap();
    let b = solve_socp(&prog, 1e-8).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.primal, b.primal);
    assert_eq!(a.objective, b.objective);
}
