mod common;

use w2h::bnb::{enumerate_oracle, solve_misocp, solve_misocp_with, BnbOptions, MixedStatus};

#[test]
fn agrees_with_enumeration_on_random_instances() {
    for seed in 0..15u64 {
        let prog = common::random_misocp(3000 + seed, 4 + (seed % 4) as usize, 5);
        let bnb = solve_misocp(&prog, 0.0, 100_000).unwrap();
        let oracle = enumerate_oracle(&prog).unwrap();
        assert_eq!(bnb.status, oracle.status, "seed {seed}");
        if bnb.status == MixedStatus::Optimal {
            let rel = (bnb.objective - oracle.objective).abs() / (1.0 + oracle.objective.abs());
            assert!(
                rel <= 1e-6,
                "seed {seed}: bnb {} oracle {} rel {rel:.2e}",
                bnb.objective,
                oracle.objective
            );
        }
    }
}

#[test]
fn incumbents_satisfy_original_rows() {
    for seed in [5u64, 9, 12] {
        let prog = common::random_misocp(4000 + seed, 5, 6);
        let sol = solve_misocp(&prog, 0.0, 100_000).unwrap();
        if sol.status != MixedStatus::Optimal {
            continue;
        }
        // reconstruct the full point: continuous solution carries all vars
        let point = sol.continuous.as_ref().unwrap().primal.clone();
        for (&idx, &v) in &sol.binaries {
            assert!((point[idx] - v as f64).abs() < 1e-8);
        }
        assert!(
            prog.max_violation(&point) <= 1e-8,
            "seed {seed}: violation {:.2e}",
            prog.max_violation(&point)
        );
    }
}

#[test]
fn node_log_bounds_are_monotone_down_branches() {
    let prog = common::random_misocp(77, 6, 5);
    let mut log = Vec::new();
    let sol = solve_misocp_with(&prog, 0.0, BnbOptions { node_limit: 100_000, log: Some(&mut log) })
        .unwrap();
    assert_eq!(sol.status, MixedStatus::Optimal);

    // parse `node id parent depth bound status`
    let mut bound_of = std::collections::HashMap::new();
    let text = String::from_utf8(log).unwrap();
    for line in text.lines() {
        let f: Vec<&str> = line.split(' ').collect();
        let id: usize = f[1].parse().unwrap();
        let parent: isize = f[3].parse().unwrap();
        let bound: f64 = f[7].parse().unwrap();
        let status = f[9];
        if status == "branched" || status == "integral" {
            bound_of.insert(id, bound);
            if parent >= 0 {
                if let Some(&pb) = bound_of.get(&(parent as usize)) {
                    assert!(
                        bound >= pb - 1e-7 * (1.0 + pb.abs()),
                        "child {id} bound {bound} below parent {pb}"
                    );
                }
            }
        }
    }
}

#[test]
fn deterministic_node_counts_and_incumbent() {
    let prog = common::random_misocp(123, 7, 6);
    let a = solve_misocp(&prog, 0.0, 100_000).unwrap();
    let b = solve_misocp(&prog, 0.0, 100_000).unwrap();
    assert_eq!(a.node_count, b.node_count);
    assert_eq!(a.binaries, b.binaries);
    assert_eq!(a.objective, b.objective);
}

#[test]
fn oracle_self_consistency_zero_and_one_binary() {
    let prog0 = common::random_misocp(500, 0, 4);
    let o0 = enumerate_oracle(&prog0).unwrap();
    let c0 = w2h::solver::solve_socp(&prog0, 1e-8).unwrap();
    assert!((o0.objective - c0.objective).abs() < 1e-8);

    let prog1 = common::random_misocp(501, 1, 4);
    let o1 = enumerate_oracle(&prog1).unwrap();
    let b1 = solve_misocp(&prog1, 0.0, 1000).unwrap();
    assert!((o1.objective - b1.objective).abs() < 1e-7);
}
