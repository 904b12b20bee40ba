mod common;

use common::{brute_force, close, random_dataset, rng};
use rand::Rng;
use surtree::loss::tree_loss;
use surtree::solver::{solve, SolverConfig};

#[test]
fn matches_exhaustive_enumeration() {
    let mut r = rng(41);
    for case in 0..60 {
        let n = r.random_range(1..=48);
        let nf = r.random_range(1..=6);
        let data = random_dataset(&mut r, n, nf);
        for (d, nodes) in [(0, 0), (1, 1), (2, 2), (2, 3), (3, 4)] {
            let expected = brute_force(&data, d, nodes);
            for (use_depth2, use_bounds) in [(true, true), (false, true), (false, false)] {
                let mut cfg = SolverConfig::new(d, nodes);
                cfg.use_depth2 = use_depth2;
                cfg.use_bounds = use_bounds;
                let (tree, loss) = solve(&data, &cfg).unwrap();
                assert!(close(loss, expected, 1e-9), "case {case} d={d} n={nodes} {use_depth2}/{use_bounds}: {loss} vs {expected}");
                assert!(tree.depth() <= d as usize && tree.internal_nodes() <= nodes as usize);
                assert!(close(tree_loss(&tree, &data).unwrap(), loss, 1e-9));
            }
        }
    }
}

#[test]
fn bounded_and_unbounded_trees_agree() {
    let mut r = rng(43);
    for _ in 0..20 {
        let data = random_dataset(&mut r, 60, 7);
        let mut cfg = SolverConfig::full(3);
        cfg.use_depth2 = false;
        let a = solve(&data, &cfg).unwrap();
        cfg.use_bounds = false;
        let b = solve(&data, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}
