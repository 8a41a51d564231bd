use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_data(seed: u64, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| r[0].sin() + r.iter().sum::<f64>() * 0.3 + rng.random_range(-0.1..0.1))
        .collect();
    (Matrix::from_rows(&rows), y)
}

fn rss(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum()
}

fn sse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - m).powi(2)).sum()
}

/// Brute force over every (feature, midpoint) pair, scored by direct SSE.
fn brute_best(x: &Matrix, y: &[f64], rows: &[usize]) -> Option<(usize, f64, f64)> {
    let parent = sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x.get(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<f64>, Vec<f64>) = {
                let l = rows.iter().filter(|&&i| x.get(i, f) <= thr).map(|&i| y[i]);
                let r = rows.iter().filter(|&&i| x.get(i, f) > thr).map(|&i| y[i]);
                (l.collect(), r.collect())
            };
            let cost = sse(&l) + sse(&r);
            if cost < parent && best.is_none_or(|b| cost < b.2) {
                best = Some((f, thr, cost));
            }
        }
    }
    best
}

#[test]
fn constant_target_is_one_leaf() {
    let (x, _) = random_data(1, 30, 3);
    let y = vec![2.5; 30];
    let t = fit_tree(&x, &y, &TreeConfig::default(), 0).unwrap();
    assert_eq!(t.nodes, vec![Node::Leaf { value: 2.5, count: 30 }]);
    assert!(t.predict(&x).unwrap().iter().all(|&p| p == 2.5));
}

#[test]
fn step_function_depth_one() {
    let xs = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0];
    let y: Vec<f64> = xs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let x = Matrix::from_columns(&[xs.to_vec()]);
    let cfg = TreeConfig {
        max_depth: 1,
        min_leaf: 1,
        mtry: None,
    };
    let t = fit_tree(&x, &y, &cfg, 0).unwrap();
    match t.nodes[0] {
        Node::Split {
            feature, threshold, ..
        } => {
            assert_eq!(feature, 0);
            assert_eq!(threshold, 0.0);
        }
        _ => panic!("expected a split"),
    }
    assert_eq!(t.predict(&x).unwrap(), y);
}

#[test]
fn depth_two_matches_brute_force() {
    for seed in 0..25 {
        let (x, y) = random_data(100 + seed, 8, 2);
        let cfg = TreeConfig {
            max_depth: 2,
            min_leaf: 1,
            mtry: None,
        };
        let t = fit_tree(&x, &y, &cfg, 0).unwrap();
        let all: Vec<usize> = (0..8).collect();
        let (f, thr, _) = brute_best(&x, &y, &all).unwrap();
        let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x.get(i, f) <= thr);
        let child = |rows: &[usize]| {
            if rows.len() < 2 {
                return sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
            }
            brute_best(&x, &y, rows)
                .map(|b| b.2)
                .unwrap_or_else(|| sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>()))
        };
        let expected = child(&l) + child(&r);
        let got = rss(&t.predict(&x).unwrap(), &y);
        assert!((got - expected).abs() < 1e-12, "seed {seed}: {got} vs {expected}");
    }
}

#[test]
fn leaves_respect_min_leaf() {
    let (x, y) = random_data(3, 200, 4);
    let t = fit_tree(&x, &y, &TreeConfig::default(), 0).unwrap();
    assert!(t.depth() <= 8);
    let mut total = 0;
    for (_, c) in t.leaves() {
        assert!(c >= 5);
        total += c;
    }
    assert_eq!(total, 200);
}

#[test]
fn deeper_never_increases_training_rss() {
    for seed in 0..5 {
        let (x, y) = random_data(seed, 150, 3);
        let mut prev = f64::INFINITY;
        for depth in 0..10 {
            let cfg = TreeConfig {
                max_depth: depth,
                min_leaf: 2,
                mtry: None,
            };
            let t = fit_tree(&x, &y, &cfg, 0).unwrap();
            let r = rss(&t.predict(&x).unwrap(), &y);
            assert!(r <= prev + 1e-9, "depth {depth}: {r} > {prev}");
            prev = r;
        }
    }
}

#[test]
fn single_tree_forest_equals_tree() {
    let (x, y) = random_data(7, 120, 3);
    let fc = ForestConfig {
        n_trees: 1,
        mtry: Some(3),
        bootstrap: false,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&x, &y, &fc, 9).unwrap();
    let tree = fit_tree(&x, &y, &TreeConfig::default(), 9).unwrap();
    assert_eq!(forest.predict(&x).unwrap(), tree.predict(&x).unwrap());
}

#[test]
fn forest_fits_held_out_sinusoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 1000;
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = u
        .iter()
        .zip(&noise)
        .map(|(a, e)| (2.0 * std::f64::consts::PI * a).sin() + 0.1 * e)
        .collect();
    let x = Matrix::from_columns(&[u]);
    let (tr, te) = (700, n);
    let model = fit_forest(
        &x.slice_rows(0, tr),
        &y[..tr],
        &ForestConfig::default(),
        1,
    )
    .unwrap();
    let pred = model.predict(&x.slice_rows(tr, te)).unwrap();
    let truth = &y[tr..];
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let tss: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = 1.0 - rss(&pred, truth) / tss;
    assert!(r2 >= 0.8, "{r2}");
}

#[test]
fn forest_is_deterministic_and_parallel_invariant() {
    let (x, y) = random_data(11, 200, 5);
    let cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::default()
    };
    let a = fit_forest(&x, &y, &cfg, 3).unwrap();
    let b = fit_forest(&x, &y, &cfg, 3).unwrap();
    let c = fit_forest(
        &x,
        &y,
        &ForestConfig {
            parallel: true,
            ..cfg
        },
        3,
    )
    .unwrap();
    assert_eq!(a.trees, b.trees);
    assert_eq!(a.trees, c.trees);
    assert_eq!(a.mtry, 2);
    let d = fit_forest(&x, &y, &cfg, 4).unwrap();
    assert_ne!(a.trees, d.trees);
}

#[test]
fn errors() {
    let empty = Matrix::zeros(0, 0);
    assert_eq!(
        fit_forest(&empty, &[], &ForestConfig::default(), 0).unwrap_err(),
        ForestError::Empty
    );
    let (x, y) = random_data(1, 10, 2);
    assert!(matches!(
        fit_tree(&x, &y[..5], &TreeConfig::default(), 0),
        Err(ForestError::Length { .. })
    ));
    let t = fit_tree(&x, &y, &TreeConfig::default(), 0).unwrap();
    assert!(matches!(
        t.predict(&Matrix::zeros(2, 3)),
        Err(ForestError::Features { expected: 2, got: 3 })
    ));
    let dump = t.dump();
    assert!(dump.contains("leaf"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn predictions_within_target_range(seed in 0u64..10_000) {
        let (x, y) = random_data(seed, 60, 3);
        let cfg = ForestConfig { n_trees: 10, min_leaf: 2, ..ForestConfig::default() };
        let m = fit_forest(&x, &y, &cfg, seed).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (probe, _) = random_data(seed + 1, 40, 3);
        for p in m.predict(&probe).unwrap() {
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn row_permutation_leaves_tree_unchanged(seed in 0u64..10_000) {
        let (x, y) = random_data(seed, 50, 3);
        let cfg = TreeConfig { max_depth: 5, min_leaf: 2, mtry: None };
        let t = fit_tree(&x, &y, &cfg, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut perm: Vec<usize> = (0..50).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| x.row(i).to_vec()).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let tp = fit_tree(&Matrix::from_rows(&rows), &yp, &cfg, 0).unwrap();
        prop_assert_eq!(t, tp);
    }
}
