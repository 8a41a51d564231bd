use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::forest::ForestConfig;
use crate::matrix::Matrix;

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let e = noise(rng, n);
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = phi * y[t - 1] + e[t];
    }
    y
}

#[test]
fn lag_matrix_small_cases() {
    let y = [1.0, 2.0, 3.0, 4.0];
    let d = build_lag_matrix(&LagSpec {
        target: &y,
        regressors: vec![Regressor {
            values: &y,
            max_lag: 1,
        }],
    })
    .unwrap();
    assert_eq!(d.y, vec![2.0, 3.0, 4.0]);
    assert_eq!(d.x.column(0), vec![1.0, 2.0, 3.0]);
    let s = [5.0, 6.0, 7.0];
    let d = build_lag_matrix(&LagSpec {
        target: &s,
        regressors: vec![Regressor {
            values: &s,
            max_lag: 2,
        }],
    })
    .unwrap();
    assert_eq!(d.x.rows(), 1);
    assert_eq!(d.x.row(0), &[6.0, 5.0]);
    assert_eq!(d.y, vec![7.0]);
    assert!(matches!(
        build_lag_matrix(&LagSpec {
            target: &s,
            regressors: vec![Regressor {
                values: &s,
                max_lag: 3
            }],
        }),
        Err(GrangerError::SeriesTooShort { t: 3, need: 3 })
    ));
}

/// Builds the same design with explicit time indexing.
fn naive_design(target: &[f64], regs: &[(&[f64], usize)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = regs.iter().map(|r| r.1).max().unwrap();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for t in m..target.len() {
        let mut row = Vec::new();
        for (s, l) in regs {
            for k in 1..=*l {
                row.push(s[t - k]);
            }
        }
        rows.push(row);
        ys.push(target[t]);
    }
    (rows, ys)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_matrix_matches_naive(seed in 0u64..10_000, lx in 1usize..5, ly in 1usize..5, lc in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12 + (seed % 7) as usize;
        let (x, y, c) = (noise(&mut rng, n), noise(&mut rng, n), noise(&mut rng, n));
        let regs: Vec<(&[f64], usize)> = vec![(&y, ly), (&c, lc), (&x, lx)];
        let d = build_lag_matrix(&LagSpec {
            target: &y,
            regressors: regs.iter().map(|&(values, max_lag)| Regressor { values, max_lag }).collect(),
        }).unwrap();
        let (rows, ys) = naive_design(&y, &regs);
        prop_assert_eq!(&d.x, &Matrix::from_rows(&rows));
        prop_assert_eq!(&d.y, &ys);
        // every cell equals its source value at the claimed index
        for r in 0..d.x.rows() {
            let t = d.first_t + r;
            for (j, &(i, l)) in d.columns.iter().enumerate() {
                prop_assert_eq!(d.x.get(r, j), regs[i].0[t - l]);
            }
        }
    }
}

#[test]
fn linear_independent_noise_is_not_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = noise(&mut rng, 2000);
    let y = ar1(&mut rng, 2000, 0.5);
    let r = linear_granger(&x, &y, &[], 2, 0.05).unwrap();
    // F(2, 1993) critical value at 0.95
    assert!(r.statistic < 3.0, "{}", r.statistic);
    let p = r.p_value.unwrap();
    assert!(!r.reject && p > 0.05);
    assert_eq!(r.df_num, Some(2));
    assert_eq!(r.df_den, Some(1998 - 5));
}

#[test]
fn linear_detects_strong_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x = noise(&mut rng, 500);
    let e = noise(&mut rng, 500);
    let mut y = vec![0.0; 500];
    for t in 1..500 {
        y[t] = 0.9 * x[t - 1] + 0.1 * e[t];
    }
    let r = linear_granger(&x, &y, &[], 1, 0.05).unwrap();
    assert!(r.p_value.unwrap() < 1e-6);
    assert!(r.reject);
}

#[test]
fn linear_shifted_copy_stays_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = noise(&mut rng, 200);
    let mut y = vec![0.0; 200];
    y[1..].copy_from_slice(&x[..199]);
    let r = linear_granger(&x, &y, &[], 2, 0.05).unwrap();
    assert!(r.statistic.is_finite());
    assert!(r.statistic > 1e6);
    assert!(r.flags.contains(&Flag::RidgeFallback), "{:?}", r.flags);
    assert_eq!(r.p_value, Some(0.0));
    assert!(r.reject);
}

#[test]
fn linear_f_is_scale_and_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let n = 300;
    let (x, c1, c2) = (noise(&mut rng, n), noise(&mut rng, n), noise(&mut rng, n));
    let mut y = ar1(&mut rng, n, 0.3);
    for t in 1..n {
        y[t] += 0.2 * x[t - 1] + 0.3 * c1[t - 1];
    }
    let base = linear_granger(
        &x,
        &y,
        &[Series::new("a", &c1), Series::new("b", &c2)],
        2,
        0.05,
    )
    .unwrap();
    let swapped = linear_granger(
        &x,
        &y,
        &[Series::new("b", &c2), Series::new("a", &c1)],
        2,
        0.05,
    )
    .unwrap();
    assert_eq!(base.statistic.to_bits(), swapped.statistic.to_bits());
    assert_eq!(base.conditioning, vec!["a", "b"]);
    let xs: Vec<f64> = x.iter().map(|v| 3.7 * v - 12.0).collect();
    let c1s: Vec<f64> = c1.iter().map(|v| -0.2 * v + 5.0).collect();
    let scaled = linear_granger(
        &xs,
        &y,
        &[Series::new("a", &c1s), Series::new("b", &c2)],
        2,
        0.05,
    )
    .unwrap();
    let rel = (scaled.statistic - base.statistic).abs() / base.statistic;
    assert!(rel < 1e-9, "{rel}");
    assert_eq!(scaled.reject, base.reject);
}

#[test]
fn linear_null_rejection_rate() {
    let mut rejections = 0;
    for trial in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let x = ar1(&mut rng, 500, 0.4);
        let y = ar1(&mut rng, 500, 0.6);
        if linear_granger(&x, &y, &[], 2, 0.05).unwrap().reject {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 500.0;
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn errors_are_reported() {
    let v = vec![1.0; 10];
    assert!(matches!(
        linear_granger(&v, &v, &[], 0, 0.05),
        Err(GrangerError::InvalidLag)
    ));
    assert!(matches!(
        linear_granger(&v[..5], &v, &[], 1, 0.05),
        Err(GrangerError::Length { .. })
    ));
    let short = vec![0.5; 4];
    let cfg = NnConfig {
        steps: 1,
        ..NnConfig::default()
    };
    let err = nn_granger_conditional(&short, &short, &[], 1, &cfg, 0.05).unwrap_err();
    assert!(err.to_string().contains("insufficient samples for dof accounting"), "{err}");
}

fn small_nn() -> NnConfig {
    NnConfig {
        steps: 60,
        ..NnConfig::default()
    }
}

#[test]
fn nn_empty_conditioning_is_unconditional() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let x = noise(&mut rng, 200);
    let y = ar1(&mut rng, 200, 0.5);
    let cfg = small_nn();
    let r = nn_granger_conditional(&x, &y, &[], 2, &cfg, 0.05).unwrap();
    assert!(r.conditioning.is_empty());
    assert_eq!(r.df_num, Some(cfg.param_count(4) - cfg.param_count(2)));
    assert_eq!(r.df_num, Some(20));
    assert_eq!(r.df_den, Some(198 - cfg.param_count(4)));
    assert!(r.p_value.unwrap() >= 0.0 && r.p_value.unwrap() <= 1.0);
    assert!(r.statistic >= 0.0);
}

#[test]
fn nn_is_deterministic_scale_and_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 150;
    let (x, c1, c2) = (noise(&mut rng, n), noise(&mut rng, n), noise(&mut rng, n));
    let y = ar1(&mut rng, n, 0.5);
    let cfg = small_nn();
    let run = |x: &[f64], a: &[f64], order: bool| {
        let conds = if order {
            vec![Series::new("c1", a), Series::new("c2", &c2)]
        } else {
            vec![Series::new("c2", &c2), Series::new("c1", a)]
        };
        nn_granger_conditional(x, &y, &conds, 1, &cfg, 0.05).unwrap()
    };
    let base = run(&x, &c1, true);
    assert_eq!(base, run(&x, &c1, true));
    assert_eq!(base, run(&x, &c1, false));
    // power-of-two rescaling commutes exactly with standardization
    let x4: Vec<f64> = x.iter().map(|v| 4.0 * v).collect();
    let c8: Vec<f64> = c1.iter().map(|v| 0.125 * v).collect();
    let scaled = run(&x4, &c8, true);
    assert_eq!(base.statistic.to_bits(), scaled.statistic.to_bits());
    // general affine maps agree to rounding and keep the decision
    let xa: Vec<f64> = x.iter().map(|v| 2.3 * v + 7.0).collect();
    let affine = run(&xa, &c1, true);
    assert_eq!(affine.reject, base.reject);
    assert!((affine.statistic - base.statistic).abs() < 1e-6 * base.statistic.max(1.0));
}

#[test]
fn r2_examples() {
    let y = [1.0, 2.0, 3.0];
    assert_eq!(r2(&y, &y, 0).unwrap(), 1.0);
    assert_eq!(r2(&y, &[2.0, 2.0, 2.0], 0).unwrap(), 0.0);
    assert_eq!(r2(&y, &[1.0, 2.0, 4.0], 0).unwrap(), 0.5);
    // the first L entries are excluded, mean over the remaining ones
    assert_eq!(r2(&[9.0, 1.0, 3.0], &[0.0, 1.0, 4.0], 1).unwrap(), 0.5);
    assert!(matches!(r2(&[1.0, 1.0], &[1.0, 2.0], 0), Err(GrangerError::ConstantTarget)));
}

fn quick_forest() -> ForestConfig {
    ForestConfig {
        n_trees: 40,
        ..ForestConfig::default()
    }
}

#[test]
fn gc_r2_noise_cause_is_near_zero() {
    let mut total = 0.0;
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let x = noise(&mut rng, 500);
        let y = ar1(&mut rng, 500, 0.7);
        let r = gc_r2(&x, &y, &[], 2, &quick_forest(), trial).unwrap();
        assert_eq!(r.method, Method::RfR2);
        assert!(r.p_value.is_none());
        total += r.statistic;
    }
    let mean = total / 20.0;
    assert!(mean.abs() <= 0.02, "{mean}");
}

#[test]
fn gc_r2_swap_negates() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = noise(&mut rng, 300);
    let y = ar1(&mut rng, 300, 0.5);
    let d = |seed| {
        let (xr, xf, t, _) = super::nested_designs(&x, &y, &[], 2).unwrap();
        let (a, b) = delta_r2(&xr, &xf, &t, &quick_forest(), seed).unwrap();
        let (c, e) = delta_r2(&xf, &xr, &t, &quick_forest(), seed).unwrap();
        (b - a, e - c)
    };
    let (fwd, rev) = d(3);
    assert_eq!(fwd, -rev);
    let r = gc_r2(&x, &y, &[], 2, &quick_forest(), 3).unwrap();
    assert_eq!(r.statistic, fwd);
    assert!(matches!(
        gc_r2(&x[..6], &y[..6], &[], 2, &quick_forest(), 3),
        Err(GrangerError::SeriesTooShort { .. })
    ));
}

#[test]
fn diff_metric_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let x = noise(&mut rng, 300);
    let y = ar1(&mut rng, 300, 0.5);
    let c = noise(&mut rng, 300);
    let fc = quick_forest();
    let a = gc_r2(&x, &y, &[Series::new("p_1", &c)], 2, &fc, 1).unwrap();
    let b = gc_r2(&x, &y, &[Series::new("z_1", &y)], 2, &fc, 1).unwrap();
    assert_eq!(diff_metric(&a, &a).unwrap().value, 0.0);
    let ab = diff_metric(&a, &b).unwrap();
    assert_eq!(ab.value, diff_metric(&b, &a).unwrap().value);
    assert_eq!(ab.value, (a.statistic - b.statistic).abs());
    assert_eq!(ab.conditioning, vec!["p_1"]);
    assert_eq!(ab.reference, vec!["z_1"]);
    let other_seed = gc_r2(&x, &y, &[], 2, &fc, 2).unwrap();
    assert!(matches!(diff_metric(&a, &other_seed), Err(GrangerError::ConfigMismatch(_))));
    let lin = linear_granger(&x, &y, &[], 2, 0.05).unwrap();
    assert!(diff_metric(&a, &lin).is_err());
}

#[test]
fn results_serialize() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let x = noise(&mut rng, 100);
    let y = ar1(&mut rng, 100, 0.5);
    let r = linear_granger(&x, &y, &[Series::new("p_1", &x)], 1, 0.05).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    let back: GrangerResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_results_csv(&path, &[r.clone(), r]).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), GrangerResult::csv_header().len());
    assert_eq!(rdr.records().count(), 2);
    let _ = rng.random::<u8>();
}
