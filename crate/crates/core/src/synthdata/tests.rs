use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

use super::*;

fn cfg(seed: u64) -> DgpConfig {
    DgpConfig {
        t: 400,
        seed,
        ..DgpConfig::default()
    }
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn zero_ploss_copies_confounder() {
    let c = DgpConfig {
        ploss: 0.0,
        d_p: 3,
        ..cfg(1)
    };
    for b in [gen_null(&c).unwrap(), gen_causal(&c).unwrap()] {
        let z = &b.z.as_ref().unwrap()[0];
        assert_eq!(b.p.len(), 3);
        for col in &b.p {
            assert_eq!(col, z);
        }
    }
}

#[test]
fn shapes_and_determinism() {
    let c = DgpConfig {
        d_z: 2,
        d_p: 2,
        ..cfg(5)
    };
    let a = gen_causal(&c).unwrap();
    assert_eq!(a.len(), 400);
    assert_eq!(a.d_z(), 2);
    assert_eq!(a.d_p(), 4);
    assert_eq!(a.provenance, Provenance::DgpCausal);
    assert_eq!(a, gen_causal(&c).unwrap());
    assert_ne!(a, gen_causal(&cfg(6)).unwrap());
    assert!(a.w.as_ref().unwrap().iter().all(|&v| v > -1.0));
    assert!(gen_null(&DgpConfig { t: 0, ..cfg(0) }).is_err());
    assert!(gen_null(&DgpConfig { ploss: -1.0, ..cfg(0) }).is_err());
}

/// Residuals after removing every deterministic term should be 0.05 * N(0, 1).
fn check_noise(resid: &[f64]) {
    let scaled: Vec<f64> = resid.iter().map(|r| r / 0.05).collect();
    let (m, s) = moments(&scaled);
    assert!(m.abs() < 0.2, "mean {m}");
    assert!((s - 1.0).abs() < 0.1, "std {s}");
}

#[test]
fn null_process_equations() {
    let b = gen_null(&DgpConfig { t: 2000, ..cfg(3) }).unwrap();
    let z = &b.z.as_ref().unwrap()[0];
    let (x, y) = (&b.x, &b.y);
    let mut rx = Vec::new();
    let mut ry = Vec::new();
    for t in 4..b.len() {
        let ax = (x[t - 2] / 3.0 + 2.0 * x[t - 1] / 3.0) / 4.0;
        let ay = (y[t - 2] / 3.0 + 2.0 * y[t - 1] / 3.0) / 4.0;
        let fx = (2.0 / 3.0 * z[t - 2] + z[t - 1] / 3.0).tanh();
        let fy = 1.0 / (1.0 + (-(z[t - 4] / 3.0 + 2.0 / 3.0 * z[t - 3])).exp());
        assert!((x[t] - ax).abs() <= 1.0 + (x[t] - ax - fx).abs());
        rx.push(x[t] - ax - fx);
        ry.push(y[t] - ay - fy);
    }
    check_noise(&rx);
    check_noise(&ry);
}

#[test]
fn causal_process_equations_and_ablation() {
    for edge in [true, false] {
        let b = gen_causal(&DgpConfig {
            t: 2000,
            causal_edge: edge,
            ..cfg(4)
        })
        .unwrap();
        let z = &b.z.as_ref().unwrap()[0];
        let w = b.w.as_ref().unwrap();
        let (x, y) = (&b.x, &b.y);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut rx = Vec::new();
        let mut ry = Vec::new();
        for t in 4..b.len() {
            let fx = (2.0 / 3.0 * z[t - 2] + z[t - 1] / 3.0 - 1.0).tanh()
                + sig(0.1 * w[t - 4] + 0.2 * w[t - 3] + 0.3 * w[t - 2] + 0.4 * w[t - 1])
                + (x[t - 2] / 3.0 + 2.0 * x[t - 1] / 3.0) / 4.0;
            let mut fy = sig(z[t - 4] / 3.0 + 2.0 / 3.0 * z[t - 3])
                + (y[t - 2] / 3.0 + 2.0 * y[t - 1] / 3.0) / 4.0;
            if edge {
                fy += (x[t - 2] / 3.0 + 2.0 / 3.0 * x[t - 1] - 1.0).tanh();
            }
            rx.push(x[t] - fx);
            ry.push(y[t] - fy);
        }
        check_noise(&rx);
        check_noise(&ry);
    }
}

#[test]
fn ploss_noise_has_shifted_mean() {
    let b = gen_null(&DgpConfig {
        t: 20_000,
        ploss: 2.0,
        ..cfg(8)
    })
    .unwrap();
    let z = &b.z.as_ref().unwrap()[0];
    let zbar = z.iter().sum::<f64>() / z.len() as f64;
    let d: Vec<f64> = b.p[0].iter().zip(z).map(|(p, z)| (p - z) / (2.0 * zbar)).collect();
    let (m, s) = moments(&d);
    assert!((m - 0.5).abs() < 0.03, "{m}");
    assert!((s - 1.0).abs() < 0.03, "{s}");
}

#[test]
fn noisy_proxy_scale_and_independence() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100_000;
    let z: Vec<f64> = (0..n).map(|i| 4.0 + (i as f64 * 0.01).sin()).collect();
    let zs = vec![z.clone(), z.clone()];
    assert_eq!(make_noisy_proxy(&zs, 0.0, &mut rng).unwrap(), zs);
    let p = make_noisy_proxy(&zs, 0.5, &mut rng).unwrap();
    let (sigma, fb) = proxy_sigma(&z, 0.5);
    assert!(!fb);
    let e0: Vec<f64> = p[0].iter().zip(&z).map(|(a, b)| a - b).collect();
    let e1: Vec<f64> = p[1].iter().zip(&z).map(|(a, b)| a - b).collect();
    let (m0, s0) = moments(&e0);
    let (m1, s1) = moments(&e1);
    assert!(((s0 / sigma) - 1.0).abs() < 0.02);
    assert!(((s1 / sigma) - 1.0).abs() < 0.02);
    let cov: f64 = e0.iter().zip(&e1).map(|(a, b)| (a - m0) * (b - m1)).sum::<f64>() / n as f64;
    assert!((cov / (s0 * s1)).abs() < 0.05);
    assert!(make_noisy_proxy(&zs, -1.0, &mut rng).is_err());
}

#[test]
fn truncated_normal_matches_conditional_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // E[N | N > a] = phi(a) / (1 - Phi(a))
    let draws: Vec<f64> = (0..200_000).map(|_| normal_above(3.0, &mut rng)).collect();
    assert!(draws.iter().all(|&v| v > 3.0));
    let (m, _) = moments(&draws);
    assert!((m - 3.283_098_654_930).abs() < 0.005, "{m}");
    let draws: Vec<f64> = (0..200_000).map(|_| normal_above(-0.5, &mut rng)).collect();
    let (m, _) = moments(&draws);
    assert!((m - 0.509_160_433_837).abs() < 0.01, "{m}");
}

#[test]
fn zero_mean_confounder_falls_back_to_std() {
    let z = vec![-1.0, 1.0, -1.0, 1.0];
    let (s, fb) = proxy_sigma(&z, 2.0);
    assert!(fb);
    assert_eq!(s, 2.0);
}

#[test]
fn standin_has_large_positive_confounder() {
    let b = gen_standin(500, 1).unwrap();
    let z = &b.z.as_ref().unwrap()[0];
    let (m, _) = moments(z);
    assert!(m > 10.0);
    assert!(b.p.is_empty());
    assert_eq!(b, gen_standin(500, 1).unwrap());
}

#[test]
fn windows() {
    assert_eq!(sliding_windows(5, 4).unwrap(), vec![0..4, 1..5]);
    assert_eq!(sliding_windows(7, 7).unwrap(), vec![0..7]);
    assert!(matches!(sliding_windows(3, 4), Err(SynthError::Window { len: 4, t: 3 })));
    assert!(sliding_windows(3, 0).is_err());
}

proptest! {
    #[test]
    fn windows_cover_every_index(t in 1usize..200, frac in 0.0f64..1.0) {
        let len = 1 + ((t - 1) as f64 * frac) as usize;
        let w = sliding_windows(t, len).unwrap();
        prop_assert_eq!(w.len(), t - len + 1);
        for i in 0..t {
            prop_assert!(w.iter().any(|r| r.contains(&i)));
        }
    }
}

mod csv_io {
    use std::io::Write;

    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = gen_causal(&DgpConfig {
            t: 3,
            d_z: 2,
            ..cfg(9)
        })
        .unwrap();
        b.x[0] = 0.1 + 0.2;
        b.y[1] = -1e-310;
        let path = dir.path().join("b.csv");
        let meta = BundleMeta::for_bundle(&b, Some(9), None);
        save_csv(&b, &path, Some(&meta)).unwrap();
        let mut back = load_csv(&path, Schema::Observed).unwrap();
        assert_eq!(back.provenance, Provenance::Csv);
        back.provenance = b.provenance;
        let bits = |v: &TimeSeriesBundle| {
            let mut all = v.x.clone();
            all.extend(&v.y);
            v.p.iter().for_each(|c| all.extend(c));
            v.z.iter().flatten().for_each(|c| all.extend(c));
            all.extend(v.w.iter().flatten());
            all.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&b));
        assert_eq!(back, b);
        assert_eq!(read_metadata(&path).unwrap(), Some(meta));
    }

    #[test]
    fn missing_y_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "x,p_1\n1,2\n");
        let err = load_csv(&path, Schema::Observed).unwrap_err();
        assert!(matches!(&err, SynthError::MissingColumn(c) if c == "y"), "{err}");
    }

    #[test]
    fn bad_cell_reports_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "x,y,p_1\n1,2,3\n1,abc,3\n");
        let err = load_csv(&path, Schema::Observed).unwrap_err();
        match err {
            SynthError::Cell { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "y");
            }
            other => panic!("{other}"),
        }
        let path = write(&dir, "b.csv", "x,y,p_1\n1,2,3\n1,2\n");
        assert!(matches!(
            load_csv(&path, Schema::Observed),
            Err(SynthError::Ragged { row: 3, expected: 3, got: 2 })
        ));
        let path = write(&dir, "c.csv", "x,y,p_1\n1,,3\n");
        assert!(load_csv(&path, Schema::Observed).unwrap_err().to_string().contains("missing"));
    }

    #[test]
    fn schemas() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "t.csv", "x,y,z_1\n20.1,40,11\n20.3,41,12\n");
        assert!(matches!(
            load_csv(&path, Schema::Observed),
            Err(SynthError::MissingColumn(c)) if c == "p_1"
        ));
        let b = load_csv(&path, Schema::Confounded).unwrap();
        assert_eq!(b.z.unwrap()[0], vec![11.0, 12.0]);
        let path = write(&dir, "u.csv", "x,y,p_2\n1,2,3\n");
        assert!(matches!(
            load_csv(&path, Schema::Observed),
            Err(SynthError::MissingColumn(c)) if c == "p_1"
        ));
        let path = write(&dir, "v.csv", "x,y,p_1,q\n1,2,3,4\n");
        assert!(matches!(load_csv(&path, Schema::Observed), Err(SynthError::UnknownColumn(_))));
    }
}
