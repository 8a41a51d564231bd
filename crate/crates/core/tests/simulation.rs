//! Seeded simulation checks of the tests and the training loop on the
//! synthetic processes.

use vgranger::forest::ForestConfig;
use vgranger::granger::{gc_r2, nn_granger_conditional, NnConfig, Series};
use vgranger::synthdata::{gen_causal, gen_null, DgpConfig};
use vgranger::tcvae::{train, TcvaeConfig};

fn dgp(t: usize, seed: u64) -> DgpConfig {
    DgpConfig {
        t,
        seed,
        ..Default::default()
    }
}

#[test]
fn nn_test_given_true_confounder_is_calibrated_on_null_data() {
    let mut rejections = 0;
    for seed in 0..100 {
        let b = gen_null(&dgp(500, 1000 + seed)).unwrap();
        let z = &b.z.as_ref().unwrap()[0];
        let cfg = NnConfig {
            seed,
            ..Default::default()
        };
        let r = nn_granger_conditional(&b.x, &b.y, &[Series::new("z_1", z)], 4, &cfg, 0.05).unwrap();
        rejections += r.reject as usize;
    }
    assert!(rejections <= 15, "{rejections} of 100 rejected");
}

#[test]
fn duplicated_proxies_push_the_nn_test_toward_non_rejection() {
    let mut counts = [0usize; 3];
    for seed in 0..20 {
        let b = gen_causal(&dgp(500, 2000 + seed)).unwrap();
        let names = ["p_1", "p_2", "p_3", "p_4", "p_5"];
        let cfg = NnConfig {
            seed,
            ..Default::default()
        };
        for (k, d) in [1, 2, 5].into_iter().enumerate() {
            let cond: Vec<Series> = names[..d].iter().map(|n| Series::new(n, &b.p[0])).collect();
            let r = nn_granger_conditional(&b.x, &b.y, &cond, 4, &cfg, 0.05).unwrap();
            counts[k] += !r.reject as usize;
        }
    }
    assert!(counts[0] <= counts[1] && counts[1] <= counts[2], "{counts:?}");
}

#[test]
fn forest_gc_is_positive_on_the_causal_process() {
    let b = gen_causal(&dgp(1000, 3)).unwrap();
    let z = &b.z.as_ref().unwrap()[0];
    let r = gc_r2(&b.x, &b.y, &[Series::new("z_1", z)], 4, &ForestConfig::default(), 3).unwrap();
    assert!(r.statistic > 0.0, "{}", r.statistic);
    assert!(r.reject);
}

#[test]
fn elbo_block_means_rise_over_the_first_200_epochs() {
    let b = gen_null(&dgp(1000, 4)).unwrap();
    let cfg = TcvaeConfig {
        epochs: 200,
        seed: 4,
        ..Default::default()
    };
    let out = train(&b, &cfg).unwrap();
    assert_eq!(out.log.len(), 200);
    let means: Vec<f64> = out
        .log
        .chunks(50)
        .map(|c| c.iter().map(|r| r.elbo).sum::<f64>() / c.len() as f64)
        .collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}
