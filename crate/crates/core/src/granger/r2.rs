use serde::{Deserialize, Serialize};

use super::{nested_designs, GrangerError, GrangerResult, Method, Series};
use crate::forest::{fit_forest, ForestConfig};
use crate::matrix::Matrix;

/// Share of rows, in time order, used to fit the forests.
pub const TRAIN_FRACTION: f64 = 0.7;

/// `1 - Σ_{t≥L}(y_t - ŷ_t)² / Σ_{t≥L}(y_t - ȳ)²` with `ȳ` taken over the
/// same range (0-based indices, so the first `L` entries are skipped).
pub fn r2(y: &[f64], pred: &[f64], lag: usize) -> Result<f64, GrangerError> {
    if y.len() != pred.len() {
        return Err(GrangerError::Length {
            id: "prediction".into(),
            expected: y.len(),
            got: pred.len(),
        });
    }
    if y.len() <= lag {
        return Err(GrangerError::SeriesTooShort {
            t: y.len(),
            need: lag,
        });
    }
    let (y, pred) = (&y[lag..], &pred[lag..]);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(GrangerError::ConstantTarget);
    }
    let rss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - rss / tss)
}

fn split_point(n: usize, min_leaf: usize) -> Result<usize, GrangerError> {
    let n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
    if n_train < min_leaf.max(2) || n - n_train < 2 {
        return Err(GrangerError::SeriesTooShort {
            t: n,
            need: min_leaf.max(2) * 2,
        });
    }
    Ok(n_train)
}

/// Out-of-sample R² of `(second) - (first)` with forests fitted on the
/// leading rows. Returns `(r2_first, r2_second)`.
pub fn delta_r2(
    first: &Matrix,
    second: &Matrix,
    y: &[f64],
    config: &ForestConfig,
    seed: u64,
) -> Result<(f64, f64), GrangerError> {
    let n = y.len();
    let cut = split_point(n, config.min_leaf)?;
    let score = |m: &Matrix| -> Result<f64, GrangerError> {
        let model = fit_forest(&m.slice_rows(0, cut), &y[..cut], config, seed)?;
        let pred = model.predict(&m.slice_rows(cut, n))?;
        r2(&y[cut..], &pred, 0)
    };
    Ok((score(first)?, score(second)?))
}

fn forest_fingerprint(config: &ForestConfig, lag: usize, seed: u64) -> String {
    format!(
        "rf_r2:lag={lag}:trees={}:depth={}:min_leaf={}:mtry={:?}:bootstrap={}:seed={seed}",
        config.n_trees, config.max_depth, config.min_leaf, config.mtry, config.bootstrap
    )
}

/// ΔR² Granger causality: out-of-sample R² with x lags minus without,
/// conditioners in both models. Negative values are kept.
pub fn gc_r2(
    x: &[f64],
    y: &[f64],
    cond: &[Series<'_>],
    lag: usize,
    config: &ForestConfig,
    seed: u64,
) -> Result<GrangerResult, GrangerError> {
    let (xr, xf, target, ids) = nested_designs(x, y, cond, lag)?;
    let n = target.len();
    let (r_r, r_f) = delta_r2(&xr, &xf, &target, config, seed)?;
    let gc = r_f - r_r;
    Ok(GrangerResult {
        method: Method::RfR2,
        restricted: r_r,
        full: r_f,
        statistic: gc,
        p_value: None,
        df_num: None,
        df_den: None,
        lag,
        conditioning: ids,
        n,
        alpha: 0.0,
        reject: gc > 0.0,
        flags: Vec::new(),
        fingerprint: forest_fingerprint(config, lag, seed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffScore {
    pub value: f64,
    pub conditioning: Vec<String>,
    pub reference: Vec<String>,
}

/// `|GC(x->y|m) - GC(x->y|reference)|`; both results must come from the
/// same method, lag, configuration and seed.
pub fn diff_metric(m: &GrangerResult, reference: &GrangerResult) -> Result<DiffScore, GrangerError> {
    if m.method != reference.method {
        return Err(GrangerError::ConfigMismatch(format!(
            "methods differ: {} vs {}",
            m.method, reference.method
        )));
    }
    if m.lag != reference.lag || m.fingerprint != reference.fingerprint {
        return Err(GrangerError::ConfigMismatch(format!(
            "{} vs {}",
            m.fingerprint, reference.fingerprint
        )));
    }
    Ok(DiffScore {
        value: (m.statistic - reference.statistic).abs(),
        conditioning: m.conditioning.clone(),
        reference: reference.conditioning.clone(),
    })
}
