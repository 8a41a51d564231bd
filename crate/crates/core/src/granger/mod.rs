//! Granger causality tests: the classical linear F-test, a feed-forward
//! network F-test with conditioning series, and an out-of-sample random
//! forest ΔR² measure, plus the Diff distance between two conditionings.

mod lag;
mod linear;
mod nn;
mod r2;

pub use lag::{build_lag_matrix, LagDesign, LagSpec, Regressor};
pub use linear::{linear_granger, ols, OlsFit, RIDGE_LAMBDA};
pub use nn::{nn_granger_conditional, NnConfig};
pub use r2::{delta_r2, diff_metric, gc_r2, r2, DiffScore};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::forest::ForestError;
use crate::matrix::Matrix;
use crate::neural::NeuralError;
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum GrangerError {
    #[error("series too short: length {t}, need more than {need}")]
    SeriesTooShort { t: usize, need: usize },
    #[error("series {id} has length {got}, expected {expected}")]
    Length {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("lag must be at least 1")]
    InvalidLag,
    #[error("insufficient samples for dof accounting: n={n}, k_f={k}")]
    InsufficientSamples { n: usize, k: usize },
    #[error("constant target")]
    ConstantTarget,
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("non-finite value in series {0}")]
    NonFinite(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// A named series used as a conditioner.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub id: &'a str,
    pub values: &'a [f64],
}

impl<'a> Series<'a> {
    pub fn new(id: &'a str, values: &'a [f64]) -> Self {
        Self { id, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    NnFtest,
    RfR2,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Linear => "linear",
            Method::NnFtest => "nn_ftest",
            Method::RfR2 => "rf_r2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Normal equations were singular; a small ridge term was added.
    RidgeFallback,
    /// The full model fit exactly; the statistic was capped at `f64::MAX`.
    PerfectFit,
}

/// Outcome of one test. `restricted`/`full` hold RSS for the F-tests and
/// out-of-sample R² for `rf_r2`. `rf_r2` has no p-value and rejects when
/// ΔR² > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub method: Method,
    pub restricted: f64,
    pub full: f64,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub df_num: Option<usize>,
    pub df_den: Option<usize>,
    pub lag: usize,
    pub conditioning: Vec<String>,
    pub n: usize,
    pub alpha: f64,
    pub reject: bool,
    pub flags: Vec<Flag>,
    /// Method configuration and seed; two results are comparable only when
    /// these match.
    pub fingerprint: String,
}

fn check_common(x: &[f64], y: &[f64], cond: &[Series<'_>], lag: usize) -> Result<(), GrangerError> {
    if lag == 0 {
        return Err(GrangerError::InvalidLag);
    }
    let t = y.len();
    let mut all = vec![("x", x), ("y", y)];
    all.extend(cond.iter().map(|s| (s.id, s.values)));
    for (id, s) in all {
        if s.len() != t {
            return Err(GrangerError::Length {
                id: id.to_string(),
                expected: t,
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(GrangerError::NonFinite(id.to_string()));
        }
    }
    if t <= lag {
        return Err(GrangerError::SeriesTooShort { t, need: lag });
    }
    Ok(())
}

/// Restricted design (y lags, then conditioner lags sorted by id) and the
/// full design (restricted plus x lags), plus the aligned target.
fn nested_designs(
    x: &[f64],
    y: &[f64],
    cond: &[Series<'_>],
    lag: usize,
) -> Result<(Matrix, Matrix, Vec<f64>, Vec<String>), GrangerError> {
    check_common(x, y, cond, lag)?;
    let mut sorted: Vec<Series<'_>> = cond.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(b.id));
    let mut regs = vec![Regressor {
        values: y,
        max_lag: lag,
    }];
    regs.extend(sorted.iter().map(|s| Regressor {
        values: s.values,
        max_lag: lag,
    }));
    let restricted = build_lag_matrix(&LagSpec {
        target: y,
        regressors: regs.clone(),
    })?;
    regs.push(Regressor {
        values: x,
        max_lag: lag,
    });
    let full = build_lag_matrix(&LagSpec {
        target: y,
        regressors: regs,
    })?;
    let ids = sorted.iter().map(|s| s.id.to_string()).collect();
    Ok((restricted.x, full.x, full.y, ids))
}

const CSV_HEADER: [&str; 14] = [
    "method",
    "restricted",
    "full",
    "statistic",
    "p_value",
    "df_num",
    "df_den",
    "lag",
    "conditioning",
    "n",
    "alpha",
    "reject",
    "flags",
    "fingerprint",
];

impl GrangerResult {
    pub fn csv_header() -> &'static [&'static str] {
        &CSV_HEADER
    }

    /// Flat record; list fields are `;`-joined and absent values are empty.
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.method.to_string(),
            self.restricted.to_string(),
            self.full.to_string(),
            self.statistic.to_string(),
            opt(self.p_value.map(|v| v.to_string())),
            opt(self.df_num.map(|v| v.to_string())),
            opt(self.df_den.map(|v| v.to_string())),
            self.lag.to_string(),
            self.conditioning.join(";"),
            self.n.to_string(),
            self.alpha.to_string(),
            self.reject.to_string(),
            self.flags
                .iter()
                .map(|f| match f {
                    Flag::RidgeFallback => "ridge_fallback",
                    Flag::PerfectFit => "perfect_fit",
                })
                .collect::<Vec<_>>()
                .join(";"),
            self.fingerprint.clone(),
        ]
    }
}

pub fn write_results_csv(path: &Path, results: &[GrangerResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GrangerResult::csv_header())?;
    for r in results {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
