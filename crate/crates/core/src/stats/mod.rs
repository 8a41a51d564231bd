//! F distribution and the nested-model F-test.

mod special;
mod standardize;

pub use special::{betainc, ln_beta, ln_gamma};
pub use standardize::Standardizer;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid F-test input: {0}")]
    FTestInput(String),
}

fn check_dof(d1: f64, d2: f64) -> Result<(), StatsError> {
    if !(d1 >= 1.0) {
        return Err(StatsError::Domain { what: "d1", value: d1 });
    }
    if !(d2 >= 1.0) {
        return Err(StatsError::Domain { what: "d2", value: d2 });
    }
    Ok(())
}

/// CDF of the F(d1, d2) distribution at `x ≥ 0`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_dof(d1, d2)?;
    if !(x >= 0.0) {
        return Err(StatsError::Domain { what: "x", value: x });
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let u = d1 * x / (d1 * x + d2);
    Ok(betainc(d1 / 2.0, d2 / 2.0, u).clamp(0.0, 1.0))
}

/// Upper tail `1 - F(x)`, evaluated through the complementary beta so small
/// p-values keep their relative precision.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_dof(d1, d2)?;
    if !(x >= 0.0) {
        return Err(StatsError::Domain { what: "x", value: x });
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    let v = d2 / (d2 + d1 * x);
    Ok(betainc(d2 / 2.0, d1 / 2.0, v).clamp(0.0, 1.0))
}

/// Residual sums and parameter counts of a nested pair of regressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FTestInput {
    pub rss_restricted: f64,
    pub rss_full: f64,
    pub params_restricted: usize,
    pub params_full: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FTestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
    /// `rss_full == 0`: statistic is `+inf`, p-value 0.
    pub degenerate: bool,
}

impl FTestInput {
    fn validate(&self) -> Result<(), StatsError> {
        if !(self.rss_restricted >= 0.0) || !(self.rss_full >= 0.0) {
            return Err(StatsError::FTestInput(format!(
                "residual sums must be nonnegative (restricted {}, full {})",
                self.rss_restricted, self.rss_full
            )));
        }
        if self.params_restricted == 0 || self.params_full <= self.params_restricted {
            return Err(StatsError::FTestInput(format!(
                "need 0 < k_r < k_f, got k_r={} k_f={}",
                self.params_restricted, self.params_full
            )));
        }
        if self.n <= self.params_full {
            return Err(StatsError::FTestInput(format!(
                "n={} must exceed k_f={}",
                self.n, self.params_full
            )));
        }
        Ok(())
    }
}

/// `F = max(0, ((rss_r - rss_f)/(k_f - k_r)) / (rss_f/(n - k_f)))`.
pub fn f_test(input: &FTestInput) -> Result<FTestOutcome, StatsError> {
    input.validate()?;
    let df_num = input.params_full - input.params_restricted;
    let df_den = input.n - input.params_full;
    if input.rss_full == 0.0 {
        return Ok(FTestOutcome {
            statistic: f64::INFINITY,
            p_value: 0.0,
            df_num,
            df_den,
            degenerate: true,
        });
    }
    let num = (input.rss_restricted - input.rss_full) / df_num as f64;
    let den = input.rss_full / df_den as f64;
    let statistic = (num / den).max(0.0);
    let p_value = f_sf(statistic, df_num as f64, df_den as f64)?;
    Ok(FTestOutcome {
        statistic,
        p_value,
        df_num,
        df_den,
        degenerate: false,
    })
}
