use nalgebra::{DMatrix, DVector};

use super::{nested_designs, Flag, GrangerError, GrangerResult, Method, Series};
use crate::matrix::Matrix;
use crate::stats::{f_test, FTestInput};

/// Ridge strength used when the normal equations are singular, relative to
/// the mean diagonal of `XᵀX`.
pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Intercept first when one was requested.
    pub beta: Vec<f64>,
    pub rss: f64,
    pub ridge: bool,
}

fn design(x: &Matrix, intercept: bool) -> DMatrix<f64> {
    let k = x.cols() + usize::from(intercept);
    DMatrix::from_fn(x.rows(), k, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                x.get(i, j - 1)
            }
        } else {
            x.get(i, j)
        }
    })
}

/// Least squares through the normal equations and a Cholesky factor.
pub fn ols(x: &Matrix, y: &[f64], intercept: bool) -> OlsFit {
    let a = design(x, intercept);
    let b = DVector::from_column_slice(y);
    let ata = a.tr_mul(&a);
    let atb = a.tr_mul(&b);
    let k = ata.nrows();
    let max_diag = (0..k).map(|i| ata[(i, i)]).fold(0.0f64, f64::max);
    // a pivot this small relative to the largest diagonal means rank loss
    let well_posed = |l: &DMatrix<f64>| (0..k).all(|i| l[(i, i)].powi(2) > 1e-12 * max_diag);
    let (beta, ridge) = match ata.clone().cholesky() {
        Some(c) if well_posed(&c.l()) => (c.solve(&atb), false),
        _ => {
            let mean_diag = (0..k).map(|i| ata[(i, i)]).sum::<f64>() / k as f64;
            let lambda = RIDGE_LAMBDA * mean_diag.max(f64::MIN_POSITIVE);
            let reg = &ata + DMatrix::identity(k, k) * lambda;
            let c = reg.cholesky().expect("ridge-regularized gram matrix is positive definite");
            (c.solve(&atb), true)
        }
    };
    let resid = &b - &a * &beta;
    OlsFit {
        beta: beta.iter().copied().collect(),
        rss: resid.norm_squared(),
        ridge,
    }
}

/// Classical Granger F-test of `x -> y` given optional conditioners, with
/// an intercept in both regressions.
pub fn linear_granger(
    x: &[f64],
    y: &[f64],
    cond: &[Series<'_>],
    lag: usize,
    alpha: f64,
) -> Result<GrangerResult, GrangerError> {
    let (xr, xf, target, ids) = nested_designs(x, y, cond, lag)?;
    let n = target.len();
    let k_r = xr.cols() + 1;
    let k_f = xf.cols() + 1;
    if n <= k_f {
        return Err(GrangerError::InsufficientSamples { n, k: k_f });
    }
    let fr = ols(&xr, &target, true);
    let ff = ols(&xf, &target, true);
    let mut flags = Vec::new();
    if fr.ridge || ff.ridge {
        flags.push(Flag::RidgeFallback);
    }
    let out = f_test(&FTestInput {
        rss_restricted: fr.rss,
        rss_full: ff.rss,
        params_restricted: k_r,
        params_full: k_f,
        n,
    })?;
    let statistic = if out.statistic.is_finite() {
        out.statistic
    } else {
        flags.push(Flag::PerfectFit);
        f64::MAX
    };
    Ok(GrangerResult {
        method: Method::Linear,
        restricted: fr.rss,
        full: ff.rss,
        statistic,
        p_value: Some(out.p_value),
        df_num: Some(out.df_num),
        df_den: Some(out.df_den),
        lag,
        conditioning: ids,
        n,
        alpha,
        reject: out.p_value < alpha,
        flags,
        fingerprint: format!("linear:lag={lag}"),
    })
}
