use super::GrangerError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct Regressor<'a> {
    pub values: &'a [f64],
    pub max_lag: usize,
}

/// Target series and lagged regressors. Only strictly past values enter.
#[derive(Debug, Clone)]
pub struct LagSpec<'a> {
    pub target: &'a [f64],
    pub regressors: Vec<Regressor<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagDesign {
    /// One row per usable time step; columns are regressor-major, lag 1 first.
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Time index of the first row.
    pub first_t: usize,
    /// `(regressor index, lag)` for every column.
    pub columns: Vec<(usize, usize)>,
}

/// Row `r` describes time `t = first_t + r` where `first_t` is the largest
/// lag; regressor `i` at lag `l` contributes `values[t - l]`.
pub fn build_lag_matrix(spec: &LagSpec<'_>) -> Result<LagDesign, GrangerError> {
    let t_len = spec.target.len();
    for (i, r) in spec.regressors.iter().enumerate() {
        if r.values.len() != t_len {
            return Err(GrangerError::Length {
                id: format!("regressor {i}"),
                expected: t_len,
                got: r.values.len(),
            });
        }
        if r.max_lag == 0 {
            return Err(GrangerError::InvalidLag);
        }
    }
    let m = spec.regressors.iter().map(|r| r.max_lag).max().unwrap_or(0);
    if t_len <= m {
        return Err(GrangerError::SeriesTooShort { t: t_len, need: m });
    }
    let columns: Vec<(usize, usize)> = spec
        .regressors
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (1..=r.max_lag).map(move |l| (i, l)))
        .collect();
    let rows = t_len - m;
    let mut data = Vec::with_capacity(rows * columns.len());
    for t in m..t_len {
        for &(i, l) in &columns {
            data.push(spec.regressors[i].values[t - l]);
        }
    }
    Ok(LagDesign {
        x: Matrix::new(rows, columns.len(), data),
        y: spec.target[m..].to_vec(),
        first_t: m,
        columns,
    })
}
