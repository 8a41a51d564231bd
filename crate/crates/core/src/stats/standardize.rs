use serde::{Deserialize, Serialize};

/// Per-column affine map to zero mean and unit variance. Constant columns
/// keep a unit scale so they map to zero instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on column-major data, population variance.
    pub fn fit(columns: &[Vec<f64>]) -> Self {
        let mut mean = Vec::with_capacity(columns.len());
        let mut std = Vec::with_capacity(columns.len());
        for c in columns {
            let n = c.len().max(1) as f64;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
            let s = v.sqrt();
            mean.push(m);
            std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.std[j]
    }

    pub fn invert(&self, j: usize, v: f64) -> f64 {
        v * self.std[j] + self.mean[j]
    }

    pub fn apply_column(&self, j: usize, c: &[f64]) -> Vec<f64> {
        c.iter().map(|&v| self.apply(j, v)).collect()
    }

    pub fn invert_column(&self, j: usize, c: &[f64]) -> Vec<f64> {
        c.iter().map(|&v| self.invert(j, v)).collect()
    }

    /// Standardizes a row-major block whose columns line up with this fit.
    pub fn apply_rows(&self, data: &mut [f64]) {
        let d = self.dim();
        for row in data.chunks_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.apply(j, *v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_unit_variance() {
        let s = Standardizer::fit(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4]]);
        let a = s.apply_column(0, &[1.0, 2.0, 3.0, 4.0]);
        let m: f64 = a.iter().sum::<f64>() / 4.0;
        let v: f64 = a.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
        assert_eq!(s.apply_column(1, &[5.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(s.invert(0, s.apply(0, 3.5)), 3.5);
    }
}
