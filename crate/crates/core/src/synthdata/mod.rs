//! Synthetic data-generating processes, proxy construction, CSV ingestion
//! and sliding-window schedules.
//!
//! Every series is stored column-wise: `p[j][t]` is proxy coordinate `j`
//! at time `t`, and likewise for `z`.

mod io;

pub use io::{load_csv, read_metadata, save_csv, sidecar_path, BundleMeta, Schema};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("window length {len} exceeds series length {t}")]
    Window { len: usize, t: usize },
    #[error("csv row {row}, column {column}: {msg}")]
    Cell {
        row: usize,
        column: String,
        msg: String,
    },
    #[error("csv row {row}: expected {expected} fields, got {got}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("unexpected column {0}")]
    UnknownColumn(String),
    #[error("invalid bundle: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DgpNull,
    DgpCausal,
    Standin,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesBundle {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Proxy coordinates, one column each.
    pub p: Vec<Vec<f64>>,
    /// Ground-truth confounder coordinates when known.
    pub z: Option<Vec<Vec<f64>>>,
    /// Second latent of the causal process; drives `x` only.
    pub w: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl TimeSeriesBundle {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn d_p(&self) -> usize {
        self.p.len()
    }

    pub fn d_z(&self) -> usize {
        self.z.as_ref().map_or(0, Vec::len)
    }

    /// Checks shared length and finiteness. Proxies are required unless
    /// `allow_no_proxy` is set.
    pub fn validate(&self, allow_no_proxy: bool) -> Result<(), SynthError> {
        let t = self.x.len();
        if t == 0 {
            return Err(SynthError::Invalid("empty series".into()));
        }
        if !allow_no_proxy && self.p.is_empty() {
            return Err(SynthError::Invalid("at least one proxy column is required".into()));
        }
        let mut cols: Vec<(&str, &[f64])> = vec![("x", &self.x), ("y", &self.y)];
        cols.extend(self.p.iter().map(|c| ("p", c.as_slice())));
        if let Some(z) = &self.z {
            cols.extend(z.iter().map(|c| ("z", c.as_slice())));
        }
        if let Some(w) = &self.w {
            cols.push(("w", w));
        }
        for (name, c) in cols {
            if c.len() != t {
                return Err(SynthError::Invalid(format!(
                    "{name} has length {}, expected {t}",
                    c.len()
                )));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(SynthError::Invalid(format!("non-finite {name} at t={i}")));
            }
        }
        Ok(())
    }

    /// Rows `range` of every series.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let cut = |v: &Vec<f64>| v[range.clone()].to_vec();
        Self {
            x: cut(&self.x),
            y: cut(&self.y),
            p: self.p.iter().map(cut).collect(),
            z: self.z.as_ref().map(|z| z.iter().map(cut).collect()),
            w: self.w.as_ref().map(cut),
            provenance: self.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub t: usize,
    pub ploss: f64,
    /// Noisy copies per confounder coordinate.
    pub d_p: usize,
    /// Independent confounder processes.
    pub d_z: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Keep the `x -> y` term of the causal process.
    pub causal_edge: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            t: 1000,
            ploss: 1.0,
            d_p: 1,
            d_z: 1,
            burn_in: 100,
            seed: 0,
            causal_edge: true,
        }
    }
}

impl DgpConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.t == 0 {
            return Err(SynthError::Config("t must be at least 1".into()));
        }
        if self.d_p == 0 || self.d_z == 0 {
            return Err(SynthError::Config("d_p and d_z must be at least 1".into()));
        }
        if !(self.ploss >= 0.0 && self.ploss.is_finite()) {
            return Err(SynthError::Config(format!("ploss must be >= 0, got {}", self.ploss)));
        }
        Ok(())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard normal conditioned on exceeding `a`. Identical in law to
/// redrawing until the bound holds, but with bounded cost for large `a`
/// (exponential proposal for the tail).
fn normal_above<R: Rng>(a: f64, rng: &mut R) -> f64 {
    if a < 0.5 {
        loop {
            let v = normal(rng);
            if v > a {
                return v;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let v = a - (1.0 - u).ln() / alpha;
        let accept: f64 = rng.random();
        if accept <= (-(v - alpha).powi(2) / 2.0).exp() {
            return v;
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Value `lag` steps before `t`, zero before the start.
fn lag(s: &[f64], t: usize, lag: usize) -> f64 {
    if t >= lag {
        s[t - lag]
    } else {
        0.0
    }
}

fn ar_term(s: &[f64], t: usize) -> f64 {
    (lag(s, t, 2) / 3.0 + 2.0 * lag(s, t, 1) / 3.0) / 4.0
}

/// `p = z + ploss * mean(z) * N(0.5, 1)`, `d_p` independent copies per
/// confounder coordinate, laid out coordinate-major.
fn ploss_proxies<R: Rng>(z: &[Vec<f64>], ploss: f64, d_p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let t = z[0].len();
    let means: Vec<f64> = z.iter().map(|c| c.iter().sum::<f64>() / t as f64).collect();
    let mut p: Vec<Vec<f64>> = z
        .iter()
        .flat_map(|col| std::iter::repeat_n(col.clone(), d_p))
        .collect();
    for tt in 0..t {
        for (k, &mean) in means.iter().enumerate() {
            let scale = ploss * mean;
            for j in 0..d_p {
                let e = 0.5 + normal(rng);
                if scale != 0.0 {
                    p[k * d_p + j][tt] += scale * e;
                }
            }
        }
    }
    p
}

/// Confounded process with no `x -> y` edge.
pub fn gen_null(config: &DgpConfig) -> Result<TimeSeriesBundle, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.burn_in + config.t;
    let mut z = vec![vec![0.0; n]; config.d_z];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for t in 0..n {
        for col in z.iter_mut() {
            col[t] = lag(col, t, 1).tanh() + normal(&mut rng);
        }
        let zx: f64 = z
            .iter()
            .map(|c| (2.0 * lag(c, t, 2) / 3.0 + lag(c, t, 1) / 3.0).tanh())
            .sum();
        let zy: f64 = z
            .iter()
            .map(|c| sigmoid(lag(c, t, 4) / 3.0 + 2.0 * lag(c, t, 3) / 3.0))
            .sum();
        x[t] = zx + ar_term(&x, t) + 0.05 * normal(&mut rng);
        y[t] = zy + ar_term(&y, t) + 0.05 * normal(&mut rng);
    }
    finish(config, Provenance::DgpNull, x, y, z, None, &mut rng)
}

/// Confounded process with a second latent `w` feeding `x` and a nonlinear
/// `x -> y` edge, unless `causal_edge` is off.
pub fn gen_causal(config: &DgpConfig) -> Result<TimeSeriesBundle, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.burn_in + config.t;
    let mut z = vec![vec![0.0; n]; config.d_z];
    let mut w = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for t in 0..n {
        for col in z.iter_mut() {
            col[t] = lag(col, t, 1).tanh() + normal(&mut rng);
        }
        // redraw the noise until w stays above -1, so the next log is defined
        let base = (lag(&w, t, 1) + 1.0).ln();
        w[t] = base + normal_above(-1.0 - base, &mut rng);
        let zx: f64 = z
            .iter()
            .map(|c| (2.0 * lag(c, t, 2) / 3.0 + lag(c, t, 1) / 3.0 - 1.0).tanh())
            .sum();
        let wx = sigmoid(
            (lag(&w, t, 4) + 2.0 * lag(&w, t, 3) + 3.0 * lag(&w, t, 2) + 4.0 * lag(&w, t, 1))
                / 10.0,
        );
        let zy: f64 = z
            .iter()
            .map(|c| sigmoid(lag(c, t, 4) / 3.0 + 2.0 * lag(c, t, 3) / 3.0))
            .sum();
        let xy = if config.causal_edge {
            (lag(&x, t, 2) / 3.0 + 2.0 * lag(&x, t, 1) / 3.0 - 1.0).tanh()
        } else {
            0.0
        };
        x[t] = zx + wx + ar_term(&x, t) + 0.05 * normal(&mut rng);
        y[t] = zy + xy + ar_term(&y, t) + 0.05 * normal(&mut rng);
    }
    finish(config, Provenance::DgpCausal, x, y, z, Some(w), &mut rng)
}

fn finish(
    config: &DgpConfig,
    provenance: Provenance,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    w: Option<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeriesBundle, SynthError> {
    let b = config.burn_in;
    let z: Vec<Vec<f64>> = z.into_iter().map(|c| c[b..].to_vec()).collect();
    let p = ploss_proxies(&z, config.ploss, config.d_p, rng);
    let bundle = TimeSeriesBundle {
        x: x[b..].to_vec(),
        y: y[b..].to_vec(),
        p,
        z: Some(z),
        w: w.map(|w| w[b..].to_vec()),
        provenance,
    };
    bundle.validate(false)?;
    Ok(bundle)
}

/// Standard deviation used for a noisy copy of `z`: `noise * |mean(z)|`, or
/// `noise * std(z)` when the mean is exactly zero. The flag reports the
/// fallback.
pub fn proxy_sigma(z: &[f64], noise: f64) -> (f64, bool) {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    if mean != 0.0 {
        return (noise * mean.abs(), false);
    }
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (noise * var.sqrt(), true)
}

/// `p = z + N(0, sigma^2)` per coordinate with `sigma` from [`proxy_sigma`].
pub fn make_noisy_proxy<R: Rng>(
    z: &[Vec<f64>],
    noise: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, SynthError> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SynthError::Config(format!("noise level must be >= 0, got {noise}")));
    }
    let mut out = Vec::with_capacity(z.len());
    for (k, col) in z.iter().enumerate() {
        let (sigma, fallback) = proxy_sigma(col, noise);
        if fallback && noise > 0.0 {
            log::warn!("confounder coordinate {k} has zero mean; proxy noise scaled by its std");
        }
        let p = if sigma == 0.0 {
            col.clone()
        } else {
            col.iter().map(|&v| v + sigma * normal(rng)).collect()
        };
        out.push(p);
    }
    Ok(out)
}

/// Semi-synthetic stand-in: a seasonal, strictly positive confounder (an
/// outdoor-temperature-like series) driving an indoor `x` and `y`, with a
/// lagged `x -> y` effect. No proxies; build them with [`make_noisy_proxy`].
pub fn gen_standin(t: usize, seed: u64) -> Result<TimeSeriesBundle, SynthError> {
    if t == 0 {
        return Err(SynthError::Config("t must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = 100;
    let n = burn + t;
    let mut z = vec![0.0; n];
    let mut dev = 0.0;
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        dev = 0.8 * dev + 0.6 * normal(&mut rng);
        let season = 3.0 * (2.0 * std::f64::consts::PI * i as f64 / 96.0).sin();
        z[i] = 15.0 + season + dev;
        let zc = lag(&z, i, 1) - 15.0;
        x[i] = 0.5 * lag(&x, i, 1) + 0.4 * zc + 0.3 * normal(&mut rng);
        y[i] = 0.4 * lag(&y, i, 1) - 0.3 * (lag(&z, i, 2) - 15.0)
            + 0.5 * (0.8 * lag(&x, i, 1)).tanh()
            + 0.3 * normal(&mut rng);
    }
    let bundle = TimeSeriesBundle {
        x: x[burn..].to_vec(),
        y: y[burn..].to_vec(),
        p: Vec::new(),
        z: Some(vec![z[burn..].to_vec()]),
        w: None,
        provenance: Provenance::Standin,
    };
    bundle.validate(true)?;
    Ok(bundle)
}

/// Stride-one windows `[i, i + len)` covering a series of length `t`.
pub fn sliding_windows(t: usize, len: usize) -> Result<Vec<Range<usize>>, SynthError> {
    if len == 0 || len > t {
        return Err(SynthError::Window { len, t });
    }
    Ok((0..=t - len).map(|i| i..i + len).collect())
}

#[cfg(test)]
mod tests;
