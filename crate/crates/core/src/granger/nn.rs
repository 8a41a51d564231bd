use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{nested_designs, GrangerError, GrangerResult, Method, Series};
use crate::matrix::Matrix;
use crate::neural::{adam_step, Activation, AdamConfig, AdamState, Mlp};
use crate::stats::{f_test, FTestInput, Standardizer};
use crate::tensor::{Graph, ParamStore, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden: 10,
            steps: 500,
            lr: 0.01,
            seed: 0,
        }
    }
}

impl NnConfig {
    pub fn param_count(&self, inputs: usize) -> usize {
        inputs * self.hidden + self.hidden + self.hidden + 1
    }

    pub fn fingerprint(&self, lag: usize) -> String {
        format!(
            "nn_ftest:lag={lag}:hidden={}:steps={}:lr={}:seed={}",
            self.hidden, self.steps, self.lr, self.seed
        )
    }
}

fn standardize(m: &Matrix) -> Matrix {
    let cols: Vec<Vec<f64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let s = Standardizer::fit(&cols);
    let mut data = m.data().to_vec();
    s.apply_rows(&mut data);
    Matrix::new(m.rows(), m.cols(), data)
}

/// Fits `in -> hidden (tanh) -> 1` by full-batch Adam on mean squared error
/// and returns the residual sum of squares.
fn fit_rss(x: &Matrix, y: &[f64], cfg: &NnConfig) -> Result<f64, GrangerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let net = Mlp::new(
        &mut store,
        "nn",
        &[x.cols(), cfg.hidden, 1],
        Activation::Identity,
        &mut rng,
    );
    let n = x.rows();
    let inputs = Tensor::new(vec![n, x.cols()], x.data().to_vec()).expect("shape");
    let target = Tensor::new(vec![n, 1], y.to_vec()).expect("shape");
    let mut opt = AdamState::new(&store, AdamConfig::with_lr(cfg.lr));
    let loss_of = |store: &ParamStore, grad: bool| -> Result<(f64, Option<_>), GrangerError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, store);
        let pred = net.forward(&g, g.constant(inputs.clone()))?;
        let err = pred.sub(g.constant(target.clone())).map_err(crate::neural::NeuralError::from)?;
        let sse = err.square().sum();
        let v = sse.item();
        let grads = if grad {
            Some(tape.backward(sse.scale(1.0 / n as f64)).map_err(crate::neural::NeuralError::from)?)
        } else {
            None
        };
        Ok((v, grads))
    };
    for _ in 0..cfg.steps {
        let (_, grads) = loss_of(&store, true)?;
        adam_step(&mut store, &grads.expect("requested"), &mut opt)?;
    }
    Ok(loss_of(&store, false)?.0)
}

/// Network F-test of `x -> y` conditioned on `cond`. Inputs and target are
/// standardized internally; both networks share the seed. Degrees of
/// freedom are the trainable parameter counts, a heuristic rather than an
/// exact null distribution.
pub fn nn_granger_conditional(
    x: &[f64],
    y: &[f64],
    cond: &[Series<'_>],
    lag: usize,
    cfg: &NnConfig,
    alpha: f64,
) -> Result<GrangerResult, GrangerError> {
    let (xr, xf, target, ids) = nested_designs(x, y, cond, lag)?;
    let n = target.len();
    let k_r = cfg.param_count(xr.cols());
    let k_f = cfg.param_count(xf.cols());
    if n <= k_f {
        return Err(GrangerError::InsufficientSamples { n, k: k_f });
    }
    if target.iter().all(|&v| v == target[0]) {
        return Err(GrangerError::ConstantTarget);
    }
    let ys = Standardizer::fit(std::slice::from_ref(&target));
    let yt = ys.apply_column(0, &target);
    let rss_r = fit_rss(&standardize(&xr), &yt, cfg)?;
    let rss_f = fit_rss(&standardize(&xf), &yt, cfg)?;
    let out = f_test(&FTestInput {
        rss_restricted: rss_r,
        rss_full: rss_f,
        params_restricted: k_r,
        params_full: k_f,
        n,
    })?;
    Ok(GrangerResult {
        method: Method::NnFtest,
        restricted: rss_r,
        full: rss_f,
        statistic: out.statistic.min(f64::MAX),
        p_value: Some(out.p_value),
        df_num: Some(out.df_num),
        df_den: Some(out.df_den),
        lag,
        conditioning: ids,
        n,
        alpha,
        reject: out.p_value < alpha,
        flags: Vec::new(),
        fingerprint: cfg.fingerprint(lag),
    })
}
