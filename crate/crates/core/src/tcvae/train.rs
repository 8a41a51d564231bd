use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::elbo::{sample_posterior, Carry, ElboTerms, NoiseDraws, DEFAULT_ORDER};
use super::model::{Observations, TcvaeConfig, TcvaeModel};
use super::TcvaeError;
use crate::neural::{adam_step, AdamConfig, AdamState, NeuralError};
use crate::synthdata::{sliding_windows, TimeSeriesBundle};
use crate::tensor::{Graph, Tape, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    WholeSequence,
    Sliding(usize),
}

impl TrainMode {
    pub fn from_config(config: &TcvaeConfig, t: usize) -> Result<Self, TcvaeError> {
        match config.window {
            None => Ok(Self::WholeSequence),
            Some(l) if l == 0 || l > t => Err(TcvaeError::Config(format!(
                "window length {l} must lie in 1..={t}"
            ))),
            Some(l) => Ok(Self::Sliding(l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub window_index: usize,
    pub elbo: f64,
    pub kl_term: f64,
    pub recon_x: f64,
    pub recon_p: f64,
    pub recon_y: f64,
}

impl TrainLogRow {
    fn new(epoch: usize, window_index: usize, t: &ElboTerms) -> Self {
        Self {
            epoch,
            window_index,
            elbo: t.elbo,
            kl_term: t.kl(),
            recon_x: t.log_x,
            recon_p: t.log_p,
            recon_y: t.log_y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TcvaeModel,
    pub log: Vec<TrainLogRow>,
}

pub fn write_log_csv(path: &Path, rows: &[TrainLogRow]) -> Result<(), TcvaeError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Fits the standardizer on `bundle`, initializes a model and trains it.
pub fn train(bundle: &TimeSeriesBundle, config: &TcvaeConfig) -> Result<TrainOutcome, TcvaeError> {
    let model = TcvaeModel::for_bundle(config.clone(), bundle)?;
    let obs = model.observations(bundle)?;
    train_model(model, &obs)
}

fn is_divergence(e: &TcvaeError) -> bool {
    matches!(
        e,
        TcvaeError::NonFinite { .. }
            | TcvaeError::Tensor(TensorError::NonFinite(_))
            | TcvaeError::Neural(NeuralError::NonFiniteGradient(_))
    )
}

struct Trainer<'a> {
    obs: &'a Observations,
    adam: AdamState,
    noise_rng: ChaCha8Rng,
    samples: usize,
}

impl Trainer<'_> {
    /// One Adam ascent step on the window ELBO. The store is untouched when
    /// this fails.
    fn step(
        &mut self,
        model: &mut TcvaeModel,
        range: Range<usize>,
        carry: &Carry,
    ) -> Result<(ElboTerms, Carry), TcvaeError> {
        let noise = NoiseDraws::standard(&mut self.noise_rng, self.samples, range.len(), model.d_z());
        let (terms, next, grads) = {
            let tape = Tape::new();
            let g = Graph::new(&tape, &model.store);
            let (elbo, terms, next) = model.elbo(&g, self.obs, range, carry, &noise)?;
            let grads = tape.backward(elbo.neg())?;
            (terms, next, grads)
        };
        adam_step(&mut model.store, &grads, &mut self.adam)?;
        Ok((terms, next))
    }
}

/// Trains an existing model on standardized observations.
pub fn train_model(mut model: TcvaeModel, obs: &Observations) -> Result<TrainOutcome, TcvaeError> {
    let cfg = model.config.clone();
    let t = obs.len();
    if t == 0 {
        return Err(TcvaeError::Data("empty series".into()));
    }
    let mode = TrainMode::from_config(&cfg, t)?;
    let mut adam = AdamState::new(&model.store, AdamConfig::with_lr(cfg.lr));
    adam.freeze_prefixes(&model.store, &cfg.freeze);
    let start = model.epochs_done;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1 + start as u64);
    let mut tr = Trainer {
        obs,
        adam,
        noise_rng,
        samples: cfg.train_samples,
    };
    let mut log = Vec::new();
    macro_rules! attempt {
        ($e:expr, $epoch:expr, $w:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) if is_divergence(&err) => {
                    model.epochs_done = $epoch;
                    return Err(TcvaeError::Diverged {
                        epoch: $epoch,
                        window: $w,
                        reason: err.to_string(),
                        last_good: Box::new(model),
                    })
                }
                Err(err) => return Err(err),
            }
        };
    }
    match mode {
        TrainMode::WholeSequence => {
            for epoch in start..start + cfg.epochs {
                let carry = model.zero_carry();
                let (terms, _) = attempt!(tr.step(&mut model, 0..t, &carry), epoch, 0);
                log.push(TrainLogRow::new(epoch, 0, &terms));
            }
        }
        TrainMode::Sliding(l) => {
            let windows = sliding_windows(t, l)?;
            for epoch in start..start + cfg.epochs {
                let mut carry = model.zero_carry();
                for (w, range) in windows.iter().enumerate() {
                    let (terms, next) = attempt!(tr.step(&mut model, range.clone(), &carry), epoch, w);
                    log.push(TrainLogRow::new(epoch, w, &terms));
                    carry = next;
                }
            }
        }
    }
    model.epochs_done = start + cfg.epochs;
    Ok(TrainOutcome { model, log })
}

impl TcvaeModel {
    /// Whole-sequence ELBO averaged over `n_samples` independent draws.
    pub fn evaluate(
        &self,
        obs: &Observations,
        n_samples: usize,
        seed: u64,
    ) -> Result<ElboTerms, TcvaeError> {
        if n_samples == 0 {
            return Err(TcvaeError::Config("at least one sample is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = ElboTerms::default();
        for _ in 0..n_samples {
            let noise = NoiseDraws::standard(&mut rng, 1, obs.len(), self.d_z());
            let tape = Tape::new();
            let g = Graph::new(&tape, &self.store);
            let (_, t, _) = self.elbo(&g, obs, 0..obs.len(), &self.zero_carry(), &noise)?;
            acc.elbo += t.elbo;
            acc.log_x += t.log_x;
            acc.log_p += t.log_p;
            acc.log_y += t.log_y;
            acc.log_prior += t.log_prior;
            acc.log_q += t.log_q;
        }
        let k = n_samples as f64;
        Ok(ElboTerms {
            elbo: acc.elbo / k,
            log_x: acc.log_x / k,
            log_p: acc.log_p / k,
            log_y: acc.log_y / k,
            log_prior: acc.log_prior / k,
            log_q: acc.log_q / k,
        })
    }

    /// Posterior context per index. A model trained on windows of length `L`
    /// reads index `i` from the window starting at `i`, as during training.
    pub(crate) fn contexts(&self, obs: &Observations) -> Result<Vec<Vec<f64>>, TcvaeError> {
        let t = obs.len();
        let whole = |range: Range<usize>| -> Result<Vec<Vec<f64>>, TcvaeError> {
            let tape = Tape::new();
            let g = Graph::new(&tape, &self.store);
            Ok(self
                .context(&g, obs, range, DEFAULT_ORDER)?
                .iter()
                .map(|v| v.to_vec())
                .collect())
        };
        match self.config.window {
            Some(l) if l < t => (0..t)
                .map(|i| Ok(whole(i..(i + l).min(t))?.swap_remove(0)))
                .collect(),
            _ => whole(0..t),
        }
    }

    pub(crate) fn posterior_path(
        &self,
        contexts: &[Vec<f64>],
        xi: Option<&[Vec<f64>]>,
    ) -> Result<Vec<Vec<f64>>, TcvaeError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, &self.store);
        let z0 = g.vector(vec![0.0; self.d_z()]);
        let post = sample_posterior(z0, xi, contexts.len(), |i, zp| {
            self.posterior_step(&g, zp, g.vector(contexts[i].clone()))
        })?;
        Ok(post.z.iter().map(|v| v.to_vec()).collect())
    }
}

/// Estimated confounder in model space, one column per latent coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderEstimate {
    /// Path obtained by following the posterior conditional means.
    pub mean: Vec<Vec<f64>>,
    /// Independent ancestral draws, each in the same column layout.
    pub draws: Vec<Vec<Vec<f64>>>,
}

fn to_columns(path: Vec<Vec<f64>>, d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|j| path.iter().map(|z| z[j]).collect()).collect()
}

pub fn estimate_confounder(
    model: &TcvaeModel,
    bundle: &TimeSeriesBundle,
    n_draws: usize,
    seed: u64,
) -> Result<ConfounderEstimate, TcvaeError> {
    let obs = model.observations(bundle)?;
    let ctx = model.contexts(&obs)?;
    let d = model.d_z();
    let mean = to_columns(model.posterior_path(&ctx, None)?, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let noise = NoiseDraws::standard(&mut rng, 1, ctx.len(), d);
        draws.push(to_columns(model.posterior_path(&ctx, Some(&noise.xi[0]))?, d));
    }
    Ok(ConfounderEstimate { mean, draws })
}
