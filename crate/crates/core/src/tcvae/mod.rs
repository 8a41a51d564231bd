//! Temporal causal variational autoencoder.
//!
//! The latent confounder follows a linear Gaussian state-space prior,
//! `z_t = O (T z_{t-1} + v_t) + eps_t`. Observations are emitted by Gaussian
//! heads reading a GRU summary of the latent path (and, for the outcome `y`,
//! a second GRU over the candidate cause `x`). The posterior
//! `q(z_t | z_{t-1}, x_{t..}, y_{t..}, p_{t..})` is parameterized with reverse
//! GRUs. Everything runs on the crate's tape, in standardized model space.

mod elbo;
mod model;
mod prior;
mod train;


pub use elbo::{mc_elbo, sample_posterior, Carry, ElboTerms, NoiseDraws, PosteriorSample, Stream};
pub use model::{GenTerms, Observations, TcvaeConfig, TcvaeModel};
pub use prior::{PriorParams, PriorVars};
pub use train::{
    estimate_confounder, train, train_model, write_log_csv, ConfounderEstimate, TrainLogRow,
    TrainMode, TrainOutcome,
};

use crate::neural::NeuralError;
use crate::synthdata::SynthError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TcvaeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("non-finite {term}: {value}")]
    NonFinite { term: &'static str, value: f64 },
    #[error("training diverged at epoch {epoch}, window {window}: {reason}")]
    Diverged {
        epoch: usize,
        window: usize,
        reason: String,
        last_good: Box<TcvaeModel>,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("training log: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint metadata: {0}")]
    Json(#[from] serde_json::Error),
}
