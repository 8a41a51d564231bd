//! Recurrent cells, perceptrons, Gaussian output heads and the Adam
//! optimizer shared by every trainable component.

mod adam;
pub mod checkpoint;
mod gru;
mod layers;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gru::{Direction, Gru};
pub use layers::{diag_gaussian_logpdf, Activation, GaussianHead, Linear, Mlp, SIGMA_FLOOR};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

use rand::Rng;

use crate::tensor::Tensor;

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` matrix of shape `(rows, fan_in)`.
pub(crate) fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * fan_in)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::from_parts(vec![rows, fan_in], data)
}
