//! Recovering unobserved confounders of a pair of time series from noisy
//! proxies with a temporal causal variational autoencoder, then testing
//! Granger causality conditioned on the recovered confounder.

// NaN must fail validation, so `!(x >= 0.0)` is intended; tape ops return
// `Result` and cannot implement the operator traits.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::should_implement_trait,
    clippy::needless_range_loop
)]

pub mod cli;
pub mod forest;
pub mod granger;
pub mod matrix;
pub mod neural;
pub mod stats;
pub mod synthdata;
pub mod tcvae;
pub mod tensor;
