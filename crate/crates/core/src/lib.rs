//! Temporally-aligned contrastive self-supervised learning for multivariate
//! time series.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`data`]: recordings, sliding windows, normalisation, synthetic data and
//!   labelled-subset selection.
//! - [`augment`]: stochastic time-series augmentations and view generation.
//! - [`softdtw`]: soft dynamic time warping, its gradient, a hard-DTW oracle
//!   and the batched temporal feature alignment (TFA) loss.
//! - [`contrastive`]: NT-Xent, two-stream InfoNCE and the combined objective.
//! - [`nn`]: a small reverse-mode engine over a fixed operator set (1D
//!   convolutions, affine layers, pooling, normalisation), Adam and
//!   checkpoints.
//! - [`train`]: pretraining loops, frozen-encoder fine-tuning, metrics, the
//!   semi-supervised protocol and alignment analysis.
//! - [`config`] and [`cli`]: the `key = value` run configuration and the
//!   command-line front end.

pub mod augment;
pub mod cli;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod output;
pub mod rng;
pub mod softdtw;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngState;
