//! A small reverse-mode engine over a fixed operator set.
//!
//! Networks are sequences of [`LayerSpec`]s whose parameters live in a named
//! [`ModelParams`] store. A training-mode forward pass records a [`Tape`];
//! [`Network::backward`] consumes it, accumulates parameter gradients into
//! the store, and returns the gradient with respect to the input. Gradients
//! accumulate additively until [`ModelParams::zero_grads`].

mod checkpoint;
mod gradcheck;
mod layers;
mod models;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use layers::{LayerSpec, Mode, Network, Padding, Tape};
pub use models::{ClassifierArch, EncoderConfig, FusionHead, FusionTape, FUSION_WIDTH, MLP_DROPOUT, MLP_HIDDEN};
pub use params::{adam_step, init_params, AdamConfig, ModelParams, Tensor};
