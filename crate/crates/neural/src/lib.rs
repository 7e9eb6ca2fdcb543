//! Minimal neural building blocks for desk-scale adversarial training.
//!
//! Activations flow between layers as rank-3 tensors shaped
//! `(batch, channels, length)`. Dense layers treat `channels` as the feature
//! axis and require `length == 1`; recurrent layers treat `length` as time.
//!
//! Only the layer kinds needed by the load generators are provided: dense,
//! same-padded stride-1 1-D convolution, stacked LSTM, elementwise
//! activations, and a few shape adapters. Every layer caches what it needs
//! during [`Network::forward`] and accumulates parameter gradients during
//! [`Network::backward`]; [`adam_step`] consumes and clears them.

mod activation;
mod checkpoint;
mod conv;
mod dense;
mod error;
mod init;
mod layer;
mod loss;
mod lstm;
mod network;
mod optim;
mod param;
mod reshape;
mod spec;

pub use activation::Activation;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, StoredNetwork};
pub use error::{NeuralError, Result};
pub use loss::{bce_fake, bce_real, discriminator_loss, generator_loss, LossGrad, PROB_CLAMP};
pub use network::Network;
pub use optim::{adam_step, AdamState, OptimConfig};
pub use param::ParamTensor;
pub use spec::LayerSpec;

/// Batch of activations shaped `(batch, channels, length)`.
pub type Tensor = ndarray::Array3<f64>;
