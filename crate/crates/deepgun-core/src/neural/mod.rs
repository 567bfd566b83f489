//! From-scratch neural networks: multilayer perceptrons with reverse-mode
//! gradients, the Adam optimizer, and variational autoencoder training.

pub mod mlp;
pub mod vae;

pub use mlp::{mlp_backward, mlp_forward, Activation, Adam, ForwardCache, Layer, MlpGrads, MlpParams};
pub use vae::{kl_gauss, train_vae, TrainConfig, TrainedVae, VaeModel};
