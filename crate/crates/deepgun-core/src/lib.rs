//! Deep generative unmixing of hyperspectral images.
//!
//! A hyperspectral pixel is modeled as a convex combination of endmember
//! spectra (the linear mixing model), except that each material's signature
//! is allowed to vary from pixel to pixel. The variability manifold of each
//! material is learned from pure pixels of the observed image with a small
//! variational autoencoder; unmixing then alternates between estimating the
//! per-pixel latent endmember codes (quasi-Newton, per pixel) and the
//! abundance maps (ADMM with a spatial group-sparsity regularizer and unit
//! simplex constraints).
//!
//! The crate is organized as:
//!
//! - [`types`]: core containers (`HyperCube`, `EndmemberMatrix`, ...)
//! - [`metrics`]: spectral angle, NRMSE, SAM, image reconstruction
//! - [`io`]: binary cube/model formats and CSV matrices
//! - [`synth`]: synthetic scene generation with endmember variability
//! - [`neural`]: MLPs, backprop, Adam, and VAE training
//! - [`extraction`]: VCA, pure-pixel bundles, latent references
//! - [`solvers`]: simplex projection, FCLS, BFGS, spatial operators, ADMM
//! - [`deepgun`]: the alternating unmixing pipeline

pub mod deepgun;
pub mod error;
pub mod extraction;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod solvers;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    AbundanceMatrix, EndmemberMatrix, EndmemberTensor, HyperCube, LatentReference, LatentTensor,
};
