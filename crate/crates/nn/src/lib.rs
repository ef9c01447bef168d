//! Neural components: a tape-based reverse-mode autodiff engine over ndarray,
//! the style-based fingerprint generator/discriminator with differentiable
//! augmentation, the minutiae-oriented identity network, the minutiae-map
//! encoder, and closed-form latent factorization for attribute editing.

pub mod checkpoint;
pub mod editor;
pub mod error;
pub mod gan;
pub mod idnet;
pub mod layers;
pub mod optim;
mod ops_conv;
mod ops_model;
pub mod params;
pub mod real;
pub mod recon;
pub mod tape;

pub use error::{Error, Result};
pub use real::Real;
pub use tape::{Arr, Grads, Tape, Var};
