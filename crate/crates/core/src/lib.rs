//! Core domain library for synthetic fingerprint generation and evaluation.
//!
//! Contains the minutiae domain types with Eq.-style map rendering, a classical
//! minutiae extractor, a model-based procedural fingerprint generator
//! (zero-pole orientation field + iterative Gabor filtering), a minutiae
//! matcher with verification/identification experiment drivers, and the
//! realism metrics (2D minutiae histograms, exact EMD, Fréchet feature
//! distance, score distributions).

pub mod error;
pub mod eval;
pub mod imageio;
pub mod linalg;
pub mod matcher;
pub mod minutiae;
pub mod procedural;
pub mod rng;

pub use error::{Error, Result};
pub use minutiae::{GrayscaleImage, Minutia, MinutiaKind, MinutiaeMap, MinutiaeTemplate};
