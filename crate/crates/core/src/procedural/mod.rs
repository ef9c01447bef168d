//! Model-based synthetic fingerprint generation: zero-pole orientation
//! fields, iterative Gabor ridge synthesis and noisy impression rendering.
//! Serves as the desk-scale labeled dataset source.

mod dataset;
mod gabor;
mod impression;
mod orientation;

pub use dataset::{make_dataset, read_manifest, write_manifest, DatasetConfig, Manifest, ManifestEntry};
pub use gabor::synthesize_ridge_pattern;
pub use impression::{render_impression, NoiseConfig};
pub use orientation::{silhouette_mask, zero_pole_orientation};

use crate::error::Result;
use crate::minutiae::{extract_minutiae, ExtractorConfig, GrayscaleImage, MinutiaeTemplate};
use crate::rng;
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularKind {
    Core,
    Delta,
}

#[derive(Debug, Clone, Copy)]
pub struct SingularPoint {
    pub x: f64,
    pub y: f64,
    pub kind: SingularKind,
}

/// Ridge orientation field: angles in `[0, pi)` defined where `mask` is true.
#[derive(Debug, Clone)]
pub struct OrientationField {
    pub angles: Array2<f64>,
    pub mask: Array2<bool>,
}

impl OrientationField {
    pub fn height(&self) -> usize {
        self.angles.nrows()
    }
    pub fn width(&self) -> usize {
        self.angles.ncols()
    }
}

/// A synthetic finger: master ridge pattern plus its ground-truth template.
#[derive(Debug, Clone)]
pub struct SyntheticIdentity {
    pub identity_id: String,
    pub singular_points: Vec<SingularPoint>,
    pub ridge_frequency: f64,
    pub master_pattern: GrayscaleImage,
    pub master_template: MinutiaeTemplate,
}

#[derive(Debug, Clone)]
pub struct IdentityConfig {
    pub width: usize,
    pub height: usize,
    /// Ridge frequency sampled uniformly from this range (cycles/pixel).
    pub freq_range: (f64, f64),
    pub extractor: ExtractorConfig,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            width: 128,
            height: 128,
            freq_range: (1.0 / 12.0, 1.0 / 6.0),
            extractor: ExtractorConfig::default(),
        }
    }
}

/// Samples a synthetic identity: singular-point layout, frequency, master
/// pattern and the template extracted from it (labels and extractor agree by
/// construction).
pub fn generate_identity(
    identity_id: &str,
    config: &IdentityConfig,
    seed: u64,
) -> Result<SyntheticIdentity> {
    let mut r = rng::fork(seed, "identity-layout", 0);
    let (w, h) = (config.width as f64, config.height as f64);

    // pattern class: arch (no singularities), loop, or whorl
    let class: f64 = r.random();
    let mut points = Vec::new();
    let jitter = |r: &mut rand_chacha::ChaCha12Rng, s: f64| (r.random::<f64>() - 0.5) * s;
    if class > 0.25 {
        // loop and whorl share one core near the upper center
        points.push(SingularPoint {
            x: w * 0.5 + jitter(&mut r, w * 0.16),
            y: h * 0.42 + jitter(&mut r, h * 0.12),
            kind: SingularKind::Core,
        });
        points.push(SingularPoint {
            x: w * (if r.random::<f64>() < 0.5 { 0.34 } else { 0.66 }) + jitter(&mut r, w * 0.08),
            y: h * 0.72 + jitter(&mut r, h * 0.08),
            kind: SingularKind::Delta,
        });
        if class > 0.72 {
            // whorl: second core/delta pair
            points.push(SingularPoint {
                x: w * 0.5 + jitter(&mut r, w * 0.12),
                y: h * 0.55 + jitter(&mut r, h * 0.08),
                kind: SingularKind::Core,
            });
            points.push(SingularPoint {
                x: w * 0.5 + jitter(&mut r, w * 0.3),
                y: h * 0.78 + jitter(&mut r, h * 0.06),
                kind: SingularKind::Delta,
            });
        }
    }

    let frequency = rng::uniform(&mut r, config.freq_range.0, config.freq_range.1);
    let field = zero_pole_orientation(&points, config.width, config.height, 0.0)?;
    let pattern_seed = rng::derive_seed(seed, "ridge-pattern", 0);
    let master_pattern = synthesize_ridge_pattern(&field, frequency, pattern_seed)?;
    let mut master_template = extract_minutiae(&master_pattern, &config.extractor);
    master_template.identity_id = Some(identity_id.to_string());

    Ok(SyntheticIdentity {
        identity_id: identity_id.to_string(),
        singular_points: points,
        ridge_frequency: frequency,
        master_pattern,
        master_template,
    })
}
