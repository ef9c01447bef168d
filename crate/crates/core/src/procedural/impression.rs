//! Impression rendering: affine jitter, contrast and dry-skin style noise
//! applied to a master pattern, with the template mapped through the same
//! transform.

use super::SyntheticIdentity;
use crate::minutiae::{GrayscaleImage, MinutiaeTemplate};
use crate::rng;
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    /// Contrast multiplier jitter around 1.0.
    pub contrast_jitter: f64,
    /// Maximum number of light dry-skin blobs.
    pub blob_count: usize,
    /// Peak lightening applied by a blob, in [0, 1].
    pub blob_strength: f64,
    /// Additive per-pixel speckle amplitude.
    pub speckle: f64,
}

impl NoiseConfig {
    /// Identity transform, no noise: the impression equals the master.
    pub fn none() -> Self {
        NoiseConfig {
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            contrast_jitter: 0.0,
            blob_count: 0,
            blob_strength: 0.0,
            speckle: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self == &NoiseConfig::none()
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            max_rotation_deg: 5.0,
            max_translation: 4.0,
            contrast_jitter: 0.15,
            blob_count: 3,
            blob_strength: 0.55,
            speckle: 0.03,
        }
    }
}

/// Renders one impression of an identity; returns the distorted image and the
/// master template mapped through the same affine transform.
pub fn render_impression(
    identity: &SyntheticIdentity,
    noise: &NoiseConfig,
    seed: u64,
) -> (GrayscaleImage, MinutiaeTemplate) {
    if noise.is_none() {
        return (identity.master_pattern.clone(), identity.master_template.clone());
    }
    let mut r = rng::fork(seed, "impression", 0);
    let rot = rng::uniform(&mut r, -noise.max_rotation_deg, noise.max_rotation_deg);
    let tx = rng::uniform(&mut r, -noise.max_translation, noise.max_translation);
    let ty = rng::uniform(&mut r, -noise.max_translation, noise.max_translation);

    let src = &identity.master_pattern.data;
    let (h, w) = src.dim();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let rad = rot.to_radians();
    let (sin, cos) = (rad.sin(), rad.cos());

    let mut img = Array2::<f64>::from_elem((h, w), 1.0);
    for y in 0..h {
        for x in 0..w {
            // inverse map: undo translation, rotate by -rot about center
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            img[[y, x]] = sample_bilinear(src, sx, sy, 1.0);
        }
    }

    // contrast jitter about mid-gray
    let contrast = 1.0 + rng::uniform(&mut r, -noise.contrast_jitter, noise.contrast_jitter);
    img.mapv_inplace(|v| 0.5 + (v - 0.5) * contrast);

    // light dry-skin blobs
    let blobs = if noise.blob_count == 0 { 0 } else { r.random_range(0..=noise.blob_count) };
    for _ in 0..blobs {
        let bx = rng::uniform(&mut r, w as f64 * 0.2, w as f64 * 0.8);
        let by = rng::uniform(&mut r, h as f64 * 0.2, h as f64 * 0.8);
        let radius = rng::uniform(&mut r, w as f64 * 0.04, w as f64 * 0.12);
        let strength = rng::uniform(&mut r, 0.4, 1.0) * noise.blob_strength;
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                let g = strength * (-d2 / (2.0 * radius * radius)).exp();
                let v = img[[y, x]];
                img[[y, x]] = v + (1.0 - v) * g;
            }
        }
    }

    if noise.speckle > 0.0 {
        for v in img.iter_mut() {
            *v += noise.speckle * (r.random::<f64>() * 2.0 - 1.0);
        }
    }

    let mut template = identity.master_template.transformed(rot, tx, ty);
    template.identity_id = identity.master_template.identity_id.clone();
    (GrayscaleImage::from_clamped(img), template)
}

fn sample_bilinear(src: &Array2<f64>, x: f64, y: f64, outside: f64) -> f64 {
    let (h, w) = src.dim();
    if x < -1.0 || y < -1.0 || x > w as f64 || y > h as f64 {
        return outside;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let (wx, wy) = (x - x0, y - y0);
    let mut acc = 0.0;
    for (iy, fy) in [(y0 as i64, 1.0 - wy), (y0 as i64 + 1, wy)] {
        for (ix, fx) in [(x0 as i64, 1.0 - wx), (x0 as i64 + 1, wx)] {
            let v = if ix >= 0 && iy >= 0 && (ix as usize) < w && (iy as usize) < h {
                src[[iy as usize, ix as usize]]
            } else {
                outside
            };
            acc += v * fy * fx;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::{Minutia, MinutiaKind};
    use crate::procedural::{generate_identity, IdentityConfig};

    fn tiny_identity() -> SyntheticIdentity {
        let cfg = IdentityConfig {
            width: 64,
            height: 64,
            ..IdentityConfig::default()
        };
        generate_identity("id_test", &cfg, 99).unwrap()
    }

    #[test]
    fn zero_noise_returns_master_exactly() {
        let id = tiny_identity();
        let (img, tmpl) = render_impression(&id, &NoiseConfig::none(), 123);
        assert_eq!(img.data, id.master_pattern.data);
        assert_eq!(tmpl, id.master_template);
    }

    #[test]
    fn impressions_are_seed_deterministic() {
        let id = tiny_identity();
        let (a, ta) = render_impression(&id, &NoiseConfig::default(), 5);
        let (b, tb) = render_impression(&id, &NoiseConfig::default(), 5);
        assert_eq!(a.data, b.data);
        assert_eq!(ta, tb);
        let (c, _) = render_impression(&id, &NoiseConfig::default(), 6);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn pure_translation_shifts_template_exactly() {
        let mut id = tiny_identity();
        id.master_template.minutiae = vec![
            Minutia::new(20.0, 30.0, 45.0, MinutiaKind::Termination),
            Minutia::new(40.0, 22.0, 190.0, MinutiaKind::Bifurcation),
        ];
        let shifted = id.master_template.transformed(0.0, 4.0, 0.0);
        for (m, s) in id.master_template.minutiae.iter().zip(shifted.minutiae.iter()) {
            assert_eq!(s.x, m.x + 4.0);
            assert_eq!(s.y, m.y);
            assert_eq!(s.theta_deg, m.theta_deg);
        }
    }
}
