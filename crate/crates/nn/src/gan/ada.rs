//! Differentiable augmentation pipeline for discriminator inputs.
//!
//! Each augmentation applies independently with probability `p` per sample.
//! Parameters are sampled outside the tape, so gradients flow through the
//! (linear) image transforms but not the parameters.

use crate::real::Real;
use crate::tape::Var;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct AdaConfig {
    pub p: f64,
    pub flip: bool,
    pub rotate90: bool,
    pub translate: bool,
    pub scale: bool,
    pub brightness_contrast: bool,
    pub cutout: bool,
    /// Translation range as a fraction of the resolution.
    pub translate_frac: f64,
    /// Log-scale stddev for isotropic scaling.
    pub scale_std: f64,
    pub brightness_range: f64,
    pub contrast_log_range: f64,
    /// Cutout square side as a fraction of the resolution.
    pub cutout_frac: f64,
}

impl AdaConfig {
    pub fn with_p(p: f64) -> Self {
        AdaConfig {
            p,
            flip: true,
            rotate90: true,
            translate: true,
            scale: true,
            brightness_contrast: true,
            cutout: true,
            translate_frac: 0.125,
            scale_std: 0.2,
            brightness_range: 0.2,
            contrast_log_range: 0.25,
            cutout_frac: 0.5,
        }
    }

    /// Restricts the pipeline to horizontal flips (used by tests).
    pub fn flip_only(p: f64) -> Self {
        AdaConfig {
            rotate90: false,
            translate: false,
            scale: false,
            brightness_contrast: false,
            cutout: false,
            ..AdaConfig::with_p(p)
        }
    }
}

/// Sampled per-image augmentation parameters.
#[derive(Debug, Clone, Default)]
pub struct AugSample {
    pub flip: bool,
    pub rot_k: u8,
    pub translate: Option<(i64, i64)>,
    pub scale: Option<f64>,
    pub brightness_contrast: Option<(f64, f64)>,
    pub cutout: Option<(usize, usize)>,
}

/// Draws the augmentation parameters for one batch.
pub fn sample_batch(
    cfg: &AdaConfig,
    resolution: usize,
    batch: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<AugSample> {
    let mut out = Vec::with_capacity(batch);
    let max_t = ((resolution as f64) * cfg.translate_frac).round() as i64;
    for _ in 0..batch {
        let mut s = AugSample::default();
        if cfg.flip && rng.random::<f64>() < cfg.p {
            s.flip = true;
        }
        if cfg.rotate90 && rng.random::<f64>() < cfg.p {
            s.rot_k = rng.random_range(1..4u8);
        }
        if cfg.translate && rng.random::<f64>() < cfg.p {
            s.translate = Some((
                rng.random_range(-max_t..=max_t),
                rng.random_range(-max_t..=max_t),
            ));
        }
        if cfg.scale && rng.random::<f64>() < cfg.p {
            let ln_s = synfp_core::rng::normal(rng) * cfg.scale_std;
            s.scale = Some(ln_s.exp().clamp(0.5, 2.0));
        }
        if cfg.brightness_contrast && rng.random::<f64>() < cfg.p {
            let b = synfp_core::rng::uniform(rng, -cfg.brightness_range, cfg.brightness_range);
            let c = synfp_core::rng::uniform(rng, -cfg.contrast_log_range, cfg.contrast_log_range)
                .exp();
            s.brightness_contrast = Some((c, b));
        }
        if cfg.cutout && rng.random::<f64>() < cfg.p {
            s.cutout = Some((rng.random_range(0..resolution), rng.random_range(0..resolution)));
        }
        out.push(s);
    }
    out
}

/// Applies sampled augmentations to a batch [B,1,R,R].
pub fn apply<'t, F: Real>(
    x: Var<'t, F>,
    samples: &[AugSample],
    cfg: &AdaConfig,
    resolution: usize,
) -> Var<'t, F> {
    let batch = x.shape()[0];
    assert_eq!(batch, samples.len());

    let mut y = x;
    if cfg.flip {
        let flips: Vec<bool> = samples.iter().map(|s| s.flip).collect();
        if flips.iter().any(|f| *f) {
            y = y.hflip_per_sample(&flips);
        }
    }
    if cfg.rotate90 {
        let ks: Vec<u8> = samples.iter().map(|s| s.rot_k).collect();
        if ks.iter().any(|k| *k != 0) {
            y = y.rot90_per_sample(&ks);
        }
    }
    if cfg.translate {
        let shifts: Vec<(i64, i64)> =
            samples.iter().map(|s| s.translate.unwrap_or((0, 0))).collect();
        if shifts.iter().any(|s| *s != (0, 0)) {
            y = y.translate_per_sample(&shifts);
        }
    }
    if cfg.scale {
        let scales: Vec<f64> = samples.iter().map(|s| s.scale.unwrap_or(1.0)).collect();
        if scales.iter().any(|s| *s != 1.0) {
            y = y.scale_per_sample(&scales);
        }
    }
    if cfg.brightness_contrast {
        let cs: Vec<f64> =
            samples.iter().map(|s| s.brightness_contrast.map_or(1.0, |v| v.0)).collect();
        let bs: Vec<f64> =
            samples.iter().map(|s| s.brightness_contrast.map_or(0.0, |v| v.1)).collect();
        if cs.iter().any(|c| *c != 1.0) || bs.iter().any(|b| *b != 0.0) {
            y = y.brightness_contrast_per_sample(&cs, &bs);
        }
    }
    if cfg.cutout && samples.iter().any(|s| s.cutout.is_some()) {
        let half = ((resolution as f64) * cfg.cutout_frac / 2.0).round() as i64;
        let mut mask =
            ndarray::Array4::<F>::ones((batch, 1, resolution, resolution));
        for (b, s) in samples.iter().enumerate() {
            if let Some((cx, cy)) = s.cutout {
                let (cx, cy) = (cx as i64, cy as i64);
                for yy in (cy - half).max(0)..(cy + half).min(resolution as i64) {
                    for xx in (cx - half).max(0)..(cx + half).min(resolution as i64) {
                        mask[[b, 0, yy as usize, xx as usize]] = F::zero();
                    }
                }
            }
        }
        y = y.mul_const(&mask.into_dyn());
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use ndarray::{Array4, IxDyn};

    fn batch_arr(b: usize, r: usize, seed: u64) -> ndarray::ArrayD<f64> {
        let mut rng = synfp_core::rng::fork(seed, "ada-test", 0);
        Array4::from_shape_fn((b, 1, r, r), |_| rng.random::<f64>()).into_dyn()
    }

    #[test]
    fn p_zero_is_identity() {
        let cfg = AdaConfig::with_p(0.0);
        let mut rng = synfp_core::rng::fork(1, "ada", 0);
        let samples = sample_batch(&cfg, 8, 4, &mut rng);
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(batch_arr(4, 8, 2));
        let y = apply(x, &samples, &cfg, 8);
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn p_one_flip_only_flips_every_image() {
        let cfg = AdaConfig::flip_only(1.0);
        let mut rng = synfp_core::rng::fork(2, "ada", 0);
        let samples = sample_batch(&cfg, 8, 3, &mut rng);
        assert!(samples.iter().all(|s| s.flip));
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(batch_arr(3, 8, 3));
        let y = apply(x, &samples, &cfg, 8);
        let (xv, yv) = (x.value(), y.value());
        for b in 0..3 {
            for yy in 0..8 {
                for xx in 0..8 {
                    assert_eq!(
                        yv[IxDyn(&[b, 0, yy, xx])],
                        xv[IxDyn(&[b, 0, yy, 7 - xx])]
                    );
                }
            }
        }
    }

    #[test]
    fn per_augmentation_rate_near_p() {
        let cfg = AdaConfig::with_p(0.6);
        let mut rng = synfp_core::rng::fork(3, "ada", 0);
        let n = 10_000;
        let samples = sample_batch(&cfg, 32, n, &mut rng);
        let rate = |f: &dyn Fn(&AugSample) -> bool| {
            samples.iter().filter(|s| f(s)).count() as f64 / n as f64
        };
        let rates = [
            rate(&|s| s.flip),
            rate(&|s| s.rot_k != 0),
            rate(&|s| s.translate.is_some()),
            rate(&|s| s.scale.is_some()),
            rate(&|s| s.brightness_contrast.is_some()),
            rate(&|s| s.cutout.is_some()),
        ];
        for (i, r) in rates.iter().enumerate() {
            assert!((0.58..=0.62).contains(r), "augmentation {i} rate {r}");
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let cfg = AdaConfig::with_p(0.6);
        let mut r1 = synfp_core::rng::fork(4, "ada", 0);
        let mut r2 = synfp_core::rng::fork(4, "ada", 0);
        let s1 = sample_batch(&cfg, 16, 32, &mut r1);
        let s2 = sample_batch(&cfg, 16, 32, &mut r2);
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
        }
    }

    #[test]
    fn augmentation_is_differentiable() {
        let cfg = AdaConfig::with_p(1.0);
        let mut rng = synfp_core::rng::fork(5, "ada", 0);
        let samples = sample_batch(&cfg, 8, 2, &mut rng);
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(batch_arr(2, 8, 6));
        let loss = apply(x, &samples, &cfg, 8).square().sum();
        let grads = tape.backward(loss);
        let g = grads.get(x).expect("gradient flows through augmentations");
        assert!(g.iter().any(|v| *v != 0.0));
    }
}
