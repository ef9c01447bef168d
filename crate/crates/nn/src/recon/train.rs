//! Encoder training against a frozen generator and identity network.

use super::{scale_template, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::gan::{Generator, NoiseMode};
use crate::idnet::IdentityNet;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::params::Binder;
use crate::real::Real;
use crate::tape::Tape;
use ndarray::Array4;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use synfp_core::imageio::{load_png_gray, resize_bilinear, save_contact_sheet};
use synfp_core::minutiae::{read_template, render_minutiae_map, GrayscaleImage};
use synfp_core::procedural::read_manifest;
use synfp_core::rng as core_rng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderTrainConfig {
    /// Optimizer: the rectified-warmup/lookahead variant by default, plain
    /// adaptive moments when `plain_adam` is set.
    pub lr: f64,
    pub plain_adam: bool,
    pub batch: usize,
    pub line_len: f64,
    pub sigma: f64,
    /// Relative weights of the two loss terms.
    pub l2_weight: f64,
    pub id_weight: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Validation-grid emission interval (0 disables).
    pub grid_every: usize,
    pub validation_fraction: f64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        EncoderTrainConfig {
            lr: 0.0001,
            plain_adam: false,
            batch: 4,
            line_len: 15.0,
            sigma: 9.0,
            l2_weight: 1.0,
            id_weight: 1.0,
            seed: 0,
            checkpoint_every: 1000,
            grid_every: 0,
            validation_fraction: 0.1,
        }
    }
}

pub struct EncoderSample<F: Real> {
    pub map: Array4<F>,
    pub image: Array4<F>,
}

/// Renders (minutiae map, target image) pairs at the encoder resolution.
/// Stroke length and smoothing rescale with the template.
pub fn load_training_set<F: Real>(
    manifest_path: &Path,
    resolution: usize,
    line_len: f64,
    sigma: f64,
) -> Result<Vec<EncoderSample<F>>> {
    let manifest = read_manifest(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::invalid("manifest has no entries"));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let img = load_png_gray(manifest.resolve(manifest_path, &entry.image))?;
        let template = read_template(manifest.resolve(manifest_path, &entry.template))?;
        let scale = resolution as f64 / template.width.max(1) as f64;
        let scaled = scale_template(&template, resolution as u32, resolution as u32);
        let map = render_minutiae_map(&scaled, (line_len * scale).max(1.0), sigma * scale)?;
        let img = if img.data.dim() == (resolution, resolution) {
            img
        } else {
            resize_bilinear(&img, resolution, resolution)
        };
        out.push(EncoderSample {
            map: Array4::from_shape_fn((1, 3, resolution, resolution), |(_, c, y, x)| {
                F::from_f64(map.data[[y, x, c]])
            }),
            image: Array4::from_shape_fn((1, 1, resolution, resolution), |(_, _, y, x)| {
                F::from_f64(img.data[[y, x]])
            }),
        });
    }
    Ok(out)
}

pub struct EncoderStepStats {
    pub total: f64,
    pub l2: f64,
    pub lid: f64,
}

/// One optimization step on a batch of sample indices; generator and
/// identity-network parameters stay frozen.
pub fn train_step<F: Real>(
    encoder: &mut Encoder<F>,
    generator: &Generator<F>,
    idnet: &IdentityNet<F>,
    opt: &mut Optimizer<F>,
    samples: &[EncoderSample<F>],
    batch_idx: &[usize],
    cfg: &EncoderTrainConfig,
) -> EncoderStepStats {
    let r = encoder.config.resolution;
    let b = batch_idx.len();
    let mut maps = Array4::<F>::zeros((b, 3, r, r));
    let mut targets = Array4::<F>::zeros((b, 1, r, r));
    for (bi, &i) in batch_idx.iter().enumerate() {
        maps.index_axis_mut(ndarray::Axis(0), bi)
            .assign(&samples[i].map.index_axis(ndarray::Axis(0), 0));
        targets
            .index_axis_mut(ndarray::Axis(0), bi)
            .assign(&samples[i].image.index_axis(ndarray::Axis(0), 0));
    }

    let tape: Tape<F> = Tape::new();
    let enc_binder = Binder::new(&tape, &encoder.store);
    let gen_binder = Binder::frozen(&tape, &generator.store);
    let id_binder = Binder::frozen(&tape, &idnet.store);

    let map_var = tape.constant(maps.into_dyn());
    let target_var = tape.constant(targets.into_dyn());
    let w = encoder.forward(&enc_binder, map_var);
    let noise = generator.make_noise(b, NoiseMode::None);
    let raw = generator.synthesis_forward(&gen_binder, w, &noise);
    let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);

    let l2 = recon01.sub(target_var).square().mean();
    let lid = idnet.identity_loss_var(&id_binder, recon01, target_var);
    let total = l2.mul_scalar(cfg.l2_weight).add(lid.mul_scalar(cfg.id_weight));

    let stats = EncoderStepStats {
        total: total.scalar_f64(),
        l2: l2.scalar_f64(),
        lid: lid.scalar_f64(),
    };
    let mut grads = tape.backward(total);
    let collected = enc_binder.collect(&mut grads);
    opt.step(&mut encoder.store, &collected);
    stats
}

/// Mean validation loss of the current encoder.
pub fn validation_loss<F: Real>(
    encoder: &Encoder<F>,
    generator: &Generator<F>,
    idnet: &IdentityNet<F>,
    samples: &[EncoderSample<F>],
    indices: &[usize],
    cfg: &EncoderTrainConfig,
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let r = encoder.config.resolution;
    let mut total = 0.0;
    for &i in indices {
        let tape: Tape<F> = Tape::new();
        let enc_binder = Binder::frozen(&tape, &encoder.store);
        let gen_binder = Binder::frozen(&tape, &generator.store);
        let id_binder = Binder::frozen(&tape, &idnet.store);
        let map_var = tape.constant(samples[i].map.clone().into_dyn());
        let target_var = tape.constant(samples[i].image.clone().into_dyn());
        let w = encoder.forward(&enc_binder, map_var);
        let noise = generator.make_noise(1, NoiseMode::None);
        let raw = generator.synthesis_forward(&gen_binder, w, &noise);
        let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);
        let l2 = recon01.sub(target_var).square().mean();
        let lid = idnet.identity_loss_var(&id_binder, recon01, target_var);
        total += l2.mul_scalar(cfg.l2_weight).add(lid.mul_scalar(cfg.id_weight)).scalar_f64();
        let _ = r;
    }
    total / indices.len() as f64
}

/// Trains the encoder; the generator and identity-network hashes are asserted
/// unchanged (freeze contract). Returns the encoder checkpoint path.
#[allow(clippy::too_many_arguments)]
pub fn train_encoder<F: Real>(
    manifest_path: &Path,
    generator: &Generator<F>,
    idnet: &IdentityNet<F>,
    enc_config: EncoderConfig,
    cfg: EncoderTrainConfig,
    steps: usize,
    out_dir: &Path,
) -> Result<PathBuf> {
    if steps == 0 {
        return Err(Error::invalid("steps must be > 0"));
    }
    if enc_config.latent_dim != generator.config.latent_dim {
        return Err(Error::invalid(format!(
            "encoder latent_dim {} must match generator latent_dim {}",
            enc_config.latent_dim, generator.config.latent_dim
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples =
        load_training_set::<F>(manifest_path, enc_config.resolution, cfg.line_len, cfg.sigma)?;

    let gen_hash = generator.store.content_hash();
    let id_hash = idnet.store.content_hash();

    // deterministic train/validation split
    let n_val = ((samples.len() as f64 * cfg.validation_fraction) as usize)
        .clamp(1, samples.len().saturating_sub(1).max(1));
    let val_idx: Vec<usize> = (0..n_val).collect();
    let train_idx: Vec<usize> = (n_val..samples.len()).collect();
    if train_idx.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }

    let mut encoder = Encoder::new(enc_config)?;
    let opt_cfg = if cfg.plain_adam {
        OptimizerConfig::adam(cfg.lr, 0.9, 0.999)
    } else {
        OptimizerConfig::ranger(cfg.lr)
    };
    let mut opt = Optimizer::new(opt_cfg, &encoder.store);

    let log_path = out_dir.join("train_encoder.csv");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "step,total,l2,lid,val").map_err(|e| Error::io(&log_path, e))?;

    let val0 = validation_loss(&encoder, generator, idnet, &samples, &val_idx, &cfg);
    writeln!(log, "0,,,,{val0:.6}").map_err(|e| Error::io(&log_path, e))?;

    let ckpt_path = out_dir.join("encoder.ckpt");
    encoder.to_checkpoint(0).save(&ckpt_path)?;
    let mut rng = core_rng::fork(cfg.seed, "encoder-train", 0);
    let mut order = train_idx.clone();
    let mut cursor = order.len();
    for step in 1..=steps {
        let b = cfg.batch.min(order.len());
        let mut batch = Vec::with_capacity(b);
        for _ in 0..b {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let stats = train_step(&mut encoder, generator, idnet, &mut opt, &samples, &batch, &cfg);
        if !stats.total.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite encoder loss at step {step}; last good checkpoint at {}",
                ckpt_path.display()
            )));
        }
        let val = if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            let v = validation_loss(&encoder, generator, idnet, &samples, &val_idx, &cfg);
            encoder.to_checkpoint(step as u64).save(&ckpt_path)?;
            format!("{v:.6}")
        } else {
            String::new()
        };
        writeln!(log, "{step},{:.6},{:.6},{:.6},{val}", stats.total, stats.l2, stats.lid)
            .map_err(|e| Error::io(&log_path, e))?;

        if cfg.grid_every > 0 && step % cfg.grid_every == 0 {
            let grid = validation_grid(&encoder, generator, &samples, &val_idx);
            save_contact_sheet(&grid, val_idx.len().min(8), out_dir.join(format!("val_{step}.png")))?;
        }
    }
    let val_end = validation_loss(&encoder, generator, idnet, &samples, &val_idx, &cfg);
    writeln!(log, "{steps},,,,{val_end:.6}").map_err(|e| Error::io(&log_path, e))?;
    encoder.to_checkpoint(steps as u64).save(&ckpt_path)?;

    // freeze contract
    assert_eq!(gen_hash, generator.store.content_hash(), "generator changed during encoder training");
    assert_eq!(id_hash, idnet.store.content_hash(), "identity net changed during encoder training");
    Ok(ckpt_path)
}

/// Top row originals, bottom row reconstructions.
fn validation_grid<F: Real>(
    encoder: &Encoder<F>,
    generator: &Generator<F>,
    samples: &[EncoderSample<F>],
    indices: &[usize],
) -> Vec<GrayscaleImage> {
    let r = encoder.config.resolution;
    let take: Vec<usize> = indices.iter().copied().take(8).collect();
    let mut row_orig = Vec::new();
    let mut row_recon = Vec::new();
    for &i in &take {
        row_orig.push(GrayscaleImage::from_clamped(ndarray::Array2::from_shape_fn(
            (r, r),
            |(y, x)| samples[i].image[[0, 0, y, x]].as_f64(),
        )));
        let tape: Tape<F> = Tape::new();
        let enc_binder = Binder::frozen(&tape, &encoder.store);
        let gen_binder = Binder::frozen(&tape, &generator.store);
        let map_var = tape.constant(samples[i].map.clone().into_dyn());
        let w = encoder.forward(&enc_binder, map_var);
        let noise = generator.make_noise(1, NoiseMode::None);
        let raw = generator.synthesis_forward(&gen_binder, w, &noise);
        let rv = raw.value();
        row_recon.push(GrayscaleImage::from_clamped(ndarray::Array2::from_shape_fn(
            (r, r),
            |(y, x)| rv[ndarray::IxDyn(&[0, 0, y, x])].as_f64() * 0.5 + 0.5,
        )));
    }
    row_orig.extend(row_recon);
    row_orig
}
