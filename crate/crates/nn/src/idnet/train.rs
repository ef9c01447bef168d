//! Supervised training of the identity network on procedural data with
//! ground-truth templates.

use super::{IdentityNet, IdentityNetConfig};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::params::Binder;
use crate::real::Real;
use crate::tape::{Tape, Var};
use ndarray::{Array2, Array4, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use synfp_core::imageio::{load_png_gray, resize_bilinear};
use synfp_core::minutiae::{read_template, GrayscaleImage, MinutiaeTemplate};
use synfp_core::procedural::read_manifest;
use synfp_core::rng as core_rng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IdnetTrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for IdnetTrainConfig {
    fn default() -> Self {
        IdnetTrainConfig { lr: 1e-3, batch: 8, seed: 0, checkpoint_every: 500 }
    }
}

/// Cell-level supervision targets derived from a template and its image.
pub struct CellTargets {
    /// 1.0 where a cell contains at least one minutia.
    pub occupancy: Array2<f64>,
    /// Normalized sub-cell offsets of the first minutia per cell.
    pub xy: ndarray::Array3<f64>,
    /// (cos 2theta, sin 2theta) of the first minutia per cell.
    pub orientation: ndarray::Array3<f64>,
    /// Foreground fraction per cell.
    pub segmentation: Array2<f64>,
}

/// Builds targets at the network resolution; the template is scaled to match
/// the image scale.
pub fn build_targets(
    image: &GrayscaleImage,
    template: &MinutiaeTemplate,
    resolution: usize,
) -> CellTargets {
    let grid = resolution / 8;
    let mut occupancy = Array2::<f64>::zeros((grid, grid));
    let mut xy = ndarray::Array3::<f64>::zeros((grid, grid, 2));
    let mut orientation = ndarray::Array3::<f64>::zeros((grid, grid, 2));
    let mut segmentation = Array2::<f64>::zeros((grid, grid));

    let sx = resolution as f64 / template.width as f64;
    let sy = resolution as f64 / template.height as f64;
    for m in &template.minutiae {
        let (px, py) = (m.x * sx, m.y * sy);
        let (cx, cy) = ((px / 8.0) as usize, (py / 8.0) as usize);
        if cx >= grid || cy >= grid || occupancy[[cy, cx]] > 0.0 {
            continue;
        }
        occupancy[[cy, cx]] = 1.0;
        xy[[cy, cx, 0]] = (px - cx as f64 * 8.0) / 8.0;
        xy[[cy, cx, 1]] = (py - cy as f64 * 8.0) / 8.0;
        let two_theta = 2.0 * m.theta_deg.to_radians();
        orientation[[cy, cx, 0]] = two_theta.cos();
        orientation[[cy, cx, 1]] = two_theta.sin();
    }

    // foreground fraction per 8x8 cell (procedural backgrounds are white)
    for cy in 0..grid {
        for cx in 0..grid {
            let mut fg = 0usize;
            for y in cy * 8..(cy + 1) * 8 {
                for x in cx * 8..(cx + 1) * 8 {
                    if image.data[[y, x]] < 0.92 {
                        fg += 1;
                    }
                }
            }
            segmentation[[cy, cx]] = fg as f64 / 64.0;
        }
    }

    CellTargets { occupancy, xy, orientation, segmentation }
}

pub struct IdnetSample<F: Real> {
    pub image: Array4<F>,
    pub targets: CellTargets,
}

/// Loads (image, target) pairs from a manifest, resized to the network
/// resolution.
pub fn load_training_set<F: Real>(
    manifest_path: &Path,
    resolution: usize,
) -> Result<Vec<IdnetSample<F>>> {
    let manifest = read_manifest(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::invalid("manifest has no entries"));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let img = load_png_gray(manifest.resolve(manifest_path, &entry.image))?;
        let template = read_template(manifest.resolve(manifest_path, &entry.template))?;
        let img = if img.data.dim() == (resolution, resolution) {
            img
        } else {
            resize_bilinear(&img, resolution, resolution)
        };
        let targets = build_targets(&img, &template, resolution);
        let image = Array4::from_shape_fn((1, 1, resolution, resolution), |(_, _, y, x)| {
            F::from_f64(img.data[[y, x]])
        });
        out.push(IdnetSample { image, targets });
    }
    Ok(out)
}

/// Numerically stable `mean(softplus(z) - z * t)` cross-entropy on logits,
/// optionally masked.
fn bce_logits<'t, F: Real>(
    logits: Var<'t, F>,
    targets: &ArrayD<F>,
    mask: Option<&ArrayD<F>>,
) -> Var<'t, F> {
    let base = logits.softplus().sub(logits.mul_const(targets));
    match mask {
        Some(m) => {
            let total = m.iter().map(|v| v.as_f64()).sum::<f64>().max(1.0);
            base.mul_const(m).sum().mul_scalar(1.0 / total)
        }
        None => base.mean(),
    }
}

fn masked_l2<'t, F: Real>(x: Var<'t, F>, targets: &ArrayD<F>, mask: &ArrayD<F>) -> Var<'t, F> {
    let total = mask.iter().map(|v| v.as_f64()).sum::<f64>().max(1.0);
    x.sub_const(targets).square().mul_const(mask).sum().mul_scalar(1.0 / total)
}

pub struct IdnetStepStats {
    pub total: f64,
    pub detection: f64,
    pub orientation: f64,
}

/// One supervised step over a batch of sample indices.
pub fn train_step<F: Real>(
    net: &mut IdentityNet<F>,
    opt: &mut Optimizer<F>,
    samples: &[IdnetSample<F>],
    batch_idx: &[usize],
) -> IdnetStepStats {
    let r = net.config.resolution;
    let g = net.config.grid();
    let b = batch_idx.len();

    let mut images = Array4::<F>::zeros((b, 1, r, r));
    let mut det_t = Array4::<F>::zeros((b, 1, g, g));
    let mut xy_t = Array4::<F>::zeros((b, 2, g, g));
    let mut or_t = Array4::<F>::zeros((b, 2, g, g));
    let mut seg_t = Array4::<F>::zeros((b, 1, g, g));
    let mut mask2 = Array4::<F>::zeros((b, 2, g, g));
    for (bi, &i) in batch_idx.iter().enumerate() {
        let s = &samples[i];
        images
            .index_axis_mut(ndarray::Axis(0), bi)
            .assign(&s.image.index_axis(ndarray::Axis(0), 0));
        for y in 0..g {
            for x in 0..g {
                let occ = s.targets.occupancy[[y, x]];
                det_t[[bi, 0, y, x]] = F::from_f64(occ);
                seg_t[[bi, 0, y, x]] = F::from_f64(s.targets.segmentation[[y, x]]);
                for c in 0..2 {
                    xy_t[[bi, c, y, x]] = F::from_f64(s.targets.xy[[y, x, c]]);
                    or_t[[bi, c, y, x]] = F::from_f64(s.targets.orientation[[y, x, c]]);
                    mask2[[bi, c, y, x]] = F::from_f64(occ);
                }
            }
        }
    }

    let tape: Tape<F> = Tape::new();
    let binder = Binder::new(&tape, &net.store);
    let x = tape.constant(images.into_dyn());
    let heads = net.forward(&binder, x);

    let det_loss = bce_logits(heads.detection, &det_t.into_dyn(), None);
    let xy_loss = bce_logits(heads.xy, &xy_t.into_dyn(), Some(&mask2.clone().into_dyn()));
    let orient = heads.orientation.squash2();
    let or_loss = masked_l2(orient, &or_t.into_dyn(), &mask2.into_dyn());
    let seg_loss = bce_logits(heads.segmentation, &seg_t.into_dyn(), None);

    let total = det_loss.add(xy_loss).add(or_loss).add(seg_loss);
    let stats = IdnetStepStats {
        total: total.scalar_f64(),
        detection: det_loss.scalar_f64(),
        orientation: or_loss.scalar_f64(),
    };
    let mut grads = tape.backward(total);
    let collected = binder.collect(&mut grads);
    opt.step(&mut net.store, &collected);
    stats
}

/// Full training drive: returns the checkpoint path. Aborts on non-finite
/// losses keeping the last good checkpoint on disk.
pub fn train_identity<F: Real>(
    manifest_path: &Path,
    net_config: IdentityNetConfig,
    train_config: IdnetTrainConfig,
    steps: usize,
    out_dir: &Path,
) -> Result<PathBuf> {
    if steps == 0 {
        return Err(Error::invalid("steps must be > 0"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = load_training_set::<F>(manifest_path, net_config.resolution)?;
    let mut net = IdentityNet::new(net_config)?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(train_config.lr, 0.9, 0.999), &net.store);

    let log_path = out_dir.join("train_idnet.csv");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "step,total,detection,orientation").map_err(|e| Error::io(&log_path, e))?;

    let ckpt_path = out_dir.join("idnet.ckpt");
    net.to_checkpoint(0).save(&ckpt_path)?;
    let mut rng = core_rng::fork(train_config.seed, "idnet-train", 0);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = samples.len();
    for step in 1..=steps {
        let b = train_config.batch.min(samples.len());
        let mut batch = Vec::with_capacity(b);
        for _ in 0..b {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let stats = train_step(&mut net, &mut opt, &samples, &batch);
        if !stats.total.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite identity loss at step {step}; last good checkpoint at {}",
                ckpt_path.display()
            )));
        }
        writeln!(log, "{step},{:.6},{:.6},{:.6}", stats.total, stats.detection, stats.orientation)
            .map_err(|e| Error::io(&log_path, e))?;
        if train_config.checkpoint_every > 0 && step % train_config.checkpoint_every == 0 {
            net.to_checkpoint(step as u64).save(&ckpt_path)?;
        }
    }
    net.to_checkpoint(steps as u64).save(&ckpt_path)?;
    Ok(ckpt_path)
}

/// Cell-level detection AUC over a held-out sample set.
pub fn detection_auc<F: Real>(net: &IdentityNet<F>, samples: &[IdnetSample<F>]) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let g = net.config.grid();
    for s in samples {
        let img = GrayscaleImage {
            data: Array2::from_shape_fn((net.config.resolution, net.config.resolution), |(y, x)| {
                s.image[[0, 0, y, x]].as_f64()
            }),
        };
        let f = net.identity_forward(&img).expect("resolution matches");
        for y in 0..g {
            for x in 0..g {
                let score = f.detection_scores[[y, x]];
                if s.targets.occupancy[[y, x]] > 0.5 {
                    pos.push(score);
                } else {
                    neg.push(score);
                }
            }
        }
    }
    auc(&pos, &neg)
}

/// Median angular error (degrees) of the orientation head on occupied cells.
pub fn median_orientation_error<F: Real>(
    net: &IdentityNet<F>,
    samples: &[IdnetSample<F>],
) -> f64 {
    let g = net.config.grid();
    let mut errors = Vec::new();
    for s in samples {
        let img = GrayscaleImage {
            data: Array2::from_shape_fn((net.config.resolution, net.config.resolution), |(y, x)| {
                s.image[[0, 0, y, x]].as_f64()
            }),
        };
        let f = net.identity_forward(&img).expect("resolution matches");
        for y in 0..g {
            for x in 0..g {
                if s.targets.occupancy[[y, x]] < 0.5 {
                    continue;
                }
                let pred = f.orientations[[y, x, 1]].atan2(f.orientations[[y, x, 0]]);
                let truth = s.targets.orientation[[y, x, 1]].atan2(s.targets.orientation[[y, x, 0]]);
                // angles are 2*theta; fold the difference to [0, pi] then halve
                let mut d = (pred - truth).abs() % (2.0 * std::f64::consts::PI);
                if d > std::f64::consts::PI {
                    d = 2.0 * std::f64::consts::PI - d;
                }
                errors.push((d / 2.0).to_degrees());
            }
        }
    }
    if errors.is_empty() {
        return 0.0;
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    errors[errors.len() / 2]
}

/// Area under the ROC curve via the rank-sum statistic (ties at half).
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0f64;
    for p in positives {
        for n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positives.len() as f64 * negatives.len() as f64)
}
