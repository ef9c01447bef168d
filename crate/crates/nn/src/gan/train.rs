//! Adversarial training: non-saturating logistic loss, lazy R1 gradient
//! penalty on real images, and fixed-probability ADA on discriminator inputs.

use super::ada::{self, AdaConfig};
use super::{Discriminator, Generator, GeneratorConfig, NoiseMode};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::params::{Binder, ParamRef};
use crate::real::Real;
use crate::tape::{Arr, Tape};
use ndarray::{Array2, Array4, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use synfp_core::imageio::{load_png_gray, resize_bilinear};
use synfp_core::procedural::read_manifest;
use synfp_core::rng as core_rng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainConfig {
    pub batch: usize,
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub ada_p: f64,
    /// Adjust ada_p towards a sign-target instead of keeping it fixed.
    pub ada_adaptive: bool,
    pub ada_target: f64,
    pub r1_weight: f64,
    pub r1_interval: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            batch: 16,
            g_lr: 0.0016,
            d_lr: 0.0019,
            beta1: 0.0,
            beta2: 0.99,
            ada_p: 0.6,
            ada_adaptive: false,
            ada_target: 0.6,
            r1_weight: 10.0,
            r1_interval: 16,
            checkpoint_every: 500,
            seed: 0,
        }
    }
}

/// Images from a dataset manifest, resized to the generator resolution,
/// as an [N,1,R,R] tensor in [0,1].
pub fn load_images<F: Real>(manifest_path: &Path, resolution: usize) -> Result<Array4<F>> {
    let manifest = read_manifest(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::invalid("manifest has no entries"));
    }
    let mut out = Array4::<F>::zeros((manifest.entries.len(), 1, resolution, resolution));
    for (i, entry) in manifest.entries.iter().enumerate() {
        let img = load_png_gray(manifest.resolve(manifest_path, &entry.image))?;
        let img = if img.data.dim() == (resolution, resolution) {
            img
        } else {
            resize_bilinear(&img, resolution, resolution)
        };
        for y in 0..resolution {
            for x in 0..resolution {
                out[[i, 0, y, x]] = F::from_f64(img.data[[y, x]]);
            }
        }
    }
    Ok(out)
}

pub struct GanTrainer<F: Real> {
    pub generator: Generator<F>,
    pub discriminator: Discriminator<F>,
    pub opt_g: Optimizer<F>,
    pub opt_d: Optimizer<F>,
    pub train_config: GanTrainConfig,
    pub ada_p: f64,
    pub step: u64,
}

pub struct StepStats {
    pub loss_g: f64,
    pub loss_d: f64,
    pub r1_penalty: Option<f64>,
}

impl<F: Real> GanTrainer<F> {
    pub fn new(gen_config: GeneratorConfig, train_config: GanTrainConfig) -> Result<Self> {
        let generator = Generator::new(gen_config.clone())?;
        let discriminator = Discriminator::new(gen_config)?;
        let opt_g = Optimizer::new(
            OptimizerConfig::adam(train_config.g_lr, train_config.beta1, train_config.beta2),
            &generator.store,
        );
        let opt_d = Optimizer::new(
            OptimizerConfig::adam(train_config.d_lr, train_config.beta1, train_config.beta2),
            &discriminator.store,
        );
        let ada_p = train_config.ada_p;
        Ok(GanTrainer {
            generator,
            discriminator,
            opt_g,
            opt_d,
            train_config,
            ada_p,
            step: 0,
        })
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let gen_config: GeneratorConfig =
            serde_json::from_value(ckpt.config["generator"].clone())
                .map_err(|e| Error::invalid(format!("generator config: {e}")))?;
        let train_config: GanTrainConfig = serde_json::from_value(ckpt.config["train"].clone())
            .map_err(|e| Error::invalid(format!("train config: {e}")))?;
        let mut t = GanTrainer::new(gen_config, train_config)?;
        ckpt.assign_into("generator", &mut t.generator.store)?;
        ckpt.assign_into("discriminator", &mut t.discriminator.store)?;
        t.step = ckpt.step;
        t.ada_p = ckpt.ada_p.unwrap_or(t.train_config.ada_p);
        let opt_step = |key: &str| -> u64 {
            ckpt.config["optimizer_steps"][key].as_u64().unwrap_or(ckpt.step)
        };
        t.opt_g
            .load_state(&t.generator.store, opt_step("g"), |name| ckpt.tensor::<F>(&format!("g.{name}")));
        t.opt_d
            .load_state(&t.discriminator.store, opt_step("d"), |name| ckpt.tensor::<F>(&format!("d.{name}")));
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let config = serde_json::json!({
            "generator": self.generator.config,
            "train": self.train_config,
            "optimizer_steps": { "g": self.opt_g.step_count, "d": self.opt_d.step_count },
        });
        let mut ck = Checkpoint::new("gan", F::DTYPE, config);
        ck.step = self.step;
        ck.ada_p = Some(self.ada_p);
        ck.insert_store("generator", &self.generator.store);
        ck.insert_store("discriminator", &self.discriminator.store);
        for (name, t) in self.opt_g.state_tensors(&self.generator.store) {
            ck.insert_tensor(format!("g.{name}"), &t);
        }
        for (name, t) in self.opt_d.state_tensors(&self.discriminator.store) {
            ck.insert_tensor(format!("d.{name}"), &t);
        }
        ck
    }

    fn sample_latents(&self, batch: usize, rng: &mut rand_chacha::ChaCha12Rng) -> ArrayD<F> {
        Array2::from_shape_fn((batch, self.generator.config.latent_dim), |_| {
            F::from_f64(core_rng::normal(rng))
        })
        .into_dyn()
    }

    /// Generates a batch of raw images without tracking gradients.
    fn generate_detached(&self, z: &ArrayD<F>, noise_seed: u64) -> ArrayD<F> {
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.generator.store);
        let zv = tape.constant(z.clone());
        let w = self.generator.mapping_forward(&binder, zv);
        let noise = self.generator.make_noise(z.shape()[0], NoiseMode::Random(noise_seed));
        let raw = self.generator.synthesis_forward(&binder, w, &noise);
        raw.value().as_ref().clone()
    }

    /// One alternating update; returns losses for logging.
    pub fn train_step(&mut self, images: &Array4<F>, ada_cfg: &AdaConfig) -> Result<StepStats> {
        let cfg = self.train_config.clone();
        let res = self.generator.config.resolution;
        let n = images.dim().0;
        if n == 0 {
            return Err(Error::invalid("empty training set"));
        }
        let step_seed = core_rng::derive_seed(cfg.seed, "gan-step", self.step);
        let mut rng = core_rng::fork(step_seed, "streams", 0);

        // real batch
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        let batch = cfg.batch.min(n);
        let mut reals = Array4::<F>::zeros((batch, 1, res, res));
        for (bi, &i) in indices[..batch].iter().enumerate() {
            reals
                .index_axis_mut(ndarray::Axis(0), bi)
                .assign(&images.index_axis(ndarray::Axis(0), i));
        }
        // training operates in the raw (centered) domain
        let reals_raw = reals.mapv(|v| v + v - F::one()).into_dyn();

        let ada = AdaConfig { p: self.ada_p, ..ada_cfg.clone() };

        // ---- discriminator step ----
        let z = self.sample_latents(batch, &mut rng);
        let fakes_raw = self.generate_detached(&z, core_rng::derive_seed(step_seed, "noise-d", 0));
        let loss_d = {
            let tape: Tape<F> = Tape::new();
            let binder = Binder::new(&tape, &self.discriminator.store);
            let real_var = tape.constant(reals_raw.clone());
            let fake_var = tape.constant(fakes_raw);
            let mut aug_rng = core_rng::fork(step_seed, "ada-d", 0);
            let real_aug = ada::apply(
                real_var,
                &ada::sample_batch(&ada, res, batch, &mut aug_rng),
                &ada,
                res,
            );
            let fake_aug = ada::apply(
                fake_var,
                &ada::sample_batch(&ada, res, batch, &mut aug_rng),
                &ada,
                res,
            );
            let score_real = self.discriminator.forward(&binder, real_aug);
            let score_fake = self.discriminator.forward(&binder, fake_aug);
            let loss = score_real
                .mul_scalar(-1.0)
                .softplus()
                .mean()
                .add(score_fake.softplus().mean());
            let loss_val = loss.scalar_f64();
            let mut grads = tape.backward(loss);
            let collected = binder.collect(&mut grads);
            self.opt_d.step(&mut self.discriminator.store, &collected);

            if cfg.ada_adaptive {
                // adjust p so that E[sign(D(real))] tracks the target
                let sv = score_real.value();
                let rt = sv.iter().map(|v| if *v > F::zero() { 1.0 } else { -1.0 }).sum::<f64>()
                    / batch as f64;
                let delta = 0.01 * (rt - cfg.ada_target).signum();
                self.ada_p = (self.ada_p + delta).clamp(0.0, 0.95);
            }
            loss_val
        };

        // ---- lazy R1 on reals ----
        let r1_penalty = if cfg.r1_interval > 0 && self.step % cfg.r1_interval as u64 == 0 {
            let gamma_eff = cfg.r1_weight * cfg.r1_interval as f64;
            let (penalty, grads) = self.r1_gradients(&reals_raw, gamma_eff, batch);
            self.opt_d.step(&mut self.discriminator.store, &grads);
            Some(penalty)
        } else {
            None
        };

        // ---- generator step ----
        let z = self.sample_latents(batch, &mut rng);
        let loss_g = {
            let tape: Tape<F> = Tape::new();
            let g_binder = Binder::new(&tape, &self.generator.store);
            let d_binder = Binder::frozen(&tape, &self.discriminator.store);
            let zv = tape.constant(z);
            let w = self.generator.mapping_forward(&g_binder, zv);
            let noise = self
                .generator
                .make_noise(batch, NoiseMode::Random(core_rng::derive_seed(step_seed, "noise-g", 0)));
            let raw = self.generator.synthesis_forward(&g_binder, w, &noise);
            let mut aug_rng = core_rng::fork(step_seed, "ada-g", 0);
            let aug = ada::apply(
                raw,
                &ada::sample_batch(&ada, res, batch, &mut aug_rng),
                &ada,
                res,
            );
            let score = self.discriminator.forward(&d_binder, aug);
            let loss = score.mul_scalar(-1.0).softplus().mean();
            let loss_val = loss.scalar_f64();
            let mut grads = tape.backward(loss);
            let collected = g_binder.collect(&mut grads);
            self.opt_g.step(&mut self.generator.store, &collected);
            loss_val
        };

        self.step += 1;
        if !loss_d.is_finite() || !loss_g.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite loss at step {} (G {loss_g}, D {loss_d})",
                self.step
            )));
        }
        Ok(StepStats { loss_g, loss_d, r1_penalty })
    }

    /// Gradient of the R1 penalty `gamma_eff/2 * mean_b |grad_x D|^2` with
    /// respect to the discriminator parameters, via a central-difference
    /// Hessian-vector product along the input gradient direction.
    pub fn r1_gradients(
        &self,
        reals_raw: &ArrayD<F>,
        gamma_eff: f64,
        batch: usize,
    ) -> (f64, Vec<(ParamRef, Arr<F>)>) {
        // pass 1: input gradient with frozen parameters
        let gx = {
            let tape: Tape<F> = Tape::new();
            let binder = Binder::frozen(&tape, &self.discriminator.store);
            let x = tape.leaf(reals_raw.clone());
            let score_sum = self.discriminator.forward(&binder, x).sum();
            let grads = tape.backward(score_sum);
            grads.get(x).expect("input gradient").clone()
        };
        let penalty =
            gx.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / batch as f64;

        let rms = (gx.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / gx.len() as f64)
            .sqrt()
            .max(1e-12);
        // cube root of machine epsilon balances central-difference truncation
        // against roundoff
        let eps = F::machine_epsilon().cbrt() / rms;

        let param_grads = |x_shifted: ArrayD<F>| -> Vec<(ParamRef, Arr<F>)> {
            let tape: Tape<F> = Tape::new();
            let binder = Binder::new(&tape, &self.discriminator.store);
            let x = tape.constant(x_shifted);
            let score_sum = self.discriminator.forward(&binder, x).sum();
            let mut grads = tape.backward(score_sum);
            binder.collect(&mut grads)
        };
        let e = F::from_f64(eps);
        let plus = param_grads({
            let mut x = reals_raw.clone();
            x.zip_mut_with(&gx, |xv, gv| *xv = *xv + e * *gv);
            x
        });
        let minus = param_grads({
            let mut x = reals_raw.clone();
            x.zip_mut_with(&gx, |xv, gv| *xv = *xv - e * *gv);
            x
        });

        // grad of gamma_eff/2 * P = gamma_eff/2 * (g+ - g-) / (B * eps)
        let scale = F::from_f64(gamma_eff / (2.0 * batch as f64 * eps));
        let grads = plus
            .into_iter()
            .zip(minus)
            .map(|((pref, gp), (pref2, gm))| {
                debug_assert_eq!(pref, pref2);
                let mut g = gp;
                g.zip_mut_with(&gm, |a, b| *a = (*a - *b) * scale);
                (pref, g)
            })
            .collect();
        (penalty, grads)
    }
}

/// Trains a generator on the images of `manifest`; writes checkpoints and a
/// CSV training log under `out_dir`, returning the final checkpoint path.
/// Aborts on non-finite losses, keeping the last good checkpoint.
pub fn train_generator<F: Real>(
    manifest_path: &Path,
    gen_config: GeneratorConfig,
    train_config: GanTrainConfig,
    steps: usize,
    out_dir: &Path,
    mut fd_eval: Option<&mut dyn FnMut(&Generator<F>, u64) -> f64>,
) -> Result<PathBuf> {
    if steps == 0 {
        return Err(Error::invalid("steps must be > 0"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images = load_images::<F>(manifest_path, gen_config.resolution)?;
    let mut trainer = GanTrainer::new(gen_config, train_config.clone())?;
    let ada = AdaConfig::with_p(train_config.ada_p);

    let log_path = out_dir.join("train_gan.csv");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "step,loss_g,loss_d,ada_p,r1,fd").map_err(|e| Error::io(&log_path, e))?;

    let ckpt_path = out_dir.join("gan.ckpt");
    trainer.checkpoint().save(&ckpt_path)?;
    let mut last_good: Option<u64> = Some(0);
    for _ in 0..steps {
        let stats = match trainer.train_step(&images, &ada) {
            Ok(s) => s,
            Err(e) => {
                return Err(Error::invalid(format!(
                    "{e}; last good checkpoint {} at step {:?}",
                    ckpt_path.display(),
                    last_good
                )));
            }
        };
        let fd = match (&mut fd_eval, trainer.step) {
            (Some(f), s)
                if trainer.train_config.checkpoint_every > 0
                    && s % trainer.train_config.checkpoint_every as u64 == 0 =>
            {
                Some(f(&trainer.generator, s))
            }
            _ => None,
        };
        writeln!(
            log,
            "{},{:.6},{:.6},{:.4},{},{}",
            trainer.step,
            stats.loss_g,
            stats.loss_d,
            trainer.ada_p,
            stats.r1_penalty.map_or(String::new(), |v| format!("{v:.6}")),
            fd.map_or(String::new(), |v| format!("{v:.6}")),
        )
        .map_err(|e| Error::io(&log_path, e))?;

        if trainer.train_config.checkpoint_every > 0
            && trainer.step % trainer.train_config.checkpoint_every as u64 == 0
        {
            trainer.checkpoint().save(&ckpt_path)?;
            last_good = Some(trainer.step);
        }
    }
    trainer.checkpoint().save(&ckpt_path)?;
    Ok(ckpt_path)
}
