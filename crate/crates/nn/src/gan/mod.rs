//! Style-based fingerprint generator and discriminator.

pub mod ada;
pub mod train;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::layers::{act, EqConv, EqLinear, ModulatedConv};
use crate::params::{Binder, ParamRef, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use ndarray::{Array1, Array2, Array4, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use synfp_core::minutiae::GrayscaleImage;
use synfp_core::rng as core_rng;

/// Input latent, sampled i.i.d. standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentZ(pub Array1<f64>);

/// Intermediate latent produced by the mapping network.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentW(pub Array1<f64>);

impl LatentZ {
    pub fn sample(dim: usize, rng: &mut impl Rng) -> Self {
        LatentZ(Array1::from_shape_fn(dim, |_| core_rng::normal(rng)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Output resolution; power of two. Production range is 32-512, toy
    /// configs down to 8 are accepted for gradient-check harnesses.
    pub resolution: usize,
    pub latent_dim: usize,
    pub mapping_layers: usize,
    /// Channel budget: channels(res) = min(channel_max, channel_base / res).
    pub channel_base: usize,
    pub channel_max: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            resolution: 64,
            latent_dim: 512,
            mapping_layers: 8,
            channel_base: 2048,
            channel_max: 256,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || !(8..=512).contains(&self.resolution) {
            return Err(Error::invalid(format!(
                "resolution must be a power of two in [8, 512], got {}",
                self.resolution
            )));
        }
        if self.latent_dim == 0 || self.mapping_layers == 0 {
            return Err(Error::invalid("latent_dim and mapping_layers must be positive"));
        }
        Ok(())
    }

    pub fn channels(&self, res: usize) -> usize {
        (self.channel_base / res).clamp(4, self.channel_max)
    }

    /// Synthesis resolutions from 4 up to the output resolution.
    pub fn resolutions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut r = 4;
        while r <= self.resolution {
            out.push(r);
            r *= 2;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// No noise injection: fully deterministic synthesis.
    None,
    /// Deterministic per-seed noise.
    Fixed(u64),
    /// Fresh noise drawn from the training stream.
    Random(u64),
}

struct SynthBlock {
    res: usize,
    conv0: Option<ModulatedConv>,
    conv1: ModulatedConv,
    to_rgb: ModulatedConv,
}

pub struct Generator<F: Real> {
    pub config: GeneratorConfig,
    pub store: ParamStore<F>,
    mapping: Vec<EqLinear>,
    blocks: Vec<SynthBlock>,
    const_input: ParamRef,
}

impl<F: Real> Generator<F> {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = core_rng::fork(config.seed, "generator-init", 0);

        let mut mapping = Vec::new();
        for i in 0..config.mapping_layers {
            mapping.push(EqLinear::new(
                &mut store,
                &mut rng,
                &format!("mapping.fc{i}"),
                config.latent_dim,
                config.latent_dim,
                0.01,
                0.0,
            ));
        }

        let const_input = store.add(
            "synthesis.const",
            crate::params::init::normal(&mut rng, &[config.channels(4), 4, 4], 1.0),
        );

        let mut blocks = Vec::new();
        for res in config.resolutions() {
            let ch_in = config.channels((res / 2).max(4));
            let ch = config.channels(res);
            let conv0 = (res > 4).then(|| {
                ModulatedConv::new(
                    &mut store,
                    &mut rng,
                    &format!("synthesis.b{res}.conv0"),
                    config.latent_dim,
                    ch_in,
                    ch,
                    3,
                    true,
                    true,
                )
            });
            let conv1 = ModulatedConv::new(
                &mut store,
                &mut rng,
                &format!("synthesis.b{res}.conv1"),
                config.latent_dim,
                ch,
                ch,
                3,
                true,
                true,
            );
            let to_rgb = ModulatedConv::new(
                &mut store,
                &mut rng,
                &format!("synthesis.b{res}.to_rgb"),
                config.latent_dim,
                ch,
                1,
                1,
                false,
                false,
            );
            blocks.push(SynthBlock { res, conv0, conv1, to_rgb });
        }

        Ok(Generator { config, store, mapping, blocks, const_input })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let config: GeneratorConfig = serde_json::from_value(
            ckpt.config
                .get("generator")
                .cloned()
                .unwrap_or_else(|| ckpt.config.clone()),
        )
        .map_err(|e| Error::invalid(format!("generator config in checkpoint: {e}")))?;
        let mut g = Generator::new(config)?;
        ckpt.assign_into(prefix, &mut g.store)?;
        Ok(g)
    }

    /// Names of the style-affine weight parameters feeding the synthesis
    /// convolutions, in layer order (used by the attribute editor).
    pub fn style_affine_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for b in &self.blocks {
            if b.conv0.is_some() {
                out.push(format!("synthesis.b{}.conv0.affine.weight", b.res));
            }
            out.push(format!("synthesis.b{}.conv1.affine.weight", b.res));
        }
        out
    }

    /// Mapping network on a batch of latents: [B, D] -> [B, D].
    pub fn mapping_forward<'t>(&self, binder: &Binder<'t, '_, F>, z: Var<'t, F>) -> Var<'t, F> {
        let mut x = z.hypersphere_norm();
        for layer in &self.mapping {
            x = act(layer.forward(binder, x));
        }
        x
    }

    /// Synthesis network: latents [B, D] -> raw images [B,1,R,R] centered
    /// around zero (roughly [-1, 1]).
    pub fn synthesis_forward<'t>(
        &self,
        binder: &Binder<'t, '_, F>,
        w: Var<'t, F>,
        noise: &NoisePack<F>,
    ) -> Var<'t, F> {
        let batch = w.shape()[0];
        let mut x = binder.var(self.const_input).broadcast_batch(batch);
        let mut rgb: Option<Var<'t, F>> = None;
        let mut noise_idx = 0;
        for block in &self.blocks {
            if let Some(conv0) = &block.conv0 {
                x = x.upsample2x_bilinear();
                x = act(conv0.forward(binder, x, w, noise.layer(noise_idx)));
                noise_idx += 1;
            }
            x = act(block.conv1.forward(binder, x, w, noise.layer(noise_idx)));
            noise_idx += 1;
            let y = block.to_rgb.forward(binder, x, w, None);
            rgb = Some(match rgb {
                Some(prev) => prev.upsample2x_bilinear().add(y),
                None => y,
            });
        }
        rgb.expect("at least one synthesis block")
    }

    /// Number of noise-consuming conv layers.
    pub fn noise_layer_count(&self) -> usize {
        self.blocks.iter().map(|b| 1 + usize::from(b.conv0.is_some())).sum()
    }

    /// Builds per-layer noise for a batch under the given mode.
    pub fn make_noise(&self, batch: usize, mode: NoiseMode) -> NoisePack<F> {
        match mode {
            NoiseMode::None => NoisePack { layers: Vec::new() },
            NoiseMode::Fixed(seed) | NoiseMode::Random(seed) => {
                let mut layers = Vec::new();
                let mut idx = 0;
                for block in &self.blocks {
                    let n_layers = 1 + usize::from(block.conv0.is_some());
                    for _ in 0..n_layers {
                        let mut rng = core_rng::fork(seed, "synthesis-noise", idx as u64);
                        layers.push(Some(Array4::from_shape_fn(
                            (batch, 1, block.res, block.res),
                            |_| F::from_f64(core_rng::normal(&mut rng)),
                        )));
                        idx += 1;
                    }
                }
                NoisePack { layers }
            }
        }
    }

    /// Maps an input latent to the intermediate latent space.
    pub fn map_latent(&self, z: &LatentZ) -> Result<LatentW> {
        if z.0.len() != self.config.latent_dim {
            return Err(Error::shape(format!(
                "latent has dimension {}, expected {}",
                z.0.len(),
                self.config.latent_dim
            )));
        }
        if z.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent contains non-finite entries"));
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let zv = tape.constant(
            Array2::from_shape_fn((1, z.0.len()), |(_, j)| F::from_f64(z.0[j])).into_dyn(),
        );
        let w = self.mapping_forward(&binder, zv);
        let wv = w.value();
        Ok(LatentW(Array1::from_shape_fn(self.config.latent_dim, |j| {
            wv[IxDyn(&[0, j])].as_f64()
        })))
    }

    /// Synthesizes one image, clamped to [0, 1].
    pub fn synthesize(&self, w: &LatentW, noise_mode: NoiseMode) -> Result<GrayscaleImage> {
        if w.0.len() != self.config.latent_dim {
            return Err(Error::shape(format!(
                "latent has dimension {}, expected {}",
                w.0.len(),
                self.config.latent_dim
            )));
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let wv = tape.constant(
            Array2::from_shape_fn((1, w.0.len()), |(_, j)| F::from_f64(w.0[j])).into_dyn(),
        );
        let noise = self.make_noise(1, noise_mode);
        let raw = self.synthesis_forward(&binder, wv, &noise);
        let value = raw.value();
        let r = self.config.resolution;
        let mut img = ndarray::Array2::<f64>::zeros((r, r));
        for y in 0..r {
            for x in 0..r {
                img[[y, x]] = (value[IxDyn(&[0, 0, y, x])].as_f64() * 0.5 + 0.5).clamp(0.0, 1.0);
            }
        }
        Ok(GrayscaleImage { data: img })
    }
}

pub struct NoisePack<F: Real> {
    layers: Vec<Option<Array4<F>>>,
}

impl<F: Real> NoisePack<F> {
    pub fn layer(&self, idx: usize) -> Option<&Array4<F>> {
        self.layers.get(idx).and_then(|l| l.as_ref())
    }
}

struct DBlock {
    conv0: EqConv,
    conv1: EqConv,
    skip: EqConv,
}

pub struct Discriminator<F: Real> {
    pub config: GeneratorConfig,
    pub store: ParamStore<F>,
    from_rgb: EqConv,
    blocks: Vec<DBlock>,
    final_conv: EqConv,
    fc0: EqLinear,
    fc1: EqLinear,
}

impl<F: Real> Discriminator<F> {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = core_rng::fork(config.seed, "discriminator-init", 0);
        let from_rgb = EqConv::new(
            &mut store,
            &mut rng,
            "from_rgb",
            1,
            config.channels(config.resolution),
            1,
            1,
            true,
        );
        let mut blocks = Vec::new();
        let mut res = config.resolution;
        while res > 4 {
            let ch = config.channels(res);
            let ch_next = config.channels(res / 2);
            blocks.push(DBlock {
                conv0: EqConv::new(&mut store, &mut rng, &format!("b{res}.conv0"), ch, ch, 3, 1, true),
                conv1: EqConv::new(
                    &mut store,
                    &mut rng,
                    &format!("b{res}.conv1"),
                    ch,
                    ch_next,
                    3,
                    1,
                    true,
                ),
                skip: EqConv::new(&mut store, &mut rng, &format!("b{res}.skip"), ch, ch_next, 1, 1, false),
            });
            res /= 2;
        }
        let ch4 = config.channels(4);
        let final_conv = EqConv::new(&mut store, &mut rng, "final_conv", ch4, ch4, 3, 1, true);
        let fc0 = EqLinear::new(&mut store, &mut rng, "fc0", ch4 * 16, ch4, 1.0, 0.0);
        let fc1 = EqLinear::new(&mut store, &mut rng, "fc1", ch4, 1, 1.0, 0.0);
        Ok(Discriminator { config, store, from_rgb, blocks, final_conv, fc0, fc1 })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let config: GeneratorConfig = serde_json::from_value(
            ckpt.config
                .get("generator")
                .cloned()
                .unwrap_or_else(|| ckpt.config.clone()),
        )
        .map_err(|e| Error::invalid(format!("generator config in checkpoint: {e}")))?;
        let mut d = Discriminator::new(config)?;
        ckpt.assign_into(prefix, &mut d.store)?;
        Ok(d)
    }

    /// Per-sample logits: images [B,1,R,R] -> [B,1].
    pub fn forward<'t>(&self, binder: &Binder<'t, '_, F>, images: Var<'t, F>) -> Var<'t, F> {
        let shape = images.shape();
        assert_eq!(
            &shape[1..],
            &[1, self.config.resolution, self.config.resolution],
            "discriminator input resolution"
        );
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        let mut x = act(self.from_rgb.forward(binder, images));
        for block in &self.blocks {
            let t = act(block.conv0.forward(binder, x));
            let t = act(block.conv1.forward(binder, t)).avg_pool2();
            let s = block.skip.forward(binder, x.avg_pool2());
            x = t.add(s).mul_scalar(inv_sqrt2);
        }
        let x = act(self.final_conv.forward(binder, x));
        let x = act(self.fc0.forward(binder, x.flatten_batch()));
        self.fc1.forward(binder, x)
    }

    /// Scalar logit for a single image.
    pub fn discriminate(&self, image: &GrayscaleImage) -> Result<f64> {
        let r = self.config.resolution;
        if image.data.dim() != (r, r) {
            return Err(Error::shape(format!(
                "image is {:?}, discriminator expects {r}x{r}",
                image.data.dim()
            )));
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let x = tape.constant(
            Array4::from_shape_fn((1, 1, r, r), |(_, _, y, xx)| {
                F::from_f64(image.data[[y, xx]])
            })
            .into_dyn(),
        );
        let score = self.forward(&binder, x);
        Ok(score.value()[IxDyn(&[0, 0])].as_f64())
    }
}
