//! Minutiae-to-latent encoder and the composed reconstruction pipeline.
//!
//! The encoder is a bottleneck-residual CNN (stem + 3/4/6/3 blocks of three
//! convolutions each + fully-connected head = 50 weight layers) mapping a
//! three-channel minutiae map to the generator's latent space.

pub mod train;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::gan::{Generator, LatentW, NoiseMode};
use crate::idnet::IdentityNet;
use crate::layers::{act, EqConv, EqLinear};
use crate::params::{Binder, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use ndarray::{Array1, Array4, IxDyn};
use serde::{Deserialize, Serialize};
use synfp_core::minutiae::{GrayscaleImage, MinutiaeMap, MinutiaeTemplate};
use synfp_core::rng as core_rng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    /// Stem width; stage widths are 2x, 4x, 8x, 16x this.
    pub width: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { resolution: 64, latent_dim: 512, width: 16, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution % 8 != 0 || self.resolution < 16 {
            return Err(Error::invalid(format!(
                "encoder resolution must be a multiple of 8 and >= 16, got {}",
                self.resolution
            )));
        }
        Ok(())
    }
}

const STAGE_BLOCKS: [usize; 4] = [3, 4, 6, 3];

struct Bottleneck {
    reduce: EqConv,
    conv: EqConv,
    expand: EqConv,
    project: Option<EqConv>,
}

pub struct Encoder<F: Real> {
    pub config: EncoderConfig,
    pub store: ParamStore<F>,
    stem: EqConv,
    stages: Vec<Vec<Bottleneck>>,
    fc: EqLinear,
}

impl<F: Real> Encoder<F> {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = core_rng::fork(config.seed, "encoder-init", 0);
        let w = config.width;
        let stem = EqConv::new(&mut store, &mut rng, "stem", 3, w, 3, 1, true);

        let mut stages = Vec::new();
        let mut ch_in = w;
        for (si, &n_blocks) in STAGE_BLOCKS.iter().enumerate() {
            let ch_out = w * (2 << si); // 2w, 4w, 8w, 16w
            let mid = (ch_out / 4).max(4);
            let mut blocks = Vec::new();
            for bi in 0..n_blocks {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                let name = format!("s{si}.b{bi}");
                let needs_proj = stride != 1 || ch_in != ch_out;
                blocks.push(Bottleneck {
                    reduce: EqConv::new(&mut store, &mut rng, &format!("{name}.reduce"), ch_in, mid, 1, 1, true),
                    conv: EqConv::new(&mut store, &mut rng, &format!("{name}.conv"), mid, mid, 3, stride, true),
                    expand: EqConv::new(&mut store, &mut rng, &format!("{name}.expand"), mid, ch_out, 1, 1, true),
                    project: needs_proj.then(|| {
                        EqConv::new(&mut store, &mut rng, &format!("{name}.project"), ch_in, ch_out, 1, stride, false)
                    }),
                });
                ch_in = ch_out;
            }
            stages.push(blocks);
        }
        let fc = EqLinear::new(&mut store, &mut rng, "fc", ch_in, config.latent_dim, 1.0, 0.0);
        Ok(Encoder { config, store, stem, stages, fc })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: EncoderConfig = serde_json::from_value(
            ckpt.config
                .get("encoder")
                .cloned()
                .unwrap_or_else(|| ckpt.config.clone()),
        )
        .map_err(|e| Error::invalid(format!("encoder config: {e}")))?;
        let mut e = Encoder::new(config)?;
        ckpt.assign_into("encoder", &mut e.store)?;
        Ok(e)
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(
            "encoder",
            F::DTYPE,
            serde_json::json!({"encoder": self.config}),
        );
        ck.step = step;
        ck.insert_store("encoder", &self.store);
        ck
    }

    /// Maps [B,3,R,R] minutiae maps to [B,latent_dim] latents.
    pub fn forward<'t>(&self, binder: &Binder<'t, '_, F>, maps: Var<'t, F>) -> Var<'t, F> {
        let shape = maps.shape();
        assert_eq!(
            &shape[1..],
            &[3, self.config.resolution, self.config.resolution],
            "encoder input shape"
        );
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        let mut x = act(self.stem.forward(binder, maps));
        for stage in &self.stages {
            for block in stage {
                let t = act(block.reduce.forward(binder, x));
                let t = act(block.conv.forward(binder, t));
                let t = block.expand.forward(binder, t);
                let s = match &block.project {
                    Some(p) => p.forward(binder, x),
                    None => x,
                };
                x = act(t.add(s).mul_scalar(inv_sqrt2));
            }
        }
        self.fc.forward(binder, x.global_avg_pool())
    }

    /// Encodes one minutiae map; deterministic, finite output.
    pub fn encode(&self, map: &MinutiaeMap) -> Result<LatentW> {
        let r = self.config.resolution;
        if map.height() != r || map.width() != r {
            return Err(Error::shape(format!(
                "map is {}x{}, encoder expects {r}x{r}",
                map.width(),
                map.height()
            )));
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let x = tape.constant(
            Array4::from_shape_fn((1, 3, r, r), |(_, c, y, xx)| {
                F::from_f64(map.data[[y, xx, c]])
            })
            .into_dyn(),
        );
        let w = self.forward(&binder, x);
        let wv = w.value();
        let out = Array1::from_shape_fn(self.config.latent_dim, |j| wv[IxDyn(&[0, j])].as_f64());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("encoder produced non-finite latent"));
        }
        Ok(LatentW(out))
    }
}

/// Frozen generator + trained encoder: the feed-forward reconstruction path.
pub struct Reconstructor<F: Real> {
    pub generator: Generator<F>,
    pub encoder: Encoder<F>,
    pub line_len: f64,
    pub sigma: f64,
}

impl<F: Real> Reconstructor<F> {
    /// `synthesize(encode(render_minutiae_map(template)))` with no noise.
    /// The template is rescaled to the encoder resolution first.
    pub fn reconstruct(&self, template: &MinutiaeTemplate) -> Result<GrayscaleImage> {
        let map = self.render_map(template)?;
        let w = self.encoder.encode(&map)?;
        Ok(self.generator.synthesize(&w, NoiseMode::None)?)
    }

    pub fn render_map(&self, template: &MinutiaeTemplate) -> Result<MinutiaeMap> {
        let r = self.encoder.config.resolution as u32;
        let scaled = scale_template(template, r, r);
        // stroke geometry follows the resolution change
        let scale = r as f64 / template.width.max(1) as f64;
        Ok(synfp_core::minutiae::render_minutiae_map(
            &scaled,
            (self.line_len * scale).max(1.0),
            self.sigma * scale,
        )?)
    }
}

/// Rescales template coordinates to a new canvas (aspect-preserving inputs
/// assumed; directions are kept).
pub fn scale_template(t: &MinutiaeTemplate, new_w: u32, new_h: u32) -> MinutiaeTemplate {
    let sx = new_w as f64 / t.width.max(1) as f64;
    let sy = new_h as f64 / t.height.max(1) as f64;
    MinutiaeTemplate {
        width: new_w,
        height: new_h,
        identity_id: t.identity_id.clone(),
        impression_id: t.impression_id.clone(),
        minutiae: t
            .minutiae
            .iter()
            .map(|m| {
                synfp_core::Minutia::new(
                    (m.x * sx).min(new_w as f64 - 1e-6),
                    (m.y * sy).min(new_h as f64 - 1e-6),
                    m.theta_deg,
                    m.kind,
                )
            })
            .collect(),
    }
}

/// Reconstruction loss `(total, l2, lid)` of a target image against the
/// generator output for a minutiae map. `l2` is the mean squared per-pixel
/// error; `lid` the identity-network feature distance; `total = l2 + lid`.
pub fn recon_loss<F: Real>(
    image: &GrayscaleImage,
    map: &MinutiaeMap,
    encoder: &Encoder<F>,
    generator: &Generator<F>,
    idnet: &IdentityNet<F>,
) -> Result<(f64, f64, f64)> {
    let r = encoder.config.resolution;
    if image.data.dim() != (r, r) {
        return Err(Error::shape(format!(
            "target image is {:?}, expected {r}x{r}",
            image.data.dim()
        )));
    }
    let tape: Tape<F> = Tape::new();
    let enc_binder = Binder::frozen(&tape, &encoder.store);
    let gen_binder = Binder::frozen(&tape, &generator.store);
    let id_binder = Binder::frozen(&tape, &idnet.store);

    let map_var = tape.constant(
        Array4::from_shape_fn((1, 3, r, r), |(_, c, y, x)| F::from_f64(map.data[[y, x, c]]))
            .into_dyn(),
    );
    let target = tape.constant(
        Array4::from_shape_fn((1, 1, r, r), |(_, _, y, x)| F::from_f64(image.data[[y, x]]))
            .into_dyn(),
    );
    let w = encoder.forward(&enc_binder, map_var);
    let noise = generator.make_noise(1, NoiseMode::None);
    let raw = generator.synthesis_forward(&gen_binder, w, &noise);
    let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);

    let l2 = recon01.sub(target).square().mean();
    let lid = idnet.identity_loss_var(&id_binder, recon01, target);
    let total = l2.add(lid);
    Ok((total.scalar_f64(), l2.scalar_f64(), lid.scalar_f64()))
}
