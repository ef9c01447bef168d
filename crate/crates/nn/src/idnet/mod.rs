//! Minutiae-oriented identity network: a small residual-free convolutional
//! encoder with four heads (minutiae detection, sub-cell offsets,
//! orientations, segmentation) at stride 8, plus a pooled embedding used for
//! Fréchet-distance evaluation.

pub mod train;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::layers::{act, EqConv};
use crate::params::{Binder, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use ndarray::{Array1, Array2, Array3, Array4, IxDyn};
use serde::{Deserialize, Serialize};
use synfp_core::minutiae::GrayscaleImage;
use synfp_core::rng as core_rng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IdentityNetConfig {
    pub resolution: usize,
    pub base_channels: usize,
    pub seed: u64,
}

impl Default for IdentityNetConfig {
    fn default() -> Self {
        IdentityNetConfig { resolution: 64, base_channels: 16, seed: 0 }
    }
}

impl IdentityNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution % 8 != 0 || self.resolution < 16 {
            return Err(Error::invalid(format!(
                "identity net resolution must be a multiple of 8 and >= 16, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    /// Pooled embedding width (trunk channels at stride 8).
    pub fn feature_dim(&self) -> usize {
        self.base_channels * 8
    }

    pub fn grid(&self) -> usize {
        self.resolution / 8
    }
}

/// Per-image features: all grids are `(H/8, W/8)`.
#[derive(Debug, Clone)]
pub struct IdentityFeatures {
    /// Minutia presence probability per cell, in [0, 1].
    pub detection_scores: Array2<f64>,
    /// Normalized sub-cell offsets per cell, 2 channels in [0, 1].
    pub xy_offsets: Array3<f64>,
    /// (cos 2theta, sin 2theta) encoding; vector norm < 1 + 1e-6.
    pub orientations: Array3<f64>,
    /// Foreground probability per cell, in [0, 1].
    pub segmentation: Array2<f64>,
    /// Pooled trunk embedding for distribution-level evaluation.
    pub embedding: Array1<f64>,
}

pub struct IdentityNet<F: Real> {
    pub config: IdentityNetConfig,
    pub store: ParamStore<F>,
    stem: EqConv,
    stages: Vec<(EqConv, EqConv)>,
    head_det: EqConv,
    head_xy: EqConv,
    head_orient: EqConv,
    head_seg: EqConv,
}

pub struct HeadLogits<'t, F: Real> {
    pub detection: Var<'t, F>,
    pub xy: Var<'t, F>,
    pub orientation: Var<'t, F>,
    pub segmentation: Var<'t, F>,
    pub trunk: Var<'t, F>,
}

impl<F: Real> IdentityNet<F> {
    pub fn new(config: IdentityNetConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = core_rng::fork(config.seed, "idnet-init", 0);
        let c = config.base_channels;
        let stem = EqConv::new(&mut store, &mut rng, "stem", 1, c, 3, 1, true);
        let mut stages = Vec::new();
        for (i, (cin, cout)) in [(c, 2 * c), (2 * c, 4 * c), (4 * c, 8 * c)].iter().enumerate() {
            stages.push((
                EqConv::new(&mut store, &mut rng, &format!("s{i}.conv0"), *cin, *cout, 3, 1, true),
                EqConv::new(&mut store, &mut rng, &format!("s{i}.conv1"), *cout, *cout, 3, 1, true),
            ));
        }
        let trunk_ch = 8 * c;
        let head_det = EqConv::new(&mut store, &mut rng, "head.det", trunk_ch, 1, 1, 1, true);
        let head_xy = EqConv::new(&mut store, &mut rng, "head.xy", trunk_ch, 2, 1, 1, true);
        let head_orient = EqConv::new(&mut store, &mut rng, "head.orient", trunk_ch, 2, 1, 1, true);
        let head_seg = EqConv::new(&mut store, &mut rng, "head.seg", trunk_ch, 1, 1, 1, true);
        Ok(IdentityNet { config, store, stem, stages, head_det, head_xy, head_orient, head_seg })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: IdentityNetConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::invalid(format!("identity net config: {e}")))?;
        let mut net = IdentityNet::new(config)?;
        ckpt.assign_into("idnet", &mut net.store)?;
        Ok(net)
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(
            "identity",
            F::DTYPE,
            serde_json::to_value(&self.config).expect("config serializes"),
        );
        ck.step = step;
        ck.insert_store("idnet", &self.store);
        ck
    }

    /// Raw head outputs on a batch [B,1,R,R].
    pub fn forward<'t>(&self, binder: &Binder<'t, '_, F>, images: Var<'t, F>) -> HeadLogits<'t, F> {
        let shape = images.shape();
        assert_eq!(
            &shape[1..],
            &[1, self.config.resolution, self.config.resolution],
            "identity net input resolution"
        );
        let mut x = act(self.stem.forward(binder, images));
        for (conv0, conv1) in &self.stages {
            x = act(conv0.forward(binder, x));
            x = act(conv1.forward(binder, x));
            x = x.avg_pool2();
        }
        HeadLogits {
            detection: self.head_det.forward(binder, x),
            xy: self.head_xy.forward(binder, x),
            orientation: self.head_orient.forward(binder, x),
            segmentation: self.head_seg.forward(binder, x),
            trunk: x,
        }
    }

    /// Activated heads: detection/xy/segmentation sigmoids, orientation
    /// squashed to the open unit disk.
    pub fn activated<'t>(&self, logits: &HeadLogits<'t, F>) -> ActivatedHeads<'t, F> {
        ActivatedHeads {
            detection: logits.detection.sigmoid(),
            xy: logits.xy.sigmoid(),
            orientation: logits.orientation.squash2(),
            segmentation: logits.segmentation.sigmoid(),
            embedding: logits.trunk.global_avg_pool(),
        }
    }

    /// Deterministic forward pass on one image.
    pub fn identity_forward(&self, image: &GrayscaleImage) -> Result<IdentityFeatures> {
        let r = self.config.resolution;
        if image.data.dim() != (r, r) {
            return Err(Error::shape(format!(
                "image is {:?}, identity net expects {r}x{r}",
                image.data.dim()
            )));
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let x = tape.constant(
            Array4::from_shape_fn((1, 1, r, r), |(_, _, y, xx)| F::from_f64(image.data[[y, xx]]))
                .into_dyn(),
        );
        let heads = self.activated(&self.forward(&binder, x));
        let g = self.config.grid();
        let det = heads.detection.value();
        let xy = heads.xy.value();
        let orient = heads.orientation.value();
        let seg = heads.segmentation.value();
        let emb = heads.embedding.value();
        let d = self.config.feature_dim();
        Ok(IdentityFeatures {
            detection_scores: Array2::from_shape_fn((g, g), |(y, x)| {
                det[IxDyn(&[0, 0, y, x])].as_f64()
            }),
            xy_offsets: Array3::from_shape_fn((g, g, 2), |(y, x, c)| {
                xy[IxDyn(&[0, c, y, x])].as_f64()
            }),
            orientations: Array3::from_shape_fn((g, g, 2), |(y, x, c)| {
                orient[IxDyn(&[0, c, y, x])].as_f64()
            }),
            segmentation: Array2::from_shape_fn((g, g), |(y, x)| {
                seg[IxDyn(&[0, 0, y, x])].as_f64()
            }),
            embedding: Array1::from_shape_fn(d, |j| emb[IxDyn(&[0, j])].as_f64()),
        })
    }

    /// Perceptual identity distance: sum over heads of mean absolute feature
    /// difference. Non-negative, symmetric, zero on identical features.
    pub fn identity_loss(&self, a: &GrayscaleImage, b: &GrayscaleImage) -> Result<f64> {
        let r = self.config.resolution;
        for img in [a, b] {
            if img.data.dim() != (r, r) {
                return Err(Error::shape(format!(
                    "image is {:?}, identity net expects {r}x{r}",
                    img.data.dim()
                )));
            }
        }
        let tape: Tape<F> = Tape::new();
        let binder = Binder::frozen(&tape, &self.store);
        let to_var = |img: &GrayscaleImage| {
            tape.constant(
                Array4::from_shape_fn((1, 1, r, r), |(_, _, y, xx)| {
                    F::from_f64(img.data[[y, xx]])
                })
                .into_dyn(),
            )
        };
        let loss = self.identity_loss_var(&binder, to_var(a), to_var(b));
        Ok(loss.scalar_f64())
    }

    /// Tape-level identity loss between two image batches.
    pub fn identity_loss_var<'t>(
        &self,
        binder: &Binder<'t, '_, F>,
        a: Var<'t, F>,
        b: Var<'t, F>,
    ) -> Var<'t, F> {
        let ha = self.activated(&self.forward(binder, a));
        let hb = self.activated(&self.forward(binder, b));
        let term = |x: Var<'t, F>, y: Var<'t, F>| x.sub(y).abs().mean();
        term(ha.detection, hb.detection)
            .add(term(ha.xy, hb.xy))
            .add(term(ha.orientation, hb.orientation))
            .add(term(ha.segmentation, hb.segmentation))
    }

    /// Pooled embeddings for a set of images, as an f64 feature matrix.
    pub fn embeddings(&self, images: &[GrayscaleImage]) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((images.len(), self.config.feature_dim()));
        for (i, img) in images.iter().enumerate() {
            let f = self.identity_forward(img)?;
            out.row_mut(i).assign(&f.embedding);
        }
        Ok(out)
    }
}

pub struct ActivatedHeads<'t, F: Real> {
    pub detection: Var<'t, F>,
    pub xy: Var<'t, F>,
    pub orientation: Var<'t, F>,
    pub segmentation: Var<'t, F>,
    pub embedding: Var<'t, F>,
}
