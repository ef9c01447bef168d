//! Equalized-learning-rate layers: parameters initialize from a unit normal
//! and are rescaled at runtime by `lr_mul / sqrt(fan_in)`, following the
//! style-generator training recipe.

use crate::params::{Binder, ParamRef, ParamStore};
use crate::real::Real;
use crate::tape::Var;
use ndarray::Array4;
use rand_chacha::ChaCha12Rng;

pub const LRELU_SLOPE: f64 = 0.2;
/// Activation gain that keeps unit variance through leaky ReLU layers.
pub const ACT_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct EqLinear {
    pub weight: ParamRef,
    pub bias: ParamRef,
    pub scale: f64,
    pub lr_mul: f64,
}

impl EqLinear {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha12Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        lr_mul: f64,
        bias_init: f64,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            crate::params::init::normal(rng, &[in_dim, out_dim], 1.0 / lr_mul),
        );
        let bias = store.add(
            format!("{name}.bias"),
            crate::params::init::constant(&[out_dim], bias_init / lr_mul),
        );
        EqLinear { weight, bias, scale: lr_mul / (in_dim as f64).sqrt(), lr_mul }
    }

    /// x [B,in] -> [B,out]
    pub fn forward<'t, F: Real>(&self, b: &Binder<'t, '_, F>, x: Var<'t, F>) -> Var<'t, F> {
        let w = b.var(self.weight).mul_scalar(self.scale);
        let bias = b.var(self.bias).mul_scalar(self.lr_mul);
        x.matmul(w).bias_rows(bias)
    }
}

#[derive(Debug, Clone)]
pub struct EqConv {
    pub weight: ParamRef,
    pub bias: Option<ParamRef>,
    pub stride: usize,
    pub pad: usize,
    pub scale: f64,
}

impl EqConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha12Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            crate::params::init::normal(rng, &[out_ch, in_ch, kernel, kernel], 1.0),
        );
        let bias = with_bias
            .then(|| store.add(format!("{name}.bias"), crate::params::init::zeros(&[out_ch])));
        EqConv {
            weight,
            bias,
            stride,
            pad: kernel / 2,
            scale: 1.0 / ((in_ch * kernel * kernel) as f64).sqrt(),
        }
    }

    pub fn forward<'t, F: Real>(&self, b: &Binder<'t, '_, F>, x: Var<'t, F>) -> Var<'t, F> {
        let w = b.var(self.weight).mul_scalar(self.scale);
        let y = x.conv2d(w, self.stride, self.pad);
        match self.bias {
            Some(bias) => y.bias_nchw(b.var(bias)),
            None => y,
        }
    }
}

/// Style-modulated convolution: a learned affine maps the latent to
/// per-input-channel styles that scale the shared kernel; demodulation
/// renormalizes each output filter to unit expected magnitude.
#[derive(Debug, Clone)]
pub struct ModulatedConv {
    pub weight: ParamRef,
    pub bias: ParamRef,
    pub affine: EqLinear,
    /// Present only on layers that inject noise.
    pub noise_strength: Option<ParamRef>,
    pub demodulate: bool,
    pub scale: f64,
}

impl ModulatedConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha12Rng,
        name: &str,
        latent_dim: usize,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        demodulate: bool,
        with_noise: bool,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            crate::params::init::normal(rng, &[out_ch, in_ch, kernel, kernel], 1.0),
        );
        let bias = store.add(format!("{name}.bias"), crate::params::init::zeros(&[out_ch]));
        let affine = EqLinear::new(store, rng, &format!("{name}.affine"), latent_dim, in_ch, 1.0, 1.0);
        let noise_strength = with_noise
            .then(|| store.add(format!("{name}.noise_strength"), crate::params::init::zeros(&[])));
        ModulatedConv {
            weight,
            bias,
            affine,
            noise_strength,
            demodulate,
            scale: 1.0 / ((in_ch * kernel * kernel) as f64).sqrt(),
        }
    }

    /// x [B,Ci,H,W], latent [B,D] -> [B,Co,H,W]; noise is per-sample
    /// [B,1,H,W] when provided.
    pub fn forward<'t, F: Real>(
        &self,
        b: &Binder<'t, '_, F>,
        x: Var<'t, F>,
        latent: Var<'t, F>,
        noise: Option<&Array4<F>>,
    ) -> Var<'t, F> {
        let styles = self.affine.forward(b, latent);
        let w = b.var(self.weight).mul_scalar(self.scale);
        let mut kernels = w.modulate(styles);
        if self.demodulate {
            let d = kernels.square().sum_tail3().rsqrt_eps(1e-8);
            kernels = kernels.scale_bco(d);
        }
        let mut y = x.conv2d_per_sample(kernels);
        if let (Some(n), Some(strength)) = (noise, self.noise_strength) {
            y = y.add_scaled_noise(b.var(strength), n);
        }
        y.bias_nchw(b.var(self.bias))
    }
}

/// Leaky ReLU with the variance-preserving gain.
pub fn act<'t, F: Real>(x: Var<'t, F>) -> Var<'t, F> {
    x.leaky_relu(LRELU_SLOPE).mul_scalar(ACT_GAIN)
}
