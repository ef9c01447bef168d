//! Model-level analytic-vs-finite-difference gradient checks in double
//! precision on toy configurations.

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use synfp_nn::gan::{Discriminator, Generator, GeneratorConfig, NoiseMode};
use synfp_nn::idnet::{IdentityNet, IdentityNetConfig};
use synfp_nn::params::Binder;
use synfp_nn::recon::{Encoder, EncoderConfig};
use synfp_nn::tape::Tape;

fn toy_gan_config(resolution: usize) -> GeneratorConfig {
    GeneratorConfig {
        resolution,
        latent_dim: 16,
        mapping_layers: 2,
        channel_base: 64,
        channel_max: 16,
        seed: 11,
    }
}

fn random_image_arr(r: usize, seed: u64) -> ArrayD<f64> {
    let mut rng = synfp_core::rng::fork(seed, "model-gc", 0);
    Array4::from_shape_fn((1, 1, r, r), |_| synfp_core::rng::normal(&mut rng) * 0.3).into_dyn()
}

/// Relative error of analytic vs central-difference gradients over a
/// deterministic subset of input coordinates.
fn relative_error(
    analytic: &ArrayD<f64>,
    x0: &ArrayD<f64>,
    eval: impl Fn(&ArrayD<f64>) -> f64,
    n_probe: usize,
) -> f64 {
    let h = 1e-5;
    let len = x0.len();
    let stride = (len / n_probe).max(1);
    let mut max_rel = 0.0f64;
    for k in 0..n_probe.min(len) {
        let idx = (k * stride) % len;
        let mut plus = x0.clone();
        let mut minus = x0.clone();
        plus.as_slice_mut().unwrap()[idx] += h;
        minus.as_slice_mut().unwrap()[idx] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let a = analytic.as_slice().unwrap()[idx];
        let denom = a.abs().max(numeric.abs()).max(1e-5);
        max_rel = max_rel.max((a - numeric).abs() / denom);
    }
    max_rel
}

#[test]
fn discriminator_score_gradient_matches_finite_differences() {
    // 8x8 toy config, double precision, tolerance 1e-3
    let d: Discriminator<f64> = Discriminator::new(toy_gan_config(8)).unwrap();
    let x0 = random_image_arr(8, 1);

    let eval = |x: &ArrayD<f64>| -> f64 {
        let tape: Tape<f64> = Tape::new();
        let binder = Binder::frozen(&tape, &d.store);
        let xv = tape.constant(x.clone());
        d.forward(&binder, xv).sum().scalar_f64()
    };

    let tape: Tape<f64> = Tape::new();
    let binder = Binder::frozen(&tape, &d.store);
    let x = tape.leaf(x0.clone());
    let score = d.forward(&binder, x).sum();
    let grads = tape.backward(score);
    let analytic = grads.get(x).unwrap().clone();

    let rel = relative_error(&analytic, &x0, eval, 64);
    assert!(rel <= 1e-3, "max relative error {rel:.3e}");
}

#[test]
fn identity_detection_head_gradient_matches_finite_differences() {
    // 16x16 toy config
    let net: IdentityNet<f64> =
        IdentityNet::new(IdentityNetConfig { resolution: 16, base_channels: 4, seed: 2 }).unwrap();
    let x0 = random_image_arr(16, 3);

    let eval = |x: &ArrayD<f64>| -> f64 {
        let tape: Tape<f64> = Tape::new();
        let binder = Binder::frozen(&tape, &net.store);
        let xv = tape.constant(x.clone());
        let heads = net.forward(&binder, xv);
        heads.detection.sigmoid().sum().scalar_f64()
    };

    let tape: Tape<f64> = Tape::new();
    let binder = Binder::frozen(&tape, &net.store);
    let x = tape.leaf(x0.clone());
    let heads = net.forward(&binder, x);
    let loss = heads.detection.sigmoid().sum();
    let grads = tape.backward(loss);
    let analytic = grads.get(x).unwrap().clone();

    let rel = relative_error(&analytic, &x0, eval, 64);
    assert!(rel <= 1e-3, "max relative error {rel:.3e}");
}

#[test]
fn recon_loss_gradient_wrt_latent_matches_finite_differences() {
    // toy 16x16 stack: frozen generator + identity net; differentiate the
    // total reconstruction loss with respect to the encoder output latent
    let gen: Generator<f64> = Generator::new(toy_gan_config(16)).unwrap();
    let idnet: IdentityNet<f64> =
        IdentityNet::new(IdentityNetConfig { resolution: 16, base_channels: 4, seed: 4 }).unwrap();
    let mut rng = synfp_core::rng::fork(9, "recon-gc", 0);
    let target = Array4::from_shape_fn((1, 1, 16, 16), |_| {
        0.5 + 0.3 * synfp_core::rng::normal(&mut rng).clamp(-1.0, 1.0)
    })
    .into_dyn();
    let w0 = Array2::from_shape_fn((1, 16), |_| synfp_core::rng::normal(&mut rng)).into_dyn();

    let eval = |w: &ArrayD<f64>| -> f64 {
        let tape: Tape<f64> = Tape::new();
        let g_binder = Binder::frozen(&tape, &gen.store);
        let id_binder = Binder::frozen(&tape, &idnet.store);
        let wv = tape.constant(w.clone());
        let noise = gen.make_noise(1, NoiseMode::None);
        let raw = gen.synthesis_forward(&g_binder, wv, &noise);
        let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);
        let tv = tape.constant(target.clone());
        let l2 = recon01.sub(tv).square().mean();
        let lid = idnet.identity_loss_var(&id_binder, recon01, tv);
        l2.add(lid).scalar_f64()
    };

    let tape: Tape<f64> = Tape::new();
    let g_binder = Binder::frozen(&tape, &gen.store);
    let id_binder = Binder::frozen(&tape, &idnet.store);
    let w = tape.leaf(w0.clone());
    let noise = gen.make_noise(1, NoiseMode::None);
    let raw = gen.synthesis_forward(&g_binder, w, &noise);
    let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);
    let tv = tape.constant(target.clone());
    let l2 = recon01.sub(tv).square().mean();
    let lid = idnet.identity_loss_var(&id_binder, recon01, tv);
    let total = l2.add(lid);
    // loss decomposition: total = l2 + lid to rounding
    let (t, a, b) = (total.scalar_f64(), l2.scalar_f64(), lid.scalar_f64());
    assert!((t - (a + b)).abs() <= 1e-12 * t.abs().max(1.0));
    assert!(t >= 0.0 && a >= 0.0 && b >= 0.0);

    let grads = tape.backward(total);
    let analytic = grads.get(w).unwrap().clone();
    let rel = relative_error(&analytic, &w0, eval, 16);
    assert!(rel <= 1e-3, "max relative error {rel:.3e}");
}

#[test]
fn recon_loss_zero_when_generator_reproduces_target() {
    // if G(E(map)) == x exactly the loss vanishes: feed the generator output
    // itself as the target
    let gen: Generator<f64> = Generator::new(toy_gan_config(16)).unwrap();
    let idnet: IdentityNet<f64> =
        IdentityNet::new(IdentityNetConfig { resolution: 16, base_channels: 4, seed: 4 }).unwrap();
    let mut rng = synfp_core::rng::fork(10, "recon-gc", 0);
    let w0 = Array2::from_shape_fn((1, 16), |_| synfp_core::rng::normal(&mut rng)).into_dyn();

    let tape: Tape<f64> = Tape::new();
    let g_binder = Binder::frozen(&tape, &gen.store);
    let id_binder = Binder::frozen(&tape, &idnet.store);
    let wv = tape.constant(w0);
    let noise = gen.make_noise(1, NoiseMode::None);
    let raw = gen.synthesis_forward(&g_binder, wv, &noise);
    let recon01 = raw.mul_scalar(0.5).add_scalar(0.5);
    let target = tape.constant(recon01.value().as_ref().clone());
    let l2 = recon01.sub(target).square().mean();
    let lid = idnet.identity_loss_var(&id_binder, recon01, target);
    let total = l2.add(lid).scalar_f64();
    assert_eq!(total, 0.0);
}

#[test]
fn encoder_latent_dimension_contract() {
    let enc: Encoder<f64> =
        Encoder::new(EncoderConfig { resolution: 16, latent_dim: 512, width: 4, seed: 1 }).unwrap();
    let map = synfp_core::minutiae::MinutiaeMap::zeros(16, 16);
    let w = enc.encode(&map).unwrap();
    assert_eq!(w.0.len(), 512);
    let _ = IxDyn(&[]);
}
