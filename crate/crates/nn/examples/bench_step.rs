// Rough per-step timing for candidate desk-scale configs.
use ndarray::Array4;
use synfp_nn::gan::ada::AdaConfig;
use synfp_nn::gan::train::{GanTrainConfig, GanTrainer};
use synfp_nn::gan::GeneratorConfig;

fn main() {
    for (base, cap) in [(512usize, 128usize), (1024, 128)] {
        let cfg = GeneratorConfig {
            resolution: 32, latent_dim: 512, mapping_layers: 8,
            channel_base: base, channel_max: cap, seed: 1,
        };
        let chans: Vec<usize> = cfg.resolutions().iter().map(|r| cfg.channels(*r)).collect();
        let mut trainer: GanTrainer<f32> = GanTrainer::new(cfg, GanTrainConfig::default()).unwrap();
        let mut rng = synfp_core::rng::fork(2, "bench", 0);
        let images = Array4::from_shape_fn((64, 1, 32, 32), |_| {
            (0.5 + 0.3 * synfp_core::rng::normal(&mut rng)) as f32
        });
        let ada = AdaConfig::with_p(0.6);
        trainer.train_step(&images, &ada).unwrap();
        let t0 = std::time::Instant::now();
        let n = 8;
        for _ in 0..n {
            trainer.train_step(&images, &ada).unwrap();
        }
        let per = t0.elapsed().as_secs_f64() / n as f64;
        println!("base {base} cap {cap} channels {chans:?}: {per:.3} s/step -> 2000 steps = {:.1} min", per * 2000.0 / 60.0);
    }
}
