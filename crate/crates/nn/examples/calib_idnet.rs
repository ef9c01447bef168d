// Calibration run for identity-net desk-scale training quality.
use synfp_core::procedural::{make_dataset, DatasetConfig};
use synfp_nn::idnet::train::{detection_auc, load_training_set, median_orientation_error, train_identity, IdnetTrainConfig};
use synfp_nn::idnet::{IdentityNet, IdentityNetConfig};
use synfp_nn::checkpoint::Checkpoint;

fn main() {
    let t0 = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = make_dataset(60, 1, &data, 404, &DatasetConfig::default()).unwrap();
    println!("dataset in {:.1}s", t0.elapsed().as_secs_f64());

    let net_cfg = IdentityNetConfig { resolution: 64, base_channels: 8, seed: 7 };
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let t1 = std::time::Instant::now();
    let ckpt_path = train_identity::<f32>(
        &manifest, net_cfg.clone(),
        IdnetTrainConfig { lr: 2e-3, batch: 8, seed: 1, checkpoint_every: 0 },
        steps, dir.path(),
    ).unwrap();
    println!("{steps} steps in {:.1}s", t1.elapsed().as_secs_f64());

    let net: IdentityNet<f32> = IdentityNet::from_checkpoint(&Checkpoint::load(&ckpt_path).unwrap()).unwrap();
    // held-out split
    let held_dir = dir.path().join("held");
    let held_manifest = make_dataset(20, 1, &held_dir, 505, &DatasetConfig::default()).unwrap();
    let held = load_training_set::<f32>(&held_manifest, 64).unwrap();
    let auc = detection_auc(&net, &held);
    let med = median_orientation_error(&net, &held);
    println!("held-out detection AUC {auc:.4}, median orientation error {med:.2} deg");
}
