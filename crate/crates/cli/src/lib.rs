//! `synfp` command-line entry point: dataset generation, training,
//! synthesis, reconstruction, attribute editing and evaluation, wired into
//! reproducible config-driven runs.

pub mod config;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::path::{Path, PathBuf};
use synfp_core::eval::{
    compute_2dmh_with, frechet_distance, save_histogram_heatmap, save_score_histogram,
    score_distributions, GroundMetric, Histogram2dConfig, PairMode,
};
use synfp_core::imageio::{load_png_gray, resize_bilinear, save_png_gray};
use synfp_core::matcher::{identification_experiment, verification_experiment};
use synfp_core::minutiae::{
    extract_minutiae, read_template, write_template, ExtractorConfig, MinutiaeTemplate,
};
use synfp_core::procedural::{make_dataset, read_manifest, write_manifest, Manifest, ManifestEntry};
use synfp_nn::checkpoint::Checkpoint;
use synfp_nn::editor;
use synfp_nn::gan::{train as gan_train, Generator, LatentZ, NoiseMode};
use synfp_nn::idnet::{train as idnet_train, IdentityNet};
use synfp_nn::recon::{train as enc_train, Encoder, Reconstructor};

/// Training and inference run in single precision on the CLI path.
type F = f32;

#[derive(Parser)]
#[command(
    name = "synfp",
    about = "Synthetic fingerprint generation, reconstruction and evaluation toolkit",
    version
)]
struct Cli {
    /// JSON run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled procedural fingerprint dataset.
    MakeData(MakeDataArgs),
    /// Adversarially train the style-based generator.
    TrainGan(TrainGanArgs),
    /// Train the minutiae-oriented identity network.
    TrainIdnet(TrainIdnetArgs),
    /// Train the minutiae-map encoder against a frozen generator.
    TrainEncoder(TrainEncoderArgs),
    /// Sample random fingerprints from a trained generator.
    Synth(SynthArgs),
    /// Reconstruct fingerprints from minutiae templates.
    Reconstruct(ReconstructArgs),
    /// Factorize the generator's style space into semantic directions.
    Factorize(FactorizeArgs),
    /// Generate attribute-varied same-identity impression pairs.
    EditPairs(EditPairsArgs),
    /// 2D minutiae histogram of a dataset.
    Eval2dmh(Eval2dmhArgs),
    /// Fréchet distance between two datasets under identity-net features.
    EvalFd(EvalFdArgs),
    /// Impostor/genuine matcher score distributions.
    EvalScores(EvalScoresArgs),
    /// Type-I/Type-II verification attack experiment.
    AttackVerify(AttackVerifyArgs),
    /// Rank-1 identification attack experiment.
    AttackIdentify(AttackIdentifyArgs),
}

#[derive(Args)]
struct MakeDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    impressions: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct TrainGanArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    channel_base: Option<usize>,
    #[arg(long)]
    channel_max: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Identity-net checkpoint for scheduled Fréchet-distance evaluation.
    #[arg(long)]
    idnet_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct TrainIdnetArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args)]
struct TrainEncoderArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    gan_ckpt: PathBuf,
    #[arg(long)]
    idnet_ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: usize,
    /// Use plain adaptive moments instead of the rectified/lookahead variant.
    #[arg(long)]
    plain_adam: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// none | fixed | random (fixed/random take their stream from the seed)
    #[arg(long, default_value = "none")]
    noise_mode: String,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    gan_ckpt: PathBuf,
    #[arg(long)]
    encoder_ckpt: PathBuf,
    /// Manifest whose templates are reconstructed.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FactorizeArgs {
    #[arg(long)]
    gan_ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    layer_start: Option<usize>,
    #[arg(long)]
    layer_end: Option<usize>,
}

#[derive(Args)]
struct EditPairsArgs {
    #[arg(long)]
    gan_ckpt: PathBuf,
    #[arg(long)]
    directions: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval2dmhArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional heatmap PNG path.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Second manifest; when given, the earth mover's distance between the
    /// two histograms is printed.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct EvalFdArgs {
    #[arg(long)]
    manifest_a: PathBuf,
    #[arg(long)]
    manifest_b: PathBuf,
    #[arg(long)]
    idnet_ckpt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalScoresArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// impostor | genuine
    #[arg(long)]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackVerifyArgs {
    /// Manifest of reconstruction templates.
    #[arg(long)]
    recon_manifest: PathBuf,
    /// Manifest of the source impressions (Type-I targets).
    #[arg(long)]
    originals_a: PathBuf,
    /// Manifest of second impressions (Type-II targets).
    #[arg(long)]
    originals_b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackIdentifyArgs {
    #[arg(long)]
    recon_manifest: PathBuf,
    #[arg(long)]
    gallery_manifest: PathBuf,
    #[arg(long)]
    probe_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses and executes; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap renders its own usage/diagnostic; exit code 2 on misuse
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Output paths resolve against SYNFP_RUNDIR when they are relative.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("SYNFP_RUNDIR") {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

fn prepare_run_dir(out: &Path, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = resolve_out(out);
    std::fs::create_dir_all(&out)
        .map_err(|e| anyhow!("cannot create output dir {}: {e}", out.display()))?;
    cfg.save(&out.join("config.json"))?;
    Ok(out)
}

fn load_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = match cli_config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_manifest_templates(path: &Path) -> anyhow::Result<(Manifest, Vec<MinutiaeTemplate>)> {
    let manifest = read_manifest(path).context("reading manifest")?;
    let mut templates = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        templates.push(read_template(manifest.resolve(path, &e.template))?);
    }
    Ok((manifest, templates))
}

fn load_generator(path: &Path) -> anyhow::Result<(Checkpoint, Generator<F>)> {
    let ckpt = Checkpoint::load(path).context("loading generator checkpoint")?;
    if ckpt.dtype != "f32" {
        bail!("checkpoint {} has dtype {}, the CLI operates in f32", path.display(), ckpt.dtype);
    }
    let gen = Generator::from_checkpoint(&ckpt, "generator")?;
    Ok((ckpt, gen))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.config, cli.seed)?;
    match cli.command {
        Command::MakeData(a) => cmd_make_data(cfg, a),
        Command::TrainGan(a) => cmd_train_gan(cfg, a),
        Command::TrainIdnet(a) => cmd_train_idnet(cfg, a),
        Command::TrainEncoder(a) => cmd_train_encoder(cfg, a),
        Command::Synth(a) => cmd_synth(cfg, a),
        Command::Reconstruct(a) => cmd_reconstruct(cfg, a),
        Command::Factorize(a) => cmd_factorize(cfg, a),
        Command::EditPairs(a) => cmd_edit_pairs(cfg, a),
        Command::Eval2dmh(a) => cmd_eval_2dmh(cfg, a),
        Command::EvalFd(a) => cmd_eval_fd(cfg, a),
        Command::EvalScores(a) => cmd_eval_scores(cfg, a),
        Command::AttackVerify(a) => cmd_attack_verify(cfg, a),
        Command::AttackIdentify(a) => cmd_attack_identify(cfg, a),
    }
}

fn cmd_make_data(mut cfg: RunConfig, a: MakeDataArgs) -> anyhow::Result<()> {
    if let Some(w) = a.width {
        cfg.data.width = w;
    }
    if let Some(h) = a.height {
        cfg.data.height = h;
    }
    let impressions = a.impressions.unwrap_or(cfg.data.impressions_per_identity);
    let out = prepare_run_dir(&a.out, &cfg)?;
    let manifest =
        make_dataset(a.n, impressions, &out, cfg.seed, &cfg.data.dataset_config())?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn cmd_train_gan(mut cfg: RunConfig, a: TrainGanArgs) -> anyhow::Result<()> {
    if let Some(r) = a.resolution {
        cfg.generator.model.resolution = r;
    }
    if let Some(b) = a.channel_base {
        cfg.generator.model.channel_base = b;
    }
    if let Some(m) = a.channel_max {
        cfg.generator.model.channel_max = m;
    }
    if let Some(b) = a.batch {
        cfg.generator.train.batch = b;
    }
    cfg.generator.model.seed = synfp_core::rng::derive_seed(cfg.seed, "generator-model", 0);
    cfg.generator.train.seed = synfp_core::rng::derive_seed(cfg.seed, "generator-train", 0);
    let out = prepare_run_dir(&a.out, &cfg)?;

    let mut fd_eval = match &a.idnet_ckpt {
        Some(p) => {
            let idnet: IdentityNet<F> = IdentityNet::from_checkpoint(&Checkpoint::load(p)?)?;
            let images = load_manifest_images(&a.manifest, idnet.config.resolution)?;
            let real = idnet.embeddings(&images)?;
            let seed = cfg.seed;
            Some(Box::new(move |g: &Generator<F>, step: u64| {
                fd_of_generator(g, &idnet, &real, 128, synfp_core::rng::derive_seed(seed, "fd-eval", step))
                    .unwrap_or(f64::NAN)
            }) as Box<dyn FnMut(&Generator<F>, u64) -> f64>)
        }
        None => None,
    };
    let ckpt = gan_train::train_generator::<F>(
        &a.manifest,
        cfg.generator.model.clone(),
        cfg.generator.train.clone(),
        a.steps,
        &out,
        fd_eval.as_mut().map(|f| f.as_mut() as &mut dyn FnMut(&Generator<F>, u64) -> f64),
    )?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

/// Images of a manifest, resized to one resolution.
fn load_manifest_images(
    manifest_path: &Path,
    resolution: usize,
) -> anyhow::Result<Vec<synfp_core::GrayscaleImage>> {
    let manifest = read_manifest(manifest_path)?;
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let img = load_png_gray(manifest.resolve(manifest_path, &e.image))?;
        out.push(if img.data.dim() == (resolution, resolution) {
            img
        } else {
            resize_bilinear(&img, resolution, resolution)
        });
    }
    Ok(out)
}

/// Fréchet distance between identity-net embeddings of generated samples and
/// a fixed real-feature matrix.
fn fd_of_generator(
    generator: &Generator<F>,
    idnet: &IdentityNet<F>,
    real_features: &ndarray::Array2<f64>,
    n_samples: usize,
    seed: u64,
) -> anyhow::Result<f64> {
    let mut rng = synfp_core::rng::fork(seed, "fd-samples", 0);
    let mut images = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let z = LatentZ::sample(generator.config.latent_dim, &mut rng);
        let w = generator.map_latent(&z)?;
        let img = generator.synthesize(&w, NoiseMode::None)?;
        images.push(if img.data.dim() == (idnet.config.resolution, idnet.config.resolution) {
            img
        } else {
            resize_bilinear(&img, idnet.config.resolution, idnet.config.resolution)
        });
    }
    let fake = idnet.embeddings(&images)?;
    Ok(frechet_distance(fake.view(), real_features.view())?)
}

fn cmd_train_idnet(mut cfg: RunConfig, a: TrainIdnetArgs) -> anyhow::Result<()> {
    if let Some(r) = a.resolution {
        cfg.identity_net.model.resolution = r;
    }
    cfg.identity_net.model.seed = synfp_core::rng::derive_seed(cfg.seed, "idnet-model", 0);
    cfg.identity_net.train.seed = synfp_core::rng::derive_seed(cfg.seed, "idnet-train", 0);
    let out = prepare_run_dir(&a.out, &cfg)?;
    let ckpt = idnet_train::train_identity::<F>(
        &a.manifest,
        cfg.identity_net.model.clone(),
        cfg.identity_net.train.clone(),
        a.steps,
        &out,
    )?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_train_encoder(mut cfg: RunConfig, a: TrainEncoderArgs) -> anyhow::Result<()> {
    let (_, generator) = load_generator(&a.gan_ckpt)?;
    let idnet: IdentityNet<F> = IdentityNet::from_checkpoint(&Checkpoint::load(&a.idnet_ckpt)?)?;
    cfg.encoder.model.resolution = generator.config.resolution;
    cfg.encoder.model.latent_dim = generator.config.latent_dim;
    cfg.encoder.model.seed = synfp_core::rng::derive_seed(cfg.seed, "encoder-model", 0);
    cfg.encoder.train.seed = synfp_core::rng::derive_seed(cfg.seed, "encoder-train", 0);
    if a.plain_adam {
        cfg.encoder.train.plain_adam = true;
    }
    if idnet.config.resolution != generator.config.resolution {
        bail!(
            "identity net resolution {} must match generator resolution {}",
            idnet.config.resolution,
            generator.config.resolution
        );
    }
    let out = prepare_run_dir(&a.out, &cfg)?;
    let ckpt = enc_train::train_encoder::<F>(
        &a.manifest,
        &generator,
        &idnet,
        cfg.encoder.model.clone(),
        cfg.encoder.train.clone(),
        a.steps,
        &out,
    )?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn parse_noise_mode(mode: &str, seed: u64) -> anyhow::Result<NoiseMode> {
    match mode {
        "none" => Ok(NoiseMode::None),
        "fixed" => Ok(NoiseMode::Fixed(synfp_core::rng::derive_seed(seed, "synth-noise", 0))),
        "random" => Ok(NoiseMode::Random(synfp_core::rng::derive_seed(seed, "synth-noise", 1))),
        other => bail!("unknown noise mode {other:?} (use none, fixed or random)"),
    }
}

fn cmd_synth(cfg: RunConfig, a: SynthArgs) -> anyhow::Result<()> {
    let (_, generator) = load_generator(&a.ckpt)?;
    let noise = parse_noise_mode(&a.noise_mode, cfg.seed)?;
    let out = prepare_run_dir(&a.out, &cfg)?;
    let images_dir = out.join("images");
    let templates_dir = out.join("templates");
    std::fs::create_dir_all(&images_dir)?;
    std::fs::create_dir_all(&templates_dir)?;

    let extractor = ExtractorConfig::default();
    let er = cfg.eval.extract_resolution;
    let mut rng = synfp_core::rng::fork(cfg.seed, "synth", 0);
    let mut entries = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let z = LatentZ::sample(generator.config.latent_dim, &mut rng);
        let w = generator.map_latent(&z)?;
        let img = generator.synthesize(&w, noise)?;
        let up = if img.data.dim() == (er, er) { img.clone() } else { resize_bilinear(&img, er, er) };
        let mut template = extract_minutiae(&up, &extractor);
        let identity_id = format!("synth_{i:05}");
        template.identity_id = Some(identity_id.clone());
        template.impression_id = Some("0".into());

        let image_rel = format!("images/{identity_id}.png");
        let template_rel = format!("templates/{identity_id}.json");
        save_png_gray(&img, out.join(&image_rel))?;
        write_template(&template, out.join(&template_rel))?;
        entries.push(ManifestEntry {
            image: image_rel,
            template: template_rel,
            identity_id,
            impression_id: "0".into(),
        });
    }
    let manifest_path = out.join("manifest.json");
    write_manifest(&Manifest { entries, seed: cfg.seed }, &manifest_path)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn cmd_reconstruct(cfg: RunConfig, a: ReconstructArgs) -> anyhow::Result<()> {
    let (_, generator) = load_generator(&a.gan_ckpt)?;
    let encoder: Encoder<F> = Encoder::from_checkpoint(&Checkpoint::load(&a.encoder_ckpt)?)?;
    let recon = Reconstructor {
        generator,
        encoder,
        line_len: cfg.encoder.train.line_len,
        sigma: cfg.encoder.train.sigma,
    };
    let (src_manifest, templates) = read_manifest_templates(&a.manifest)?;
    let out = prepare_run_dir(&a.out, &cfg)?;
    let images_dir = out.join("images");
    let templates_dir = out.join("templates");
    std::fs::create_dir_all(&images_dir)?;
    std::fs::create_dir_all(&templates_dir)?;

    let extractor = ExtractorConfig::default();
    let er = cfg.eval.extract_resolution;
    let mut entries = Vec::with_capacity(templates.len());
    for (entry, template) in src_manifest.entries.iter().zip(&templates) {
        let img = recon.reconstruct(template)?;
        let up = if img.data.dim() == (er, er) { img.clone() } else { resize_bilinear(&img, er, er) };
        let mut extracted = extract_minutiae(&up, &extractor);
        extracted.identity_id = Some(entry.identity_id.clone());
        extracted.impression_id = Some(format!("recon_{}", entry.impression_id));

        let stem = format!("{}_{}", entry.identity_id, entry.impression_id);
        let image_rel = format!("images/{stem}.png");
        let template_rel = format!("templates/{stem}.json");
        save_png_gray(&img, out.join(&image_rel))?;
        write_template(&extracted, out.join(&template_rel))?;
        entries.push(ManifestEntry {
            image: image_rel,
            template: template_rel,
            identity_id: entry.identity_id.clone(),
            impression_id: format!("recon_{}", entry.impression_id),
        });
    }
    let manifest_path = out.join("manifest.json");
    write_manifest(&Manifest { entries, seed: cfg.seed }, &manifest_path)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn cmd_factorize(cfg: RunConfig, a: FactorizeArgs) -> anyhow::Result<()> {
    let (_, generator) = load_generator(&a.gan_ckpt)?;
    let start = a.layer_start.unwrap_or(cfg.editor.layer_start);
    let end = a.layer_end.unwrap_or(cfg.editor.layer_end);
    let dirs = editor::factorize(&generator, start..end)?;
    let out = resolve_out(&a.out);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    dirs.save(&out)?;
    println!(
        "wrote {} ({} directions, top eigenvalue {:.4})",
        out.display(),
        dirs.count(),
        dirs.eigenvalues[0]
    );
    Ok(())
}

fn cmd_edit_pairs(cfg: RunConfig, a: EditPairsArgs) -> anyhow::Result<()> {
    let (_, generator) = load_generator(&a.gan_ckpt)?;
    let dirs = editor::SemanticDirections::load(&a.directions)?;
    let alpha = match a.alpha.or(cfg.editor.alpha) {
        Some(v) => v,
        None => editor::default_alpha(
            &generator,
            &dirs,
            a.index,
            cfg.editor.alpha_samples,
            synfp_core::rng::derive_seed(cfg.seed, "edit-alpha", 0),
        )?,
    };
    let out = prepare_run_dir(&a.out, &cfg)?;
    let manifest = editor::generate_pairs(
        &generator,
        &dirs,
        a.index,
        alpha,
        a.n,
        cfg.seed,
        &out,
        cfg.eval.extract_resolution,
    )?;
    println!("wrote {} (alpha {alpha:.4})", manifest.display());
    Ok(())
}

fn cmd_eval_2dmh(cfg: RunConfig, a: Eval2dmhArgs) -> anyhow::Result<()> {
    let (_, templates) = read_manifest_templates(&a.manifest)?;
    let hist_cfg = Histogram2dConfig {
        per_template_average: cfg.eval.per_template_average,
        ..Histogram2dConfig::default()
    };
    let h = compute_2dmh_with(&templates, &hist_cfg);
    let out = resolve_out(&a.out);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out, h.to_csv())?;
    if let Some(heat) = &a.heatmap {
        save_histogram_heatmap(&h, resolve_out(heat))?;
    }
    println!("wrote {} ({} pairs)", out.display(), h.counts_total);
    if let Some(other) = &a.compare {
        let (_, other_templates) = read_manifest_templates(other)?;
        let h2 = compute_2dmh_with(&other_templates, &hist_cfg);
        let metric = if cfg.eval.emd_l1_ground { GroundMetric::L1 } else { GroundMetric::Euclidean };
        let d = synfp_core::eval::emd_with_metric(&h, &h2, metric)?;
        println!("EMD = {d:.6}");
    }
    Ok(())
}

fn cmd_eval_fd(cfg: RunConfig, a: EvalFdArgs) -> anyhow::Result<()> {
    let idnet: IdentityNet<F> = IdentityNet::from_checkpoint(&Checkpoint::load(&a.idnet_ckpt)?)?;
    let r = idnet.config.resolution;
    let fa = idnet.embeddings(&load_manifest_images(&a.manifest_a, r)?)?;
    let fb = idnet.embeddings(&load_manifest_images(&a.manifest_b, r)?)?;
    let fd = frechet_distance(fa.view(), fb.view())?;
    println!("FD-id = {fd:.6}");
    if let Some(out) = &a.out {
        let out = resolve_out(out);
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(
            &out,
            serde_json::to_string_pretty(&serde_json::json!({
                "fd_id": fd,
                "n_a": fa.nrows(),
                "n_b": fb.nrows(),
                "seed": cfg.seed,
            }))?,
        )?;
    }
    Ok(())
}

fn cmd_eval_scores(cfg: RunConfig, a: EvalScoresArgs) -> anyhow::Result<()> {
    let (_, templates) = read_manifest_templates(&a.manifest)?;
    let mode = match a.mode.as_str() {
        "impostor" => PairMode::ImpostorAllPairs,
        "genuine" => PairMode::GenuineWithinIdentity,
        other => bail!("unknown mode {other:?} (use impostor or genuine)"),
    };
    let out = prepare_run_dir(&a.out, &cfg)?;
    let dist = score_distributions(&templates, mode, &cfg.eval.matcher_config())?;
    let summary = dist.summary();
    std::fs::write(out.join(format!("{}_scores.csv", dist.label)), dist.to_csv())?;
    std::fs::write(
        out.join(format!("{}_summary.json", dist.label)),
        serde_json::to_string_pretty(&summary)?,
    )?;
    save_score_histogram(
        &dist.scores(),
        50,
        100.0,
        out.join(format!("{}_hist.png", dist.label)),
    )?;
    println!(
        "{}: count {} max {:.2} mean {:.2} std {:.2}",
        dist.label, summary.count, summary.max, summary.mean, summary.std
    );
    Ok(())
}

/// Aligns three manifests by identity: returns per-identity template triples.
fn align_by_identity(
    recons: &(Manifest, Vec<MinutiaeTemplate>),
    orig_a: &(Manifest, Vec<MinutiaeTemplate>),
    orig_b: &(Manifest, Vec<MinutiaeTemplate>),
) -> anyhow::Result<(Vec<MinutiaeTemplate>, Vec<MinutiaeTemplate>, Vec<MinutiaeTemplate>)> {
    let index = |set: &(Manifest, Vec<MinutiaeTemplate>), id: &str| -> Option<usize> {
        set.0.entries.iter().position(|e| e.identity_id == id)
    };
    let mut r = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, entry) in recons.0.entries.iter().enumerate() {
        if !seen.insert(entry.identity_id.clone()) {
            continue;
        }
        let ia = index(orig_a, &entry.identity_id)
            .ok_or_else(|| anyhow!("identity {} missing from originals_a", entry.identity_id))?;
        let ib = index(orig_b, &entry.identity_id)
            .ok_or_else(|| anyhow!("identity {} missing from originals_b", entry.identity_id))?;
        r.push(recons.1[i].clone());
        a.push(orig_a.1[ia].clone());
        b.push(orig_b.1[ib].clone());
    }
    Ok((r, a, b))
}

fn cmd_attack_verify(cfg: RunConfig, a: AttackVerifyArgs) -> anyhow::Result<()> {
    let recons = read_manifest_templates(&a.recon_manifest)?;
    let orig_a = read_manifest_templates(&a.originals_a)?;
    let orig_b = read_manifest_templates(&a.originals_b)?;
    let (r, oa, ob) = align_by_identity(&recons, &orig_a, &orig_b)?;
    let table =
        verification_experiment(&r, &oa, &ob, &cfg.eval.far_levels, &cfg.eval.matcher_config())?;
    let out = prepare_run_dir(&a.out, &cfg)?;
    std::fs::write(out.join("verification.csv"), table.to_csv())?;
    for row in &table.rows {
        println!(
            "FAR {:>7.4}: threshold {:6.2}  type-I {:5.1}%  type-II {:5.1}%",
            row.far,
            row.threshold,
            100.0 * row.type1_accept,
            100.0 * row.type2_accept
        );
    }
    Ok(())
}

fn cmd_attack_identify(cfg: RunConfig, a: AttackIdentifyArgs) -> anyhow::Result<()> {
    let (_, recons) = read_manifest_templates(&a.recon_manifest)?;
    let (_, gallery) = read_manifest_templates(&a.gallery_manifest)?;
    let probes = match &a.probe_manifest {
        Some(p) => read_manifest_templates(p)?.1,
        None => Vec::new(),
    };
    let result =
        identification_experiment(&recons, &gallery, &probes, &cfg.eval.matcher_config())?;
    let out = prepare_run_dir(&a.out, &cfg)?;
    std::fs::write(out.join("identification.csv"), result.to_csv())?;
    if result.degenerate_gallery {
        eprintln!("warning: single-identity gallery; rank-1 is trivially perfect");
    }
    println!(
        "type-I rank-1 {:.2}%{}",
        100.0 * result.type1_rank1,
        result
            .type2_rank1
            .map_or(String::new(), |t| format!(", type-II rank-1 {:.2}%", 100.0 * t))
    );
    Ok(())
}
