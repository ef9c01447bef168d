//! Dataset-level quality checks for the procedural generator: label/extractor
//! consistency, identity separability under the bundled matcher, and
//! renderer/extractor sanity.

use rayon::prelude::*;
use synfp_core::eval::{score_distributions, PairMode};
use synfp_core::matcher::MatcherConfig;
use synfp_core::minutiae::{
    extract_minutiae, read_template, render_minutiae_map, ExtractorConfig,
};
use synfp_core::procedural::{
    generate_identity, make_dataset, read_manifest, render_impression, DatasetConfig,
    IdentityConfig, NoiseConfig,
};
use synfp_core::imageio::load_png_gray;

#[test]
fn hundred_identity_dataset_has_rich_templates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = make_dataset(100, 1, dir.path(), 2024, &DatasetConfig::default()).unwrap();
    let manifest = read_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.entries.len(), 100);

    let mut ids: Vec<&str> = manifest.entries.iter().map(|e| e.identity_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 100, "identity ids must be distinct");

    let counts: Vec<usize> = manifest
        .entries
        .iter()
        .map(|e| {
            read_template(manifest.resolve(&manifest_path, &e.template))
                .unwrap()
                .minutiae
                .len()
        })
        .collect();
    let rich = counts.iter().filter(|c| **c >= 8).count();
    assert!(
        rich as f64 >= 0.95 * counts.len() as f64,
        "only {rich}/100 templates have >= 8 minutiae; counts: {counts:?}"
    );
}

#[test]
fn genuine_impressions_beat_the_impostor_99th_percentile() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = make_dataset(50, 2, dir.path(), 77, &DatasetConfig::default()).unwrap();
    let manifest = read_manifest(&manifest_path).unwrap();
    let templates: Vec<_> = manifest
        .entries
        .iter()
        .map(|e| read_template(manifest.resolve(&manifest_path, &e.template)).unwrap())
        .collect();

    let cfg = MatcherConfig::default();
    let genuine = score_distributions(&templates, PairMode::GenuineWithinIdentity, &cfg).unwrap();
    let impostor = score_distributions(&templates, PairMode::ImpostorAllPairs, &cfg).unwrap();

    let mut imp_scores = impostor.scores();
    imp_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p99 = imp_scores[((imp_scores.len() as f64 * 0.99) as usize).min(imp_scores.len() - 1)];

    let gens = genuine.scores();
    let above = gens.iter().filter(|s| **s > p99).count();
    // every identity's two impressions should match far above impostors
    assert!(
        above as f64 >= 0.9 * gens.len() as f64,
        "genuine above impostor p99: {above}/{} (p99 = {p99:.2})",
        gens.len()
    );
    assert!(genuine.summary().mean > impostor.summary().mean);
}

#[test]
fn extract_commutes_with_small_affines() {
    let cfg = IdentityConfig::default();
    let extractor = ExtractorConfig::default();
    let mut paired_total = 0usize;
    let mut minutiae_total = 0usize;
    for seed in 0..6u64 {
        let identity = generate_identity(&format!("c{seed}"), &cfg, 500 + seed).unwrap();
        let noise = NoiseConfig {
            max_rotation_deg: 3.0,
            max_translation: 2.0,
            contrast_jitter: 0.0,
            blob_count: 0,
            blob_strength: 0.0,
            speckle: 0.0,
        };
        let (img, expected) = render_impression(&identity, &noise, seed);
        let actual = extract_minutiae(&img, &extractor);

        let mut paired = 0;
        for e in &expected.minutiae {
            let hit = actual
                .minutiae
                .iter()
                .any(|a| ((a.x - e.x).powi(2) + (a.y - e.y).powi(2)).sqrt() <= 3.0);
            if hit {
                paired += 1;
            }
        }
        paired_total += paired;
        minutiae_total += expected.minutiae.len();
    }
    assert!(
        paired_total as f64 >= 0.8 * minutiae_total as f64,
        "paired {paired_total}/{minutiae_total}"
    );
}

#[test]
fn renderer_mass_proportional_to_minutiae_count() {
    // keep only minutiae spaced far enough apart that strokes cannot overlap,
    // then per-channel mass must equal the sum of isolated stroke masses
    let identity = generate_identity("mass", &IdentityConfig::default(), 321).unwrap();
    let mut t = identity.master_template.clone();
    let mut kept: Vec<synfp_core::Minutia> = Vec::new();
    for m in &t.minutiae {
        if kept
            .iter()
            .all(|k| ((k.x - m.x).powi(2) + (k.y - m.y).powi(2)).sqrt() > 32.0)
        {
            kept.push(*m);
        }
    }
    t.minutiae = kept.clone();
    assert!(t.minutiae.len() >= 2, "need a few isolated minutiae");

    let combined = render_minutiae_map(&t, 15.0, 0.0).unwrap();
    for c in 0..3 {
        let mut expected = 0.0;
        for m in &kept {
            if m.kind.channel() != c {
                continue;
            }
            let mut single = t.clone();
            single.minutiae = vec![*m];
            expected += render_minutiae_map(&single, 15.0, 0.0).unwrap().channel_mass(c);
        }
        assert_eq!(combined.channel_mass(c), expected, "channel {c}");
    }
}

#[test]
fn dataset_images_and_extraction_are_parallel_safe() {
    // same dataset built twice concurrently must agree entry by entry
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        identity: IdentityConfig { width: 96, height: 96, ..IdentityConfig::default() },
        noise: NoiseConfig::default(),
    };
    let (p1, p2) = rayon::join(
        || make_dataset(6, 2, d1.path(), 5, &cfg).unwrap(),
        || make_dataset(6, 2, d2.path(), 5, &cfg).unwrap(),
    );
    let m1 = read_manifest(&p1).unwrap();
    let m2 = read_manifest(&p2).unwrap();
    assert_eq!(m1, m2);
    let results: Vec<(Vec<u8>, Vec<u8>)> = m1
        .entries
        .par_iter()
        .zip(m2.entries.par_iter())
        .map(|(a, b)| {
            (
                std::fs::read(m1.resolve(&p1, &a.image)).unwrap(),
                std::fs::read(m2.resolve(&p2, &b.image)).unwrap(),
            )
        })
        .collect();
    for (a, b) in results {
        assert_eq!(a, b);
    }
    // extraction on a loaded image is pure
    let img = load_png_gray(m1.resolve(&p1, &m1.entries[0].image)).unwrap();
    let (ta, tb) = rayon::join(
        || extract_minutiae(&img, &ExtractorConfig::default()),
        || extract_minutiae(&img, &ExtractorConfig::default()),
    );
    assert_eq!(ta, tb);
}
