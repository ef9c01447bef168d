//! Labeled dataset generation and the manifest format shared by every
//! dataset-producing tool in the workspace.

use super::{generate_identity, render_impression, IdentityConfig, NoiseConfig, SyntheticIdentity};
use crate::error::{Error, Result};
use crate::imageio::save_png_gray;
use crate::minutiae::write_template;
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct DatasetConfig {
    pub identity: IdentityConfig,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    /// Image path, relative to the manifest file.
    pub image: String,
    /// Template path, relative to the manifest file.
    pub template: String,
    pub identity_id: String,
    pub impression_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
}

impl Manifest {
    /// Resolves an entry path against the manifest's directory.
    pub fn resolve(&self, manifest_path: &Path, relative: &str) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(relative)
    }

    pub fn identity_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.identity_id.as_str()).collect();
        ids.dedup();
        ids
    }
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::parse(path, format!("serialize failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Generates `n_identities x impressions_per_identity` labeled images and
/// writes them with a manifest under `out_dir`. Returns the manifest path.
/// Identities generate in parallel; output bytes depend only on the seed.
pub fn make_dataset(
    n_identities: usize,
    impressions_per_identity: usize,
    out_dir: impl AsRef<Path>,
    seed: u64,
    config: &DatasetConfig,
) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let images_dir = out_dir.join("images");
    let templates_dir = out_dir.join("templates");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    std::fs::create_dir_all(&templates_dir).map_err(|e| Error::io(&templates_dir, e))?;

    let generated: Vec<Result<Vec<(String, String, SyntheticIdentity, usize)>>> = (0..n_identities)
        .into_par_iter()
        .map(|i| {
            let identity_id = format!("id_{i:05}");
            let id_seed = rng::derive_seed(seed, "dataset-identity", i as u64);
            let identity = generate_identity(&identity_id, &config.identity, id_seed)?;
            Ok((0..impressions_per_identity)
                .map(|k| {
                    let impression_id = format!("imp_{k}");
                    (identity_id.clone(), impression_id, identity.clone(), k)
                })
                .collect())
        })
        .collect();

    let mut entries = Vec::with_capacity(n_identities * impressions_per_identity);
    for group in generated {
        for (identity_id, impression_id, identity, k) in group? {
            let imp_seed =
                rng::derive_seed(seed, "dataset-impression", entry_seed_index(&identity_id, k));
            let (image, mut template) = render_impression(&identity, &config.noise, imp_seed);
            template.identity_id = Some(identity_id.clone());
            template.impression_id = Some(impression_id.clone());

            let image_rel = format!("images/{identity_id}_{impression_id}.png");
            let template_rel = format!("templates/{identity_id}_{impression_id}.json");
            save_png_gray(&image, out_dir.join(&image_rel))?;
            write_template(&template, out_dir.join(&template_rel))?;
            entries.push(ManifestEntry {
                image: image_rel,
                template: template_rel,
                identity_id,
                impression_id,
            });
        }
    }

    let manifest = Manifest { entries, seed };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest, &manifest_path)?;
    Ok(manifest_path)
}

fn entry_seed_index(identity_id: &str, impression: usize) -> u64 {
    let mut acc: u64 = 1469598103934665603;
    for b in identity_id.as_bytes() {
        acc ^= u64::from(*b);
        acc = acc.wrapping_mul(1099511628211);
    }
    acc.wrapping_add(impression as u64)
}
