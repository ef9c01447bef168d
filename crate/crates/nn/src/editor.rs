//! Closed-form semantic factorization of the generator's style-affine
//! weights, identity-preserving latent edits, and attribute-varied pair
//! generation.


use crate::error::{Error, Result};
use crate::gan::{Generator, LatentW, LatentZ, NoiseMode};
use crate::real::Real;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::{Path, PathBuf};
use synfp_core::imageio::{resize_bilinear, save_png_gray};
use synfp_core::linalg::symmetric_eigen;
use synfp_core::minutiae::{extract_minutiae, write_template, ExtractorConfig};
use synfp_core::procedural::{Manifest, ManifestEntry};
use synfp_core::rng as core_rng;

/// Orthonormal latent directions ordered by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SemanticDirections {
    /// k x latent_dim, rows unit-norm and mutually orthogonal.
    pub directions: Array2<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Array1<f64>,
    /// Synthesis-conv layer indices whose affine weights were stacked.
    pub source_layers: Vec<usize>,
    /// Content hash of the generator the directions were computed from.
    pub generator_hash: String,
}

#[derive(Serialize, Deserialize)]
struct DirectionsFile {
    eigenvalues: Vec<f64>,
    directions: Vec<Vec<f64>>,
    source_layers: Vec<usize>,
    generator_hash: String,
}

impl SemanticDirections {
    pub fn latent_dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn count(&self) -> usize {
        self.directions.nrows()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = DirectionsFile {
            eigenvalues: self.eigenvalues.to_vec(),
            directions: self.directions.rows().into_iter().map(|r| r.to_vec()).collect(),
            source_layers: self.source_layers.clone(),
            generator_hash: self.generator_hash.clone(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| Error::invalid(format!("directions encode: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DirectionsFile = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("directions decode: {e}")))?;
        let k = file.directions.len();
        let d = file.directions.first().map_or(0, |r| r.len());
        let mut directions = Array2::<f64>::zeros((k, d));
        for (i, row) in file.directions.iter().enumerate() {
            if row.len() != d {
                return Err(Error::invalid("ragged directions matrix"));
            }
            for (j, v) in row.iter().enumerate() {
                directions[[i, j]] = *v;
            }
        }
        Ok(SemanticDirections {
            directions,
            eigenvalues: Array1::from_vec(file.eigenvalues),
            source_layers: file.source_layers,
            generator_hash: file.generator_hash,
        })
    }
}

/// Factorizes the stacked style-affine weight matrices of the selected
/// synthesis layers: directions are the unit eigenvectors of `A^T A` sorted
/// by descending eigenvalue. Deterministic: equal eigenvalues keep coordinate
/// order and each direction's largest-magnitude component is made positive.
pub fn factorize<F: Real>(
    generator: &Generator<F>,
    layer_range: Range<usize>,
) -> Result<SemanticDirections> {
    let names = generator.style_affine_names();
    if layer_range.is_empty() || layer_range.end > names.len() {
        return Err(Error::invalid(format!(
            "layer range {layer_range:?} invalid for {} synthesis layers",
            names.len()
        )));
    }
    let latent_dim = generator.config.latent_dim;
    let mut rows: Vec<Array1<f64>> = Vec::new();
    for idx in layer_range.clone() {
        let pref = generator
            .store
            .by_name(&names[idx])
            .ok_or_else(|| Error::invalid(format!("missing affine weight {}", names[idx])))?;
        let w = generator.store.value(pref);
        // stored as [latent_dim, out]; stack transposed rows (out x latent)
        let shape = w.shape().to_vec();
        if shape.len() != 2 || shape[0] != latent_dim {
            return Err(Error::shape(format!(
                "affine weight {} has shape {shape:?}",
                names[idx]
            )));
        }
        for col in 0..shape[1] {
            rows.push(Array1::from_shape_fn(latent_dim, |j| {
                w[ndarray::IxDyn(&[j, col])].as_f64()
            }));
        }
    }
    let mut a = Array2::<f64>::zeros((rows.len(), latent_dim));
    for (i, r) in rows.iter().enumerate() {
        a.row_mut(i).assign(r);
    }
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("style-affine weights are all zero"));
    }

    let ata = a.t().dot(&a);
    let (eigvals, eigvecs) = symmetric_eigen(&ata);

    // stable descending sort keeps coordinate order on ties
    let mut order: Vec<usize> = (0..latent_dim).collect();
    order.sort_by(|&i, &j| eigvals[j].partial_cmp(&eigvals[i]).unwrap());
    let mut directions = Array2::<f64>::zeros((latent_dim, latent_dim));
    let mut sorted_vals = Array1::<f64>::zeros(latent_dim);
    for (rank, &k) in order.iter().enumerate() {
        sorted_vals[rank] = eigvals[k].max(0.0);
        let mut v: Vec<f64> = (0..latent_dim).map(|j| eigvecs[[j, k]]).collect();
        // sign convention: largest-magnitude component positive
        let mut best = 0;
        for (j, val) in v.iter().enumerate() {
            if val.abs() > v[best].abs() {
                best = j;
            }
        }
        if v[best] < 0.0 {
            for val in &mut v {
                *val = -*val;
            }
        }
        for (j, val) in v.iter().enumerate() {
            directions[[rank, j]] = *val;
        }
    }

    Ok(SemanticDirections {
        directions,
        eigenvalues: sorted_vals,
        source_layers: layer_range.collect(),
        generator_hash: generator.store.content_hash(),
    })
}

/// `w' = w + alpha * direction[index]`.
pub fn edit(w: &LatentW, directions: &SemanticDirections, index: usize, alpha: f64) -> Result<LatentW> {
    if index >= directions.count() {
        return Err(Error::invalid(format!(
            "direction index {index} out of range ({} directions)",
            directions.count()
        )));
    }
    if w.0.len() != directions.latent_dim() {
        return Err(Error::shape(format!(
            "latent dimension {} vs directions {}",
            w.0.len(),
            directions.latent_dim()
        )));
    }
    let mut out = w.0.clone();
    for j in 0..out.len() {
        out[j] += alpha * directions.directions[[index, j]];
    }
    Ok(LatentW(out))
}

/// Default edit magnitude: three standard deviations of the projection
/// `<w, direction>` over mapped samples.
pub fn default_alpha<F: Real>(
    generator: &Generator<F>,
    directions: &SemanticDirections,
    index: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if index >= directions.count() {
        return Err(Error::invalid(format!("direction index {index} out of range")));
    }
    let mut rng = core_rng::fork(seed, "edit-alpha", 0);
    let mut projections = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let z = LatentZ::sample(generator.config.latent_dim, &mut rng);
        let w = generator.map_latent(&z)?;
        let p: f64 = (0..w.0.len())
            .map(|j| w.0[j] * directions.directions[[index, j]])
            .sum();
        projections.push(p);
    }
    let mean = projections.iter().sum::<f64>() / n_samples as f64;
    let var = projections.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
        / n_samples as f64;
    Ok(3.0 * var.sqrt())
}

/// Generates `n` attribute-varied impression pairs. Each pair shares one
/// random identity latent edited by -alpha / +alpha along the direction;
/// templates are extracted from the images upscaled to `extract_resolution`.
#[allow(clippy::too_many_arguments)]
pub fn generate_pairs<F: Real>(
    generator: &Generator<F>,
    directions: &SemanticDirections,
    index: usize,
    alpha: f64,
    n: usize,
    seed: u64,
    out_dir: &Path,
    extract_resolution: usize,
) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::invalid("pair count must be > 0"));
    }
    let images_dir = out_dir.join("images");
    let templates_dir = out_dir.join("templates");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    std::fs::create_dir_all(&templates_dir).map_err(|e| Error::io(&templates_dir, e))?;

    let extractor = ExtractorConfig::default();
    let mut rng = core_rng::fork(seed, "edit-pairs", 0);
    let mut entries = Vec::with_capacity(2 * n);
    for i in 0..n {
        let identity_id = format!("pair_{i:04}");
        let z = LatentZ::sample(generator.config.latent_dim, &mut rng);
        let w = generator.map_latent(&z)?;
        for (impression_id, sign) in [("a", -1.0), ("b", 1.0)] {
            let edited = edit(&w, directions, index, sign * alpha)?;
            let img = generator.synthesize(&edited, NoiseMode::None)?;
            let up = if extract_resolution != generator.config.resolution {
                resize_bilinear(&img, extract_resolution, extract_resolution)
            } else {
                img.clone()
            };
            let mut template = extract_minutiae(&up, &extractor);
            template.identity_id = Some(identity_id.clone());
            template.impression_id = Some(impression_id.to_string());

            let image_rel = format!("images/{identity_id}_{impression_id}.png");
            let template_rel = format!("templates/{identity_id}_{impression_id}.json");
            save_png_gray(&img, out_dir.join(&image_rel))?;
            write_template(&template, out_dir.join(&template_rel))?;
            entries.push(ManifestEntry {
                image: image_rel,
                template: template_rel,
                identity_id: identity_id.clone(),
                impression_id: impression_id.to_string(),
            });
        }
    }
    let manifest = Manifest { entries, seed };
    let manifest_path = out_dir.join("manifest.json");
    synfp_core::procedural::write_manifest(&manifest, &manifest_path)?;

    // reuse of a mismatched generator is a common operator error
    let directions_path = out_dir.join("directions.json");
    directions.save(&directions_path)?;
    Ok(manifest_path)
}
