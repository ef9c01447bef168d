//! Verification and identification attack experiment drivers.

use super::{match_templates, MatcherConfig};
use crate::error::{Error, Result};
use crate::minutiae::MinutiaeTemplate;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct VerificationRow {
    /// False acceptance rate the threshold was calibrated for (fraction).
    pub far: f64,
    pub threshold: f64,
    /// Fraction of Type-I attacks accepted (score strictly above threshold).
    pub type1_accept: f64,
    /// Fraction of Type-II attacks accepted.
    pub type2_accept: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationTable {
    pub rows: Vec<VerificationRow>,
    pub impostor_scores: Vec<f64>,
}

impl VerificationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("far_level,threshold,type1_rate,type2_rate\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.far, r.threshold, r.type1_accept, r.type2_accept
            ));
        }
        s
    }
}

fn identity_of(t: &MinutiaeTemplate, role: &str, index: usize) -> Result<String> {
    t.identity_id
        .clone()
        .ok_or_else(|| Error::invalid(format!("{role} template {index} is missing identity_id")))
}

/// Runs the verification attack experiment.
///
/// `reconstructions[i]`, `originals_a[i]` and `originals_b[i]` must belong to
/// the same identity; `originals_a` holds the impressions the templates were
/// taken from (Type-I targets) and `originals_b` the second impressions
/// (Type-II targets). The impostor distribution is every cross-identity pair
/// within `originals_a ++ originals_b`; the threshold for a FAR level is the
/// smallest impostor score whose exceedance rate is at or below that level,
/// and FAR = 0 accepts only scores strictly above the impostor maximum.
pub fn verification_experiment(
    reconstructions: &[MinutiaeTemplate],
    originals_a: &[MinutiaeTemplate],
    originals_b: &[MinutiaeTemplate],
    far_levels: &[f64],
    config: &MatcherConfig,
) -> Result<VerificationTable> {
    let n = reconstructions.len();
    if originals_a.len() != n || originals_b.len() != n {
        return Err(Error::invalid(format!(
            "aligned list lengths differ: {} reconstructions, {} type-I originals, {} type-II originals",
            n,
            originals_a.len(),
            originals_b.len()
        )));
    }
    let mut identities = Vec::with_capacity(n);
    for i in 0..n {
        let id = identity_of(&originals_a[i], "originals_a", i)?;
        identities.push(id);
    }
    {
        let mut unique = identities.clone();
        unique.sort();
        unique.dedup();
        if unique.len() < 2 {
            return Err(Error::invalid(
                "verification experiment needs at least 2 identities",
            ));
        }
    }

    // impostor pool: all cross-identity pairs among the originals
    let pool: Vec<(&MinutiaeTemplate, &str)> = originals_a
        .iter()
        .zip(identities.iter())
        .map(|(t, id)| (t, id.as_str()))
        .chain(originals_b.iter().zip(identities.iter()).map(|(t, id)| (t, id.as_str())))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            if pool[i].1 != pool[j].1 {
                pairs.push((i, j));
            }
        }
    }
    let mut impostor_scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| match_templates(pool[i].0, pool[j].0, config).score)
        .collect();
    impostor_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let type1: Vec<f64> = reconstructions
        .par_iter()
        .zip(originals_a.par_iter())
        .map(|(r, o)| match_templates(r, o, config).score)
        .collect();
    let type2: Vec<f64> = reconstructions
        .par_iter()
        .zip(originals_b.par_iter())
        .map(|(r, o)| match_templates(r, o, config).score)
        .collect();

    let rows = far_levels
        .iter()
        .map(|&far| {
            let threshold = threshold_for_far(&impostor_scores, far);
            VerificationRow {
                far,
                threshold,
                type1_accept: accept_rate(&type1, threshold),
                type2_accept: accept_rate(&type2, threshold),
            }
        })
        .collect();
    Ok(VerificationTable { rows, impostor_scores })
}

/// Smallest score whose exceedance rate among (ascending sorted) impostor
/// scores is at or below `far`; acceptance means scoring strictly above it.
pub fn threshold_for_far(sorted_impostors: &[f64], far: f64) -> f64 {
    let n = sorted_impostors.len();
    if n == 0 {
        return 0.0;
    }
    let mut candidates: Vec<f64> = Vec::with_capacity(n + 1);
    candidates.push(0.0);
    candidates.extend_from_slice(sorted_impostors);
    for &t in &candidates {
        // count of impostors strictly above t
        let above = sorted_impostors.partition_point(|s| *s <= t);
        let rate = (n - above) as f64 / n as f64;
        if rate <= far {
            return t;
        }
    }
    sorted_impostors[n - 1]
}

fn accept_rate(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|s| **s > threshold).count() as f64 / scores.len() as f64
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    /// Rank-1 rate of reconstructions against the gallery (Type-I).
    pub type1_rank1: f64,
    /// Rank-1 rate against the probe impressions (Type-II), when provided.
    pub type2_rank1: Option<f64>,
    pub n: usize,
    /// Set when the gallery holds a single identity, which makes rank-1
    /// trivially perfect.
    pub degenerate_gallery: bool,
}

impl IdentificationResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("attack_type,rank1_rate\n");
        s.push_str(&format!("type1,{:.6}\n", self.type1_rank1));
        if let Some(t2) = self.type2_rank1 {
            s.push_str(&format!("type2,{t2:.6}\n"));
        }
        s
    }
}

/// Identification attack: each reconstruction is scored against the whole
/// gallery; rank-1 requires the true identity to score strictly above every
/// other entry (ties count against the attack). `probes`, when non-empty,
/// provides second impressions for the Type-II variant.
pub fn identification_experiment(
    reconstructions: &[MinutiaeTemplate],
    gallery: &[MinutiaeTemplate],
    probes: &[MinutiaeTemplate],
    config: &MatcherConfig,
) -> Result<IdentificationResult> {
    let mut gallery_ids = Vec::with_capacity(gallery.len());
    for (i, g) in gallery.iter().enumerate() {
        gallery_ids.push(identity_of(g, "gallery", i)?);
    }
    {
        let mut unique = gallery_ids.clone();
        unique.sort();
        let len_before = unique.len();
        unique.dedup();
        if unique.len() != len_before {
            return Err(Error::invalid("gallery identities must be unique"));
        }
    }

    let rank1_against = |set: &[MinutiaeTemplate], set_ids: &[String]| -> Result<f64> {
        let hits: Result<Vec<bool>> = reconstructions
            .par_iter()
            .enumerate()
            .map(|(i, recon)| {
                let id = identity_of(recon, "reconstruction", i)?;
                let true_idx = set_ids.iter().position(|g| *g == id).ok_or_else(|| {
                    Error::invalid(format!("identity {id} absent from gallery"))
                })?;
                let scores: Vec<f64> = set
                    .iter()
                    .map(|g| match_templates(recon, g, config).score)
                    .collect();
                let true_score = scores[true_idx];
                let beaten = scores
                    .iter()
                    .enumerate()
                    .any(|(j, s)| j != true_idx && *s >= true_score);
                Ok(!beaten)
            })
            .collect();
        let hits = hits?;
        Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len().max(1) as f64)
    };

    let type1_rank1 = rank1_against(gallery, &gallery_ids)?;
    let type2_rank1 = if probes.is_empty() {
        None
    } else {
        let mut probe_ids = Vec::with_capacity(probes.len());
        for (i, p) in probes.iter().enumerate() {
            probe_ids.push(identity_of(p, "probe", i)?);
        }
        Some(rank1_against(probes, &probe_ids)?)
    };

    Ok(IdentificationResult {
        type1_rank1,
        type2_rank1,
        n: reconstructions.len(),
        degenerate_gallery: gallery_ids.len() == 1,
    })
}
