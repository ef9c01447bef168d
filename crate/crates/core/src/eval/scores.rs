//! Impostor / genuine matcher score distributions.

use crate::error::{Error, Result};
use crate::matcher::{match_templates, MatcherConfig};
use crate::minutiae::MinutiaeTemplate;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// All cross-identity template pairs.
    ImpostorAllPairs,
    /// All same-identity template pairs (distinct impressions).
    GenuineWithinIdentity,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoredPair {
    pub id_a: String,
    pub id_b: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct ScoreDistribution {
    /// "impostor" or "genuine".
    pub label: &'static str,
    pub pairs: Vec<ScoredPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreSummary {
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ScoreDistribution {
    pub fn scores(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.score).collect()
    }

    pub fn summary(&self) -> ScoreSummary {
        let n = self.pairs.len();
        if n == 0 {
            return ScoreSummary { max: 0.0, mean: 0.0, std: 0.0, count: 0 };
        }
        let scores = self.scores();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = scores.iter().sum::<f64>() / n as f64;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        ScoreSummary { max, mean, std: var.sqrt(), count: n }
    }

    /// CSV rows `(id_a, id_b, score)`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id_a,id_b,score\n");
        for p in &self.pairs {
            s.push_str(&format!("{},{},{:.6}\n", p.id_a, p.id_b, p.score));
        }
        s
    }
}

/// Scores the requested pair set of a template collection.
///
/// Templates without an `identity_id` are treated as singleton identities
/// named by their index. A single-template input yields an empty distribution.
pub fn score_distributions(
    templates: &[MinutiaeTemplate],
    mode: PairMode,
    config: &MatcherConfig,
) -> Result<ScoreDistribution> {
    let ids: Vec<String> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| t.identity_id.clone().unwrap_or_else(|| format!("#{i}")))
        .collect();
    let tags: Vec<String> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let imp = t.impression_id.clone().unwrap_or_else(|| format!("{i}"));
            format!("{}/{}", ids[i], imp)
        })
        .collect();

    let mut index_pairs = Vec::new();
    for i in 0..templates.len() {
        for j in i + 1..templates.len() {
            let same = ids[i] == ids[j];
            let keep = match mode {
                PairMode::ImpostorAllPairs => !same,
                PairMode::GenuineWithinIdentity => same,
            };
            if keep {
                index_pairs.push((i, j));
            }
        }
    }
    if mode == PairMode::GenuineWithinIdentity && index_pairs.is_empty() && templates.len() > 1 {
        return Err(Error::invalid(
            "genuine mode requires at least one identity with repeated impressions",
        ));
    }

    let pairs: Vec<ScoredPair> = index_pairs
        .par_iter()
        .map(|&(i, j)| ScoredPair {
            id_a: tags[i].clone(),
            id_b: tags[j].clone(),
            score: match_templates(&templates[i], &templates[j], config).score,
        })
        .collect();

    Ok(ScoreDistribution {
        label: match mode {
            PairMode::ImpostorAllPairs => "impostor",
            PairMode::GenuineWithinIdentity => "genuine",
        },
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::{Minutia, MinutiaKind};
    use crate::rng;

    fn template(id: &str, imp: &str, seed: u64) -> MinutiaeTemplate {
        let mut r = rng::fork(seed, "scores-test", 0);
        let mut t = MinutiaeTemplate::new(200, 200);
        t.identity_id = Some(id.into());
        t.impression_id = Some(imp.into());
        for _ in 0..12 {
            t.minutiae.push(Minutia::new(
                rng::uniform(&mut r, 20.0, 180.0),
                rng::uniform(&mut r, 20.0, 180.0),
                rng::uniform(&mut r, 0.0, 360.0),
                MinutiaKind::Termination,
            ));
        }
        t
    }

    #[test]
    fn single_template_gives_empty_distribution() {
        let t = vec![template("a", "0", 1)];
        let d = score_distributions(&t, PairMode::ImpostorAllPairs, &MatcherConfig::default())
            .unwrap();
        assert!(d.pairs.is_empty());
        assert_eq!(d.summary().count, 0);
    }

    #[test]
    fn impostor_pair_count_is_k_choose_2_for_unique_identities() {
        let t: Vec<_> = (0..6).map(|i| template(&format!("id{i}"), "0", i as u64)).collect();
        let d = score_distributions(&t, PairMode::ImpostorAllPairs, &MatcherConfig::default())
            .unwrap();
        assert_eq!(d.pairs.len(), 15);
    }

    #[test]
    fn genuine_mode_errors_without_repeated_identity() {
        let t: Vec<_> = (0..3).map(|i| template(&format!("id{i}"), "0", i as u64)).collect();
        let err = score_distributions(&t, PairMode::GenuineWithinIdentity, &MatcherConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn genuine_scores_exceed_impostor_scores_for_jittered_copies() {
        let mut all = Vec::new();
        for i in 0..5 {
            let base = template(&format!("id{i}"), "0", 40 + i as u64);
            let mut second = base.transformed(2.0, 1.5, -1.0);
            second.impression_id = Some("1".into());
            all.push(base);
            all.push(second);
        }
        let cfg = MatcherConfig::default();
        let gen = score_distributions(&all, PairMode::GenuineWithinIdentity, &cfg).unwrap();
        let imp = score_distributions(&all, PairMode::ImpostorAllPairs, &cfg).unwrap();
        assert_eq!(gen.pairs.len(), 5);
        assert_eq!(imp.pairs.len(), 45 - 5);
        assert!(gen.summary().mean > imp.summary().mean);
    }
}
