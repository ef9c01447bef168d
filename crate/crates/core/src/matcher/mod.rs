//! Classical minutiae matcher: exhaustive coarse rotation search with
//! Hough-style translation voting, greedy one-to-one pairing and a
//! normalized [0, 100] score.

mod experiments;

pub use experiments::{
    identification_experiment, verification_experiment, IdentificationResult, VerificationRow,
    VerificationTable,
};

use crate::minutiae::MinutiaeTemplate;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct MatcherConfig {
    pub max_rotation_deg: f64,
    pub rotation_step_deg: f64,
    /// Paired minutiae must lie within this distance after alignment (px).
    pub distance_tolerance: f64,
    /// ... and within this direction difference (degrees, mod 360).
    pub angle_tolerance_deg: f64,
    /// Require equal minutia kinds when pairing.
    pub strict_type: bool,
    /// Translation vote quantization (px).
    pub hough_bin: f64,
    /// Translation candidates evaluated per rotation.
    pub top_bins: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            max_rotation_deg: 30.0,
            rotation_step_deg: 3.0,
            distance_tolerance: 12.0,
            angle_tolerance_deg: 20.0,
            strict_type: false,
            hough_bin: 8.0,
            top_bins: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScore {
    /// `100 * matched_count^2 / (|A| * |B|)`, in [0, 100].
    pub score: f64,
    pub matched_count: usize,
    /// Estimated alignment applied to the first template (degrees).
    pub rotation_deg: f64,
    /// Estimated translation applied after rotation (px).
    pub translation: (f64, f64),
}

impl MatchScore {
    fn empty() -> Self {
        MatchScore { score: 0.0, matched_count: 0, rotation_deg: 0.0, translation: (0.0, 0.0) }
    }
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Clone, Copy)]
struct Pt {
    x: f64,
    y: f64,
    theta: f64,
    kind: u8,
}

fn points_of(t: &MinutiaeTemplate) -> Vec<Pt> {
    t.minutiae
        .iter()
        .map(|m| Pt { x: m.x, y: m.y, theta: m.theta_deg, kind: m.kind.channel() as u8 })
        .collect()
}

/// Compares two templates. Symmetric by construction:
/// `match_templates(a, b).score == match_templates(b, a).score`.
pub fn match_templates(
    a: &MinutiaeTemplate,
    b: &MinutiaeTemplate,
    config: &MatcherConfig,
) -> MatchScore {
    if a.minutiae.is_empty() || b.minutiae.is_empty() {
        return MatchScore::empty();
    }
    let fwd = directed_match(a, b, config);
    let bwd = directed_match(b, a, config);
    let (count, rotation_deg, translation) = if bwd.0 > fwd.0 {
        // report the transform in a->b orientation
        let (c, r, (tx, ty)) = bwd;
        let rad = (-r).to_radians();
        let (sin, cos) = (rad.sin(), rad.cos());
        (c, -r, (-(cos * tx - sin * ty), -(sin * tx + cos * ty)))
    } else {
        fwd
    };
    let score = 100.0 * (count * count) as f64 / (a.minutiae.len() * b.minutiae.len()) as f64;
    MatchScore { score, matched_count: count, rotation_deg, translation }
}

/// Best greedy pairing of `a` onto `b` over the rotation grid; returns
/// (count, rotation, translation).
fn directed_match(
    a: &MinutiaeTemplate,
    b: &MinutiaeTemplate,
    cfg: &MatcherConfig,
) -> (usize, f64, (f64, f64)) {
    let pa = points_of(a);
    let pb = points_of(b);
    let (cx, cy) = (a.width as f64 / 2.0, a.height as f64 / 2.0);

    let mut best = (0usize, 0.0f64, (0.0f64, 0.0f64));
    let mut best_rot_abs = f64::INFINITY;

    let steps = (cfg.max_rotation_deg / cfg.rotation_step_deg).round() as i64;
    for s in -steps..=steps {
        let rot = s as f64 * cfg.rotation_step_deg;
        let rad = rot.to_radians();
        let (sin, cos) = (rad.sin(), rad.cos());
        let rotated: Vec<Pt> = pa
            .iter()
            .map(|p| {
                let (dx, dy) = (p.x - cx, p.y - cy);
                Pt {
                    x: cx + cos * dx - sin * dy,
                    y: cy + sin * dx + cos * dy,
                    theta: (p.theta + rot).rem_euclid(360.0),
                    kind: p.kind,
                }
            })
            .collect();

        // translation votes from angle-compatible candidate pairings
        let mut votes: HashMap<(i64, i64), u32> = HashMap::new();
        for ra in &rotated {
            for qb in &pb {
                if !kind_ok(ra, qb, cfg) || angle_diff_deg(ra.theta, qb.theta) > cfg.angle_tolerance_deg
                {
                    continue;
                }
                let t = (qb.x - ra.x, qb.y - ra.y);
                let bin = (
                    (t.0 / cfg.hough_bin).floor() as i64,
                    (t.1 / cfg.hough_bin).floor() as i64,
                );
                *votes.entry(bin).or_default() += 1;
            }
        }
        let mut bins: Vec<((i64, i64), u32)> = votes.into_iter().collect();
        bins.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        bins.truncate(cfg.top_bins);

        for (bin, _) in bins {
            let t0 = (
                (bin.0 as f64 + 0.5) * cfg.hough_bin,
                (bin.1 as f64 + 0.5) * cfg.hough_bin,
            );
            let (count0, matched) = greedy_count(&rotated, &pb, t0, cfg);
            let mut cand = (count0, t0);
            if !matched.is_empty() {
                // refine translation to the mean residual of the inliers
                let mut sx = 0.0;
                let mut sy = 0.0;
                for &(i, j) in &matched {
                    sx += pb[j].x - rotated[i].x;
                    sy += pb[j].y - rotated[i].y;
                }
                let t1 = (sx / matched.len() as f64, sy / matched.len() as f64);
                let (count1, _) = greedy_count(&rotated, &pb, t1, cfg);
                if count1 > cand.0 {
                    cand = (count1, t1);
                }
            }
            let better = cand.0 > best.0
                || (cand.0 == best.0 && cand.0 > 0 && rot.abs() < best_rot_abs);
            if better {
                best = (cand.0, rot, cand.1);
                best_rot_abs = rot.abs();
            }
        }
    }
    best
}

fn kind_ok(a: &Pt, b: &Pt, cfg: &MatcherConfig) -> bool {
    !cfg.strict_type || a.kind == b.kind
}

/// Greedy nearest-pair one-to-one matching under the given translation.
fn greedy_count(
    rotated: &[Pt],
    pb: &[Pt],
    t: (f64, f64),
    cfg: &MatcherConfig,
) -> (usize, Vec<(usize, usize)>) {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    let tol2 = cfg.distance_tolerance * cfg.distance_tolerance;
    for (i, ra) in rotated.iter().enumerate() {
        let (ax, ay) = (ra.x + t.0, ra.y + t.1);
        for (j, qb) in pb.iter().enumerate() {
            if !kind_ok(ra, qb, cfg) || angle_diff_deg(ra.theta, qb.theta) > cfg.angle_tolerance_deg
            {
                continue;
            }
            let d2 = (ax - qb.x).powi(2) + (ay - qb.y).powi(2);
            if d2 <= tol2 {
                cands.push((d2, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut used_a = vec![false; rotated.len()];
    let mut used_b = vec![false; pb.len()];
    let mut matched = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched.push((i, j));
        }
    }
    (matched.len(), matched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::{Minutia, MinutiaKind};
    use crate::rng;
    use rand::Rng;

    fn random_template(n: usize, seed: u64) -> MinutiaeTemplate {
        let mut r = rng::fork(seed, "matcher-test", 0);
        let mut t = MinutiaeTemplate::new(256, 256);
        for _ in 0..n {
            t.minutiae.push(Minutia::new(
                rng::uniform(&mut r, 40.0, 216.0),
                rng::uniform(&mut r, 40.0, 216.0),
                rng::uniform(&mut r, 0.0, 360.0),
                if r.random::<f64>() < 0.5 { MinutiaKind::Termination } else { MinutiaKind::Bifurcation },
            ));
        }
        t
    }

    #[test]
    fn self_match_is_perfect() {
        let t = random_template(20, 1);
        let m = match_templates(&t, &t, &MatcherConfig::default());
        assert_eq!(m.matched_count, 20);
        assert!((m.score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_template_scores_zero_without_error() {
        let t = random_template(10, 2);
        let empty = MinutiaeTemplate::new(256, 256);
        let m = match_templates(&t, &empty, &MatcherConfig::default());
        assert_eq!(m.matched_count, 0);
        assert_eq!(m.score, 0.0);
    }

    #[test]
    fn disjoint_far_templates_score_zero() {
        let mut a = MinutiaeTemplate::new(512, 512);
        let mut b = MinutiaeTemplate::new(512, 512);
        // clusters further apart than any rotation+translation in the search
        // can reconcile while keeping internal geometry
        for i in 0..5 {
            a.minutiae.push(Minutia::new(20.0 + 3.0 * i as f64, 20.0, 0.0, MinutiaKind::Termination));
            b.minutiae.push(Minutia::new(480.0, 480.0 - 40.0 * i as f64, 90.0, MinutiaKind::Termination));
        }
        let m = match_templates(&a, &b, &MatcherConfig::default());
        // the translation search CAN slide one cluster onto the other, but the
        // internal geometry (spacing 3 vs 40 px) prevents multi-pair matches
        assert!(m.matched_count <= 1, "count {}", m.matched_count);
    }

    #[test]
    fn rotated_copy_matches_at_least_ninety_percent() {
        let t = random_template(20, 3);
        let rotated = t.transformed(10.0, 0.0, 0.0);
        assert_eq!(rotated.minutiae.len(), 20, "test setup must keep all minutiae");
        let m = match_templates(&t, &rotated, &MatcherConfig::default());
        assert!(m.matched_count >= 18, "count {}", m.matched_count);
        assert!((m.rotation_deg - 9.0).abs() <= 4.0, "rotation {}", m.rotation_deg);
    }

    #[test]
    fn score_is_symmetric() {
        for seed in 0..6 {
            let a = random_template(15, seed * 2 + 10);
            let b = random_template(18, seed * 2 + 11);
            let ab = match_templates(&a, &b, &MatcherConfig::default());
            let ba = match_templates(&b, &a, &MatcherConfig::default());
            assert_eq!(ab.score, ba.score, "seed {seed}");
            assert_eq!(ab.matched_count, ba.matched_count);
        }
    }

    #[test]
    fn translation_invariance() {
        let t = random_template(20, 9);
        let shifted = t.transformed(0.0, 18.0, -12.0);
        assert_eq!(shifted.minutiae.len(), 20);
        let m = match_templates(&t, &shifted, &MatcherConfig::default());
        assert_eq!(m.matched_count, 20);
        assert!((m.score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn matched_count_bounded_by_smaller_template() {
        let a = random_template(8, 21);
        let b = random_template(25, 22);
        let m = match_templates(&a, &b, &MatcherConfig::default());
        assert!(m.matched_count <= 8);
    }
}
