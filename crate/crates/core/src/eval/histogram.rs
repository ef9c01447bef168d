//! 2D minutiae histogram (distance x angle difference).

use super::{Histogram2D, HIST_BINS};
use crate::minutiae::MinutiaeTemplate;
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct Histogram2dConfig {
    /// Pairs at or beyond this distance are excluded (half-open bins).
    pub max_distance: f64,
    pub distance_bin_width: f64,
    pub angle_bin_width_deg: f64,
    /// Average per-template histograms instead of pooling all pairs.
    pub per_template_average: bool,
}

impl Default for Histogram2dConfig {
    fn default() -> Self {
        Histogram2dConfig {
            max_distance: 200.0,
            distance_bin_width: 20.0,
            angle_bin_width_deg: 18.0,
            per_template_average: false,
        }
    }
}

pub fn compute_2dmh(templates: &[MinutiaeTemplate]) -> Histogram2D {
    compute_2dmh_with(templates, &Histogram2dConfig::default())
}

/// Accumulates all unordered within-template minutiae pairs.
///
/// `d` is the Euclidean pixel distance (included only when `d < max`),
/// `alpha` the absolute direction difference folded to `[0, 180]`. Bins are
/// half-open, with `alpha = 180` clamped into the last angle bin.
pub fn compute_2dmh_with(templates: &[MinutiaeTemplate], cfg: &Histogram2dConfig) -> Histogram2D {
    let mut pooled = Array2::<f64>::zeros((HIST_BINS, HIST_BINS));
    let mut total: u64 = 0;
    let mut averaged_templates = 0usize;

    for t in templates {
        let mut local = Array2::<f64>::zeros((HIST_BINS, HIST_BINS));
        let mut local_count: u64 = 0;
        let m = &t.minutiae;
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let d = ((m[i].x - m[j].x).powi(2) + (m[i].y - m[j].y).powi(2)).sqrt();
                if d >= cfg.max_distance {
                    continue;
                }
                let mut alpha = (m[i].theta_deg - m[j].theta_deg).rem_euclid(360.0);
                if alpha > 180.0 {
                    alpha = 360.0 - alpha;
                }
                let row = (d / cfg.distance_bin_width).floor() as usize;
                let col = ((alpha / cfg.angle_bin_width_deg).floor() as usize).min(HIST_BINS - 1);
                if row < HIST_BINS {
                    local[[row, col]] += 1.0;
                    local_count += 1;
                }
            }
        }
        total += local_count;
        if cfg.per_template_average {
            if local_count > 0 {
                pooled += &(&local / local_count as f64);
                averaged_templates += 1;
            }
        } else {
            pooled += &local;
        }
    }

    let norm = if cfg.per_template_average {
        averaged_templates as f64
    } else {
        total as f64
    };
    if norm > 0.0 {
        pooled /= norm;
    }
    Histogram2D { bins: pooled, counts_total: total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::{Minutia, MinutiaKind};

    fn template_with(minutiae: Vec<Minutia>) -> MinutiaeTemplate {
        MinutiaeTemplate {
            width: 512,
            height: 512,
            minutiae,
            ..Default::default()
        }
    }

    #[test]
    fn single_minutia_gives_zero_histogram() {
        let t = template_with(vec![Minutia::new(10.0, 10.0, 0.0, MinutiaKind::Termination)]);
        let h = compute_2dmh(&[t]);
        assert_eq!(h.sum(), 0.0);
        assert_eq!(h.counts_total, 0);
    }

    #[test]
    fn two_minutiae_land_in_expected_bin() {
        let t = template_with(vec![
            Minutia::new(0.0, 0.0, 0.0, MinutiaKind::Termination),
            Minutia::new(50.0, 0.0, 30.0, MinutiaKind::Bifurcation),
        ]);
        let h = compute_2dmh(&[t]);
        // d = 50 -> row 2; alpha = 30 -> col 1
        assert_eq!(h.bins[[2, 1]], 1.0);
        assert_eq!(h.sum(), 1.0);
        assert_eq!(h.counts_total, 1);
    }

    #[test]
    fn angle_difference_mirrors_above_180() {
        let t = template_with(vec![
            Minutia::new(0.0, 0.0, 355.0, MinutiaKind::Termination),
            Minutia::new(10.0, 0.0, 5.0, MinutiaKind::Termination),
        ]);
        // |355 - 5| mod 360 = 350, folded to 10 -> angle bin 0
        let h = compute_2dmh(&[t]);
        assert_eq!(h.bins[[0, 0]], 1.0);
    }

    #[test]
    fn boundary_distances_follow_half_open_bins() {
        let cases = [
            (19.999, Some(0)),
            (20.0, Some(1)),
            (199.999, Some(9)),
            (200.0, None),
        ];
        for (d, row) in cases {
            let t = template_with(vec![
                Minutia::new(0.0, 0.0, 0.0, MinutiaKind::Termination),
                Minutia::new(d, 0.0, 0.0, MinutiaKind::Termination),
            ]);
            let h = compute_2dmh(&[t]);
            match row {
                Some(r) => {
                    assert_eq!(h.bins[[r, 0]], 1.0, "d = {d}");
                }
                None => assert_eq!(h.sum(), 0.0, "d = {d}"),
            }
        }
    }

    #[test]
    fn boundary_angles_follow_stated_convention() {
        for (alpha, col) in [(179.9, 9), (180.0, 9)] {
            let t = template_with(vec![
                Minutia::new(0.0, 0.0, 0.0, MinutiaKind::Termination),
                Minutia::new(10.0, 0.0, alpha, MinutiaKind::Termination),
            ]);
            let h = compute_2dmh(&[t]);
            assert_eq!(h.bins[[0, col]], 1.0, "alpha = {alpha}");
        }
    }

    #[test]
    fn pooled_histogram_normalizes_across_templates() {
        let t1 = template_with(vec![
            Minutia::new(0.0, 0.0, 0.0, MinutiaKind::Termination),
            Minutia::new(10.0, 0.0, 0.0, MinutiaKind::Termination),
        ]);
        let t2 = template_with(vec![
            Minutia::new(0.0, 0.0, 0.0, MinutiaKind::Termination),
            Minutia::new(0.0, 30.0, 90.0, MinutiaKind::Termination),
            Minutia::new(0.0, 60.0, 90.0, MinutiaKind::Termination),
        ]);
        let h = compute_2dmh(&[t1, t2]);
        assert_eq!(h.counts_total, 4);
        assert!((h.sum() - 1.0).abs() < 1e-12);
    }
}
