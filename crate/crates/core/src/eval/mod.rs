//! Realism metrics: 2D minutiae histograms, exact earth mover's distance,
//! Fréchet feature distance and matcher score distributions.

mod emd;
mod frechet;
mod histogram;
mod plots;
mod scores;

pub use emd::{emd, emd_with_metric, GroundMetric};
pub use frechet::frechet_distance;
pub use histogram::{compute_2dmh, compute_2dmh_with, Histogram2dConfig};
pub use plots::{save_histogram_heatmap, save_score_histogram};
pub use scores::{score_distributions, PairMode, ScoreDistribution, ScoreSummary, ScoredPair};

use ndarray::Array2;

pub const HIST_BINS: usize = 10;

/// Normalized 10x10 minutiae-pair histogram; rows are distance bins
/// (20 px wide, up to 200 px), columns angle-difference bins (18 degrees,
/// mirrored above 180).
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub bins: Array2<f64>,
    /// Raw pair count accumulated before normalization.
    pub counts_total: u64,
}

impl Histogram2D {
    pub fn zero() -> Self {
        Histogram2D {
            bins: Array2::zeros((HIST_BINS, HIST_BINS)),
            counts_total: 0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.bins.sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-9
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..HIST_BINS {
            let row: Vec<String> = (0..HIST_BINS)
                .map(|c| format!("{:.9}", self.bins[[r, c]]))
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}
