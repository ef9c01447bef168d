//! Minimal plot emission: histogram heatmaps and log-scale score histograms
//! rendered directly to grayscale PNGs.

use super::Histogram2D;
use crate::error::Result;
use crate::imageio::save_png_gray;
use crate::minutiae::GrayscaleImage;
use ndarray::Array2;
use std::path::Path;

/// Renders the 10x10 histogram as an upscaled heatmap (dark = dense).
pub fn save_histogram_heatmap(h: &Histogram2D, path: impl AsRef<Path>) -> Result<()> {
    let cell = 24usize;
    let n = h.bins.nrows();
    let peak = h.bins.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    let mut img = Array2::<f64>::from_elem((n * cell, n * cell), 1.0);
    for r in 0..n {
        for c in 0..h.bins.ncols() {
            let v = 1.0 - h.bins[[r, c]] / peak;
            for y in 0..cell {
                for x in 0..cell {
                    img[[r * cell + y, c * cell + x]] = v;
                }
            }
        }
    }
    save_png_gray(&GrayscaleImage { data: img }, path)
}

/// Bar plot of score density with log-scaled bar heights.
pub fn save_score_histogram(
    scores: &[f64],
    bins: usize,
    max_score: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    for s in scores {
        let b = ((s / max_score) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let heights: Vec<f64> = counts.iter().map(|c| (1.0 + *c as f64).ln()).collect();
    let peak = heights.iter().cloned().fold(1e-12f64, f64::max);

    let (plot_h, bar_w) = (120usize, 6usize);
    let mut img = Array2::<f64>::from_elem((plot_h, bins * bar_w), 1.0);
    for (b, hgt) in heights.iter().enumerate() {
        let filled = ((hgt / peak) * (plot_h - 1) as f64).round() as usize;
        for y in 0..filled {
            for x in 0..bar_w - 1 {
                img[[plot_h - 1 - y, b * bar_w + x]] = 0.2;
            }
        }
    }
    save_png_gray(&GrayscaleImage { data: img }, path)
}
