//! Minutiae domain types, map rendering and the classical extractor.
//!
//! Conventions used throughout the workspace:
//! - pixel coordinates are `(x, y)` with `x` the column and `y` the row,
//!   `y` increasing downwards;
//! - minutia directions `theta` are degrees in `[0, 360)`, measured from the
//!   +x axis towards +y (rendered strokes are symmetric segments, so the map
//!   is invariant to the theta vs theta+180 ambiguity).

mod extract;
mod io;
mod render;

pub use extract::{extract_minutiae, ExtractorConfig};
pub use io::{read_template, write_template};
pub use render::render_minutiae_map;

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinutiaKind {
    Bifurcation,
    Termination,
    Singular,
}

impl MinutiaKind {
    /// Channel of the minutiae map holding this kind.
    pub fn channel(self) -> usize {
        match self {
            MinutiaKind::Bifurcation => 0,
            MinutiaKind::Termination => 1,
            MinutiaKind::Singular => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MinutiaKind::Bifurcation => "bifurcation",
            MinutiaKind::Termination => "termination",
            MinutiaKind::Singular => "singular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    /// Direction in degrees, `[0, 360)`.
    pub theta_deg: f64,
    pub kind: MinutiaKind,
}

impl Minutia {
    pub fn new(x: f64, y: f64, theta_deg: f64, kind: MinutiaKind) -> Self {
        Minutia {
            x,
            y,
            theta_deg: theta_deg.rem_euclid(360.0),
            kind,
        }
    }

    /// Unit direction vector in (x, y-down) pixel coordinates.
    pub fn direction(&self) -> (f64, f64) {
        let r = self.theta_deg.to_radians();
        (r.cos(), r.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinutiaeTemplate {
    pub width: u32,
    pub height: u32,
    pub identity_id: Option<String>,
    pub impression_id: Option<String>,
    pub minutiae: Vec<Minutia>,
}

impl MinutiaeTemplate {
    pub fn new(width: u32, height: u32) -> Self {
        MinutiaeTemplate {
            width,
            height,
            ..Default::default()
        }
    }

    /// Checks every minutia lies in `[0,width) x [0,height)` with a valid angle.
    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.minutiae.iter().enumerate() {
            if !(m.x >= 0.0 && m.x < self.width as f64 && m.y >= 0.0 && m.y < self.height as f64) {
                return Err(Error::invalid(format!(
                    "minutia {} at ({}, {}) outside image bounds {}x{}",
                    i, m.x, m.y, self.width, self.height
                )));
            }
            if !(0.0..360.0).contains(&m.theta_deg) || !m.theta_deg.is_finite() {
                return Err(Error::invalid(format!(
                    "minutia {} has direction {} outside [0, 360)",
                    i, m.theta_deg
                )));
            }
        }
        Ok(())
    }

    pub fn count_of(&self, kind: MinutiaKind) -> usize {
        self.minutiae.iter().filter(|m| m.kind == kind).count()
    }

    /// Rotates by `angle_deg` about the image center, then translates by
    /// `(tx, ty)`. Minutiae falling outside the bounds are dropped.
    pub fn transformed(&self, angle_deg: f64, tx: f64, ty: f64) -> MinutiaeTemplate {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let r = angle_deg.to_radians();
        let (cos, sin) = (r.cos(), r.sin());
        let minutiae = self
            .minutiae
            .iter()
            .filter_map(|m| {
                let (dx, dy) = (m.x - cx, m.y - cy);
                let x = cx + cos * dx - sin * dy + tx;
                let y = cy + sin * dx + cos * dy + ty;
                let inside =
                    x >= 0.0 && x < self.width as f64 && y >= 0.0 && y < self.height as f64;
                inside.then(|| Minutia::new(x, y, m.theta_deg + angle_deg, m.kind))
            })
            .collect();
        MinutiaeTemplate {
            width: self.width,
            height: self.height,
            identity_id: self.identity_id.clone(),
            impression_id: self.impression_id.clone(),
            minutiae,
        }
    }
}

/// H x W x 3 real tensor; channel 0 bifurcations, 1 terminations, 2 singular.
#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaeMap {
    pub data: Array3<f64>,
}

impl MinutiaeMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        MinutiaeMap {
            data: Array3::zeros((height, width, 3)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channel_mass(&self, channel: usize) -> f64 {
        self.data.index_axis(ndarray::Axis(2), channel).sum()
    }
}

/// H x W grayscale image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleImage {
    pub data: Array2<f64>,
}

impl GrayscaleImage {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid(
                "grayscale image values must be finite and in [0, 1]",
            ));
        }
        Ok(GrayscaleImage { data })
    }

    /// Constructs clamping out-of-range values instead of rejecting them.
    pub fn from_clamped(mut data: Array2<f64>) -> Self {
        data.mapv_inplace(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
        GrayscaleImage { data }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        GrayscaleImage {
            data: Array2::from_elem((height, width), value.clamp(0.0, 1.0)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_pure_translation_shifts_minutiae_exactly() {
        let mut t = MinutiaeTemplate::new(128, 128);
        t.minutiae.push(Minutia::new(30.0, 40.0, 90.0, MinutiaKind::Termination));
        t.minutiae.push(Minutia::new(60.0, 80.0, 10.0, MinutiaKind::Bifurcation));
        let moved = t.transformed(0.0, 4.0, 0.0);
        assert_eq!(moved.minutiae.len(), 2);
        for (a, b) in t.minutiae.iter().zip(moved.minutiae.iter()) {
            assert_eq!(b.x, a.x + 4.0);
            assert_eq!(b.y, a.y);
            assert_eq!(b.theta_deg, a.theta_deg);
        }
    }

    #[test]
    fn transform_drops_out_of_bounds() {
        let mut t = MinutiaeTemplate::new(64, 64);
        t.minutiae.push(Minutia::new(62.0, 32.0, 0.0, MinutiaKind::Termination));
        let moved = t.transformed(0.0, 4.0, 0.0);
        assert!(moved.minutiae.is_empty());
    }

    #[test]
    fn validate_rejects_out_of_bounds() {
        let mut t = MinutiaeTemplate::new(10, 10);
        t.minutiae.push(Minutia::new(10.0, 5.0, 0.0, MinutiaKind::Singular));
        assert!(t.validate().is_err());
    }
}
