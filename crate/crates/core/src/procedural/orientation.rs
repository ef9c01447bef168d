//! Zero-pole orientation-field model.

use super::{OrientationField, SingularKind, SingularPoint};
use crate::error::{Error, Result};
use ndarray::Array2;
use std::f64::consts::PI;

/// Evaluates the zero-pole field
/// `angle(z) = base + sum_cores arg(z - z_c)/2 - sum_deltas arg(z - z_d)/2`
/// reduced mod pi, over an ellipse-like fingerprint silhouette.
pub fn zero_pole_orientation(
    points: &[SingularPoint],
    width: usize,
    height: usize,
    base_angle: f64,
) -> Result<OrientationField> {
    let cores = points.iter().filter(|p| p.kind == SingularKind::Core).count();
    let deltas = points.len() - cores;
    if cores > 2 || deltas > 2 {
        return Err(Error::invalid(format!(
            "zero-pole model supports at most 2 cores and 2 deltas, got {cores}/{deltas}"
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.x >= 0.0 && p.x < width as f64 && p.y >= 0.0 && p.y < height as f64) {
            return Err(Error::invalid(format!(
                "singular point {i} at ({}, {}) outside {width}x{height}",
                p.x, p.y
            )));
        }
    }

    let mut angles = Array2::<f64>::zeros((height, width));
    for y in 0..height {
        for x in 0..width {
            angles[[y, x]] = zero_pole_angle(points, x as f64, y as f64, base_angle);
        }
    }
    Ok(OrientationField {
        angles,
        mask: silhouette_mask(width, height),
    })
}

/// Pointwise field value; shared with tests that verify the sampled grid
/// against direct evaluation.
pub fn zero_pole_angle(points: &[SingularPoint], x: f64, y: f64, base_angle: f64) -> f64 {
    let mut angle = base_angle;
    for p in points {
        let arg = (y - p.y).atan2(x - p.x);
        match p.kind {
            SingularKind::Core => angle += 0.5 * arg,
            SingularKind::Delta => angle -= 0.5 * arg,
        }
    }
    angle.rem_euclid(PI)
}

/// Axis-aligned ellipse silhouette with a slightly extended (rounded) bottom.
pub fn silhouette_mask(width: usize, height: usize) -> Array2<bool> {
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (w * 0.5, h * 0.47);
    let rx = w * 0.42;
    let (ry_top, ry_bottom) = (h * 0.43, h * 0.49);
    let mut mask = Array2::from_elem((height, width), false);
    for y in 0..height {
        for x in 0..width {
            let dx = (x as f64 - cx) / rx;
            let ry = if (y as f64) < cy { ry_top } else { ry_bottom };
            let dy = (y as f64 - cy) / ry;
            mask[[y, x]] = dx * dx + dy * dy <= 1.0;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_singularities_gives_constant_field() {
        let f = zero_pole_orientation(&[], 64, 64, 0.3).unwrap();
        assert!(f.angles.iter().all(|a| (a - 0.3).abs() < 1e-12));
    }

    #[test]
    fn core_and_delta_at_same_location_cancel() {
        let p = [
            SingularPoint { x: 20.0, y: 20.0, kind: SingularKind::Core },
            SingularPoint { x: 20.0, y: 20.0, kind: SingularKind::Delta },
        ];
        let f = zero_pole_orientation(&p, 48, 48, 0.1).unwrap();
        let base = zero_pole_orientation(&[], 48, 48, 0.1).unwrap();
        for (a, b) in f.angles.iter().zip(base.angles.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_core_antipodal_points_differ_by_half_pi() {
        // Direct evaluation of the formula: east of the core arg = 0, west
        // arg = pi, so the field values differ by pi/2 (mod pi). The half
        // winding index is exactly what makes the field well defined mod pi:
        // a full 2*pi branch change contributes pi = 0 (mod pi).
        let p = [SingularPoint { x: 32.0, y: 32.0, kind: SingularKind::Core }];
        let east = zero_pole_angle(&p, 52.0, 32.0, 0.0);
        let west = zero_pole_angle(&p, 12.0, 32.0, 0.0);
        assert!((east - 0.0).abs() < 1e-12, "east {east}");
        let diff = (west - east).rem_euclid(PI);
        assert!((diff - PI / 2.0).abs() < 1e-12, "diff {diff}");
        // branch invariance: adding 2*pi to one arg leaves the value mod pi
        let shifted = (east + 0.5 * 2.0 * PI).rem_euclid(PI);
        assert!((shifted - east.rem_euclid(PI)).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_bounds_singularity() {
        let p = [SingularPoint { x: 100.0, y: 10.0, kind: SingularKind::Core }];
        assert!(zero_pole_orientation(&p, 64, 64, 0.0).is_err());
    }

    #[test]
    fn grid_matches_direct_formula_evaluation() {
        let p = [
            SingularPoint { x: 30.0, y: 25.0, kind: SingularKind::Core },
            SingularPoint { x: 40.0, y: 50.0, kind: SingularKind::Delta },
        ];
        let f = zero_pole_orientation(&p, 64, 64, 0.0).unwrap();
        for y in (0..64).step_by(7) {
            for x in (0..64).step_by(7) {
                let direct = zero_pole_angle(&p, x as f64, y as f64, 0.0);
                assert!((f.angles[[y, x]] - direct).abs() < 1e-9);
            }
        }
    }
}
