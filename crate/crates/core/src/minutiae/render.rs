//! Minutiae-map rendering: oriented strokes per type channel plus Gaussian
//! smoothing.

use super::{MinutiaeMap, MinutiaeTemplate};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Renders the three-channel minutiae map.
///
/// Each minutia contributes a symmetric segment of `line_len` pixels centered
/// on its position and oriented along its direction, written with value 1.0
/// into the channel of its kind (overlaps saturate at 1.0, so rendering is
/// invariant to minutiae order). A pixel is lit exactly when the closed unit
/// square centered on it intersects the segment. With `sigma > 0` each channel
/// is then convolved with a normalized Gaussian kernel truncated at three
/// standard deviations, zero-padded at the borders.
pub fn render_minutiae_map(
    template: &MinutiaeTemplate,
    line_len: f64,
    sigma: f64,
) -> Result<MinutiaeMap> {
    if !(line_len > 0.0) {
        return Err(Error::invalid(format!("line_len must be > 0, got {line_len}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    template.validate()?;

    let (h, w) = (template.height as usize, template.width as usize);
    let mut map = MinutiaeMap::zeros(h, w);

    let half = (line_len - 1.0) / 2.0;
    for m in &template.minutiae {
        let (ux, uy) = m.direction();
        let p0 = (m.x - half * ux, m.y - half * uy);
        let p1 = (m.x + half * ux, m.y + half * uy);
        let c = m.kind.channel();
        for (px, py) in stroke_pixels(p0, p1, w, h) {
            map.data[[py, px, c]] = 1.0;
        }
    }

    if sigma > 0.0 {
        let kernel = gaussian_kernel(sigma);
        for c in 0..3 {
            let channel = map.data.index_axis(ndarray::Axis(2), c).to_owned();
            let smoothed = convolve_separable(&channel, &kernel);
            map.data
                .index_axis_mut(ndarray::Axis(2), c)
                .assign(&smoothed);
        }
    }
    Ok(map)
}

/// Pixels whose closed unit square `[x-0.5, x+0.5] x [y-0.5, y+0.5]`
/// intersects the segment `p0..p1`, clipped to the image.
fn stroke_pixels(p0: (f64, f64), p1: (f64, f64), w: usize, h: usize) -> Vec<(usize, usize)> {
    let xmin = (p0.0.min(p1.0) - 0.5).floor().max(0.0) as usize;
    let xmax = (p0.0.max(p1.0) + 0.5).ceil().min(w as f64 - 1.0) as usize;
    let ymin = (p0.1.min(p1.1) - 0.5).floor().max(0.0) as usize;
    let ymax = (p0.1.max(p1.1) + 0.5).ceil().min(h as f64 - 1.0) as usize;

    let mut out = Vec::new();
    if xmin > xmax || ymin > ymax {
        return out;
    }
    for py in ymin..=ymax {
        for px in xmin..=xmax {
            if segment_hits_unit_square(p0, p1, px as f64, py as f64) {
                out.push((px, py));
            }
        }
    }
    out
}

/// Slab-clipping test of segment vs the closed square centered at `(cx, cy)`.
pub(crate) fn segment_hits_unit_square(p0: (f64, f64), p1: (f64, f64), cx: f64, cy: f64) -> bool {
    let (lo, hi) = ((cx - 0.5, cy - 0.5), (cx + 0.5, cy + 0.5));
    let d = (p1.0 - p0.0, p1.1 - p0.1);
    let mut tmin = 0.0f64;
    let mut tmax = 1.0f64;
    for axis in 0..2 {
        let (p, dd, l, hh) = if axis == 0 {
            (p0.0, d.0, lo.0, hi.0)
        } else {
            (p0.1, d.1, lo.1, hi.1)
        };
        if dd.abs() < 1e-12 {
            if p < l || p > hh {
                return false;
            }
        } else {
            let mut t1 = (l - p) / dd;
            let mut t2 = (hh - p) / dd;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            tmin = tmin.max(t1);
            tmax = tmax.min(t2);
            if tmin > tmax {
                return false;
            }
        }
    }
    true
}

/// Normalized 1-D Gaussian, truncated at ceil(3 sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable 2-D convolution with zero padding.
pub fn convolve_separable(img: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let r = kernel.len() / 2;
    let mut tmp = Array2::<f64>::zeros((h, w));
    // horizontal
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sx = x as isize + i as isize - r as isize;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * img[[y, sx as usize]];
                }
            }
            tmp[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    // vertical
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sy = y as isize + i as isize - r as isize;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * tmp[[sy as usize, x]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::{Minutia, MinutiaKind};

    #[test]
    fn empty_template_renders_all_zero() {
        let t = MinutiaeTemplate::new(64, 48);
        let map = render_minutiae_map(&t, 15.0, 9.0).unwrap();
        assert_eq!(map.data.shape(), &[48, 64, 3]);
        assert!(map.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn horizontal_termination_lights_exactly_fifteen_pixels() {
        let mut t = MinutiaeTemplate::new(200, 200);
        t.minutiae
            .push(Minutia::new(100.0, 100.0, 0.0, MinutiaKind::Termination));
        let map = render_minutiae_map(&t, 15.0, 0.0).unwrap();
        for y in 0..200 {
            for x in 0..200 {
                let expect = if y == 100 && (93..=107).contains(&x) { 1.0 } else { 0.0 };
                assert_eq!(map.data[[y, x, 1]], expect, "pixel ({x},{y})");
                assert_eq!(map.data[[y, x, 0]], 0.0);
                assert_eq!(map.data[[y, x, 2]], 0.0);
            }
        }
    }

    #[test]
    fn rejects_out_of_bounds_minutia() {
        let mut t = MinutiaeTemplate::new(32, 32);
        t.minutiae
            .push(Minutia::new(40.0, 10.0, 0.0, MinutiaKind::Bifurcation));
        assert!(render_minutiae_map(&t, 15.0, 9.0).is_err());
    }

    #[test]
    fn channel_purity_per_kind() {
        for (kind, chan) in [
            (MinutiaKind::Bifurcation, 0),
            (MinutiaKind::Termination, 1),
            (MinutiaKind::Singular, 2),
        ] {
            let mut t = MinutiaeTemplate::new(64, 64);
            t.minutiae.push(Minutia::new(32.0, 32.0, 45.0, kind));
            let map = render_minutiae_map(&t, 15.0, 0.0).unwrap();
            for c in 0..3 {
                let mass = map.channel_mass(c);
                if c == chan {
                    assert!(mass > 0.0);
                } else {
                    assert_eq!(mass, 0.0);
                }
            }
        }
    }

    #[test]
    fn smoothing_conserves_interior_mass() {
        let mut t = MinutiaeTemplate::new(128, 128);
        t.minutiae
            .push(Minutia::new(64.0, 64.0, 30.0, MinutiaKind::Termination));
        let raw = render_minutiae_map(&t, 15.0, 0.0).unwrap();
        let smooth = render_minutiae_map(&t, 15.0, 9.0).unwrap();
        let m0 = raw.channel_mass(1);
        let m1 = smooth.channel_mass(1);
        assert!((m1 - m0).abs() / m0 < 0.02, "mass {m0} vs {m1}");
    }

    #[test]
    fn rotation_by_180_about_center_matches_rotated_map() {
        let mut t = MinutiaeTemplate::new(96, 96);
        t.minutiae.push(Minutia::new(30.0, 40.25, 37.0, MinutiaKind::Bifurcation));
        t.minutiae.push(Minutia::new(70.5, 22.0, 211.0, MinutiaKind::Termination));
        let rotated = t.transformed(180.0, 0.0, 0.0);
        assert_eq!(rotated.minutiae.len(), t.minutiae.len());
        let m1 = render_minutiae_map(&t, 15.0, 0.0).unwrap();
        let m2 = render_minutiae_map(&rotated, 15.0, 0.0).unwrap();
        // compare m2 against m1 rotated by 180 (pixel (x,y) -> (w-1-x, h-1-y)),
        // allowing 1 px of rasterization slack via dilation.
        let mut mismatches = 0;
        for c in 0..3 {
            for y in 0..96usize {
                for x in 0..96usize {
                    let v2 = m2.data[[y, x, c]];
                    let (ry, rx) = (95 - y, 95 - x);
                    let mut near = false;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (yy, xx) = (ry as i64 + dy, rx as i64 + dx);
                            if (0..96).contains(&yy) && (0..96).contains(&xx)
                                && m1.data[[yy as usize, xx as usize, c]] == 1.0
                            {
                                near = true;
                            }
                        }
                    }
                    if v2 == 1.0 && !near {
                        mismatches += 1;
                    }
                }
            }
        }
        assert_eq!(mismatches, 0);
    }
}
