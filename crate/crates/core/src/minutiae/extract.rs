//! Classical minutiae extraction: local-mean binarization, Zhang-Suen
//! thinning, crossing-number classification, tangent-based directions and
//! spurious-minutiae pruning.

use super::{GrayscaleImage, Minutia, MinutiaKind, MinutiaeTemplate};
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct ExtractorConfig {
    /// Gaussian pre-smoothing applied before binarization (0 disables).
    /// Stabilizes the skeleton against resampling noise.
    pub presmooth_sigma: f64,
    /// Box window (pixels) for the local-mean binarization threshold.
    pub binarize_window: usize,
    /// A pixel is ridge when `v < local_mean - binarize_offset`.
    pub binarize_offset: f64,
    /// Local contrast (max-min over the window) required for foreground.
    pub contrast_threshold: f64,
    /// Minimum pairwise distance between reported minutiae (pixels).
    pub min_spacing: f64,
    /// Minimum distance from a minutia to the foreground-mask border (pixels).
    pub border_margin: f64,
    /// Skeleton branches shorter than this are treated as spurs and removed.
    pub min_branch_len: usize,
    /// Connected skeleton components smaller than this are dropped.
    pub min_component: usize,
    /// Steps walked along the skeleton when estimating a direction.
    pub direction_probe: usize,
    /// Same-kind minutiae within this radius collapse to their centroid.
    pub cluster_radius: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            presmooth_sigma: 0.8,
            binarize_window: 16,
            binarize_offset: 0.05,
            contrast_threshold: 0.25,
            min_spacing: 8.0,
            border_margin: 10.0,
            min_branch_len: 6,
            min_component: 12,
            direction_probe: 7,
            cluster_radius: 3.0,
        }
    }
}

/// Extracts a minutiae template from a grayscale fingerprint image.
///
/// Deterministic for a fixed input and config. A blank or constant image
/// yields an empty template.
pub fn extract_minutiae(image: &GrayscaleImage, config: &ExtractorConfig) -> MinutiaeTemplate {
    let (h, w) = image.data.dim();
    let mut template = MinutiaeTemplate::new(w as u32, h as u32);
    if h < 3 || w < 3 {
        return template;
    }

    let smoothed;
    let pixels = if config.presmooth_sigma > 0.0 {
        smoothed = blur_replicate(&image.data, config.presmooth_sigma);
        &smoothed
    } else {
        &image.data
    };
    let (ridge, foreground) = binarize(pixels, config);
    if ridge.iter().all(|v| *v == 0) {
        return template;
    }

    let mut skel = ridge;
    thin_zhang_suen(&mut skel);
    remove_small_components(&mut skel, config.min_component);
    prune_spurs(&mut skel, config.min_branch_len);
    remove_isolated(&mut skel);

    let mut found: Vec<Minutia> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if skel[[y, x]] == 0 {
                continue;
            }
            match crossing_number(&skel, x, y) {
                1 => {
                    if let Some(theta) = termination_direction(&skel, x, y, config.direction_probe)
                    {
                        found.push(Minutia::new(x as f64, y as f64, theta, MinutiaKind::Termination));
                    }
                }
                3 => {
                    let theta = bifurcation_direction(&skel, x, y, config.direction_probe);
                    found.push(Minutia::new(x as f64, y as f64, theta, MinutiaKind::Bifurcation));
                }
                _ => {}
            }
        }
    }

    let clustered = cluster_minutiae(found, config.cluster_radius);
    let pruned = prune_minutiae(clustered, &foreground, config);
    template.minutiae = pruned;
    template
}

/// Separable Gaussian blur with replicate padding (no border darkening).
fn blur_replicate(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let kernel = super::render::gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (h, w) = img.dim();
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1);
                acc += kv * img[[y, sx as usize]];
            }
            tmp[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1);
                acc += kv * tmp[[sy as usize, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Local-mean ridge binarization plus a contrast-based foreground mask.
fn binarize(img: &Array2<f64>, cfg: &ExtractorConfig) -> (Array2<u8>, Array2<u8>) {
    let (h, w) = img.dim();
    let win = cfg.binarize_window.clamp(3, h.min(w));
    let r = win / 2;

    // integral image for box means
    let mut integral = Array2::<f64>::zeros((h + 1, w + 1));
    for y in 0..h {
        for x in 0..w {
            integral[[y + 1, x + 1]] =
                img[[y, x]] + integral[[y, x + 1]] + integral[[y + 1, x]] - integral[[y, x]];
        }
    }
    let box_mean = |x: usize, y: usize| -> f64 {
        let y0 = y.saturating_sub(r);
        let x0 = x.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        let x1 = (x + r + 1).min(w);
        let sum = integral[[y1, x1]] - integral[[y0, x1]] - integral[[y1, x0]] + integral[[y0, x0]];
        sum / ((y1 - y0) * (x1 - x0)) as f64
    };

    let mut ridge = Array2::<u8>::zeros((h, w));
    let mut fg = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mean = box_mean(x, y);
            if img[[y, x]] < mean - cfg.binarize_offset {
                ridge[[y, x]] = 1;
            }
            // local range over the window; cheap scan restricted to the box
            let y0 = y.saturating_sub(r);
            let x0 = x.saturating_sub(r);
            let y1 = (y + r + 1).min(h);
            let x1 = (x + r + 1).min(w);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for yy in (y0..y1).step_by(2) {
                for xx in (x0..x1).step_by(2) {
                    let v = img[[yy, xx]];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if hi - lo > cfg.contrast_threshold {
                fg[[y, x]] = 1;
            }
        }
    }
    (ridge, fg)
}

const N8: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

fn neighbors(skel: &Array2<u8>, x: usize, y: usize) -> [u8; 8] {
    let (h, w) = skel.dim();
    let mut out = [0u8; 8];
    for (i, (dx, dy)) in N8.iter().enumerate() {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
            out[i] = skel[[ny as usize, nx as usize]];
        }
    }
    out
}

/// Half the number of 0->1 transitions around the 8-neighborhood cycle.
fn crossing_number(skel: &Array2<u8>, x: usize, y: usize) -> usize {
    let n = neighbors(skel, x, y);
    let mut transitions = 0;
    for i in 0..8 {
        let a = n[i];
        let b = n[(i + 1) % 8];
        if a != b {
            transitions += 1;
        }
    }
    transitions / 2
}

fn degree(skel: &Array2<u8>, x: usize, y: usize) -> usize {
    neighbors(skel, x, y).iter().map(|v| *v as usize).sum()
}

/// Zhang-Suen iterative thinning to a 1-px skeleton.
fn thin_zhang_suen(grid: &mut Array2<u8>) {
    let (h, w) = grid.dim();
    let mut to_clear: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut changed = false;
        for phase in 0..2 {
            to_clear.clear();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    if grid[[y, x]] == 0 {
                        continue;
                    }
                    // clockwise from north: p2..p9
                    let p2 = grid[[y - 1, x]];
                    let p3 = grid[[y - 1, x + 1]];
                    let p4 = grid[[y, x + 1]];
                    let p5 = grid[[y + 1, x + 1]];
                    let p6 = grid[[y + 1, x]];
                    let p7 = grid[[y + 1, x - 1]];
                    let p8 = grid[[y, x - 1]];
                    let p9 = grid[[y - 1, x - 1]];
                    let ring = [p2, p3, p4, p5, p6, p7, p8, p9];
                    let b: u8 = ring.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let mut a = 0;
                    for i in 0..8 {
                        if ring[i] == 0 && ring[(i + 1) % 8] == 1 {
                            a += 1;
                        }
                    }
                    if a != 1 {
                        continue;
                    }
                    let cond = if phase == 0 {
                        p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                    } else {
                        p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                    };
                    if cond {
                        to_clear.push((x, y));
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &(x, y) in &to_clear {
                    grid[[y, x]] = 0;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn remove_isolated(grid: &mut Array2<u8>) {
    let (h, w) = grid.dim();
    for y in 0..h {
        for x in 0..w {
            if grid[[y, x]] == 1 && degree(grid, x, y) == 0 {
                grid[[y, x]] = 0;
            }
        }
    }
}

fn remove_small_components(grid: &mut Array2<u8>, min_size: usize) {
    let (h, w) = grid.dim();
    let mut seen = Array2::<u8>::zeros((h, w));
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if grid[[y, x]] == 0 || seen[[y, x]] == 1 {
                continue;
            }
            let mut comp = Vec::new();
            stack.push((x, y));
            seen[[y, x]] = 1;
            while let Some((cx, cy)) = stack.pop() {
                comp.push((cx, cy));
                for (dx, dy) in N8 {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                        && grid[[ny as usize, nx as usize]] == 1
                        && seen[[ny as usize, nx as usize]] == 0
                    {
                        seen[[ny as usize, nx as usize]] = 1;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
            if comp.len() < min_size {
                for (cx, cy) in comp {
                    grid[[cy, cx]] = 0;
                }
            }
        }
    }
}

/// Removes endpoint branches shorter than `min_len` (two passes handle spurs
/// revealed by the first).
fn prune_spurs(grid: &mut Array2<u8>, min_len: usize) {
    let (h, w) = grid.dim();
    for _ in 0..2 {
        let mut removals: Vec<Vec<(usize, usize)>> = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                if grid[[y, x]] == 0 || degree(grid, x, y) != 1 {
                    continue;
                }
                // walk from endpoint until junction, end, or min_len steps
                let mut path = vec![(x, y)];
                let (mut cx, mut cy) = (x, y);
                let (mut px, mut py) = (x, y);
                let mut hit_junction = false;
                for _ in 0..min_len {
                    let mut next = None;
                    for (dx, dy) in N8 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if grid[[ny, nx]] == 1 && (nx, ny) != (px, py) && (nx, ny) != (cx, cy) {
                            next = Some((nx, ny));
                            break;
                        }
                    }
                    let Some((nx, ny)) = next else { break };
                    if degree(grid, nx, ny) > 2 {
                        hit_junction = true;
                        break;
                    }
                    px = cx;
                    py = cy;
                    cx = nx;
                    cy = ny;
                    path.push((cx, cy));
                }
                if hit_junction && path.len() < min_len {
                    removals.push(path);
                }
            }
        }
        if removals.is_empty() {
            break;
        }
        for path in removals {
            for (x, y) in path {
                grid[[y, x]] = 0;
            }
        }
    }
}

/// Walks `steps` pixels from `(x, y)` along a degree-<=2 chain; returns the
/// reached point. `first` selects which neighbor to start into.
fn walk(
    skel: &Array2<u8>,
    x: usize,
    y: usize,
    first: (usize, usize),
    steps: usize,
) -> (usize, usize) {
    let (h, w) = skel.dim();
    let mut prev = (x, y);
    let mut cur = first;
    for _ in 1..steps {
        let mut next = None;
        for (dx, dy) in N8 {
            let (nx, ny) = (cur.0 as i64 + dx, cur.1 as i64 + dy);
            if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                continue;
            }
            let cand = (nx as usize, ny as usize);
            if skel[[cand.1, cand.0]] == 1 && cand != prev && cand != (x, y) && cand != cur {
                next = Some(cand);
                break;
            }
        }
        let Some(n) = next else { break };
        if degree(skel, n.0, n.1) > 2 {
            break;
        }
        prev = cur;
        cur = n;
    }
    cur
}

fn start_points(skel: &Array2<u8>, x: usize, y: usize) -> Vec<(usize, usize)> {
    let (h, w) = skel.dim();
    let mut out = Vec::new();
    for (dx, dy) in N8 {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
            if skel[[ny as usize, nx as usize]] == 1 {
                out.push((nx as usize, ny as usize));
            }
        }
    }
    out
}

/// Direction the ridge leaves a termination, from the local skeleton tangent.
fn termination_direction(skel: &Array2<u8>, x: usize, y: usize, probe: usize) -> Option<f64> {
    let starts = start_points(skel, x, y);
    let first = *starts.first()?;
    let (ex, ey) = walk(skel, x, y, first, probe.max(2));
    let (dx, dy) = (ex as f64 - x as f64, ey as f64 - y as f64);
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some(dy.atan2(dx).to_degrees().rem_euclid(360.0))
}

/// Bifurcation direction: circular mean of the two most similar branch
/// tangents (the two prongs of the fork).
fn bifurcation_direction(skel: &Array2<u8>, x: usize, y: usize, probe: usize) -> f64 {
    let starts = start_points(skel, x, y);
    let mut dirs: Vec<(f64, f64)> = Vec::new();
    for s in starts {
        let (ex, ey) = walk(skel, x, y, s, probe.max(2));
        let (dx, dy) = (ex as f64 - x as f64, ey as f64 - y as f64);
        let norm = (dx * dx + dy * dy).sqrt();
        if norm > 0.0 {
            dirs.push((dx / norm, dy / norm));
        }
    }
    if dirs.len() < 2 {
        return dirs
            .first()
            .map(|(dx, dy)| dy.atan2(*dx).to_degrees().rem_euclid(360.0))
            .unwrap_or(0.0);
    }
    let mut best = (0, 1);
    let mut best_dot = f64::NEG_INFINITY;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let dot = dirs[i].0 * dirs[j].0 + dirs[i].1 * dirs[j].1;
            if dot > best_dot {
                best_dot = dot;
                best = (i, j);
            }
        }
    }
    let mx = dirs[best.0].0 + dirs[best.1].0;
    let my = dirs[best.0].1 + dirs[best.1].1;
    my.atan2(mx).to_degrees().rem_euclid(360.0)
}

fn cluster_minutiae(mut found: Vec<Minutia>, radius: f64) -> Vec<Minutia> {
    found.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).unwrap());
    let mut used = vec![false; found.len()];
    let mut out = Vec::new();
    for i in 0..found.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![i];
        used[i] = true;
        for j in i + 1..found.len() {
            if used[j] || found[j].kind != found[i].kind {
                continue;
            }
            let d = ((found[j].x - found[i].x).powi(2) + (found[j].y - found[i].y).powi(2)).sqrt();
            if d <= radius {
                used[j] = true;
                members.push(j);
            }
        }
        if members.len() == 1 {
            out.push(found[i]);
        } else {
            let n = members.len() as f64;
            let cx = members.iter().map(|&k| found[k].x).sum::<f64>() / n;
            let cy = members.iter().map(|&k| found[k].y).sum::<f64>() / n;
            let (mut sx, mut sy) = (0.0, 0.0);
            for &k in &members {
                let r = found[k].theta_deg.to_radians();
                sx += r.cos();
                sy += r.sin();
            }
            let theta = sy.atan2(sx).to_degrees().rem_euclid(360.0);
            out.push(Minutia::new(cx, cy, theta, found[i].kind));
        }
    }
    out
}

fn prune_minutiae(
    minutiae: Vec<Minutia>,
    foreground: &Array2<u8>,
    cfg: &ExtractorConfig,
) -> Vec<Minutia> {
    let (h, w) = foreground.dim();
    let margin = cfg.border_margin;
    let mut kept: Vec<Minutia> = Vec::new();
    'outer: for m in minutiae {
        // margin disk must stay inside the foreground mask and the image
        let r = margin.ceil() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 > margin * margin {
                    continue;
                }
                let (px, py) = (m.x as i64 + dx, m.y as i64 + dy);
                if px < 0 || py < 0 || px as usize >= w || py as usize >= h {
                    continue 'outer;
                }
                if foreground[[py as usize, px as usize]] == 0 {
                    continue 'outer;
                }
            }
        }
        for k in &kept {
            let d = ((k.x - m.x).powi(2) + (k.y - m.y).powi(2)).sqrt();
            if d < cfg.min_spacing {
                continue 'outer;
            }
        }
        kept.push(m);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn draw_stroke(img: &mut Array2<f64>, p0: (f64, f64), p1: (f64, f64), width: f64) {
        let (h, w) = img.dim();
        for y in 0..h {
            for x in 0..w {
                let d = point_segment_dist((x as f64, y as f64), p0, p1);
                if d <= width {
                    img[[y, x]] = 0.0;
                }
            }
        }
    }

    fn point_segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (abx, aby) = (b.0 - a.0, b.1 - a.1);
        let len2 = abx * abx + aby * aby;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
        };
        let (qx, qy) = (a.0 + t * abx, a.1 + t * aby);
        ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
    }

    fn test_config() -> ExtractorConfig {
        ExtractorConfig {
            border_margin: 3.0,
            min_spacing: 6.0,
            ..ExtractorConfig::default()
        }
    }

    #[test]
    fn constant_image_yields_empty_template() {
        let img = GrayscaleImage::constant(64, 64, 0.5);
        let t = extract_minutiae(&img, &ExtractorConfig::default());
        assert!(t.minutiae.is_empty());
        assert_eq!((t.width, t.height), (64, 64));
    }

    #[test]
    fn straight_ridge_gives_two_antiparallel_terminations() {
        let mut data = Array2::from_elem((128, 128), 1.0);
        draw_stroke(&mut data, (30.0, 64.0), (98.0, 64.0), 1.6);
        let img = GrayscaleImage::new(data).unwrap();
        let t = extract_minutiae(&img, &test_config());
        let terms: Vec<_> = t
            .minutiae
            .iter()
            .filter(|m| m.kind == MinutiaKind::Termination)
            .collect();
        assert_eq!(terms.len(), 2, "template: {:?}", t.minutiae);
        let diff = (terms[0].theta_deg - terms[1].theta_deg).rem_euclid(360.0);
        let anti = (diff - 180.0).abs();
        assert!(anti <= 15.0, "directions {} vs {}", terms[0].theta_deg, terms[1].theta_deg);
    }

    #[test]
    fn y_junction_gives_one_bifurcation_at_center() {
        let mut data = Array2::from_elem((128, 128), 1.0);
        let c = (64.0, 64.0);
        // three ridges running to the borders so their far terminations prune
        draw_stroke(&mut data, c, (127.0, 64.0), 1.6);
        draw_stroke(&mut data, c, (10.0, 10.0), 1.6);
        draw_stroke(&mut data, c, (10.0, 118.0), 1.6);
        let img = GrayscaleImage::new(data).unwrap();
        let cfg = ExtractorConfig {
            border_margin: 8.0,
            ..ExtractorConfig::default()
        };
        let t = extract_minutiae(&img, &cfg);
        let bifs: Vec<_> = t
            .minutiae
            .iter()
            .filter(|m| m.kind == MinutiaKind::Bifurcation)
            .collect();
        assert_eq!(bifs.len(), 1, "template: {:?}", t.minutiae);
        let d = ((bifs[0].x - 64.0).powi(2) + (bifs[0].y - 64.0).powi(2)).sqrt();
        assert!(d <= 3.0, "bifurcation at ({}, {})", bifs[0].x, bifs[0].y);
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut data = Array2::from_elem((96, 96), 1.0);
        draw_stroke(&mut data, (20.0, 48.0), (76.0, 48.0), 1.6);
        draw_stroke(&mut data, (48.0, 20.0), (48.0, 40.0), 1.6);
        let img = GrayscaleImage::new(data).unwrap();
        let a = extract_minutiae(&img, &test_config());
        let b = extract_minutiae(&img, &test_config());
        assert_eq!(a, b);
    }
}
