//! Model-specific ops: style modulation helpers, noise injection, the
//! orientation squash head, and the differentiable augmentation primitives.

use crate::ops_conv::as4;
use crate::real::Real;
use crate::tape::Var;
use ndarray::{Array1, Array2, Array4, Array5, Ix2};
use std::rc::Rc;

impl<'t, F: Real> Var<'t, F> {
    /// Expands a shared kernel [Co,Ci,kh,kw] with per-sample styles [B,Ci]
    /// into per-sample kernels [B,Co,Ci,kh,kw].
    pub fn modulate(&self, styles: Var<'t, F>) -> Var<'t, F> {
        let wv = self.value();
        let sv = styles.value();
        let wdim = wv.shape().to_vec();
        let (co, ci, kh, kw) = (wdim[0], wdim[1], wdim[2], wdim[3]);
        let sdim = sv.shape().to_vec();
        let (bs, sci) = (sdim[0], sdim[1]);
        assert_eq!(ci, sci, "modulate channel mismatch");
        let k = kh * kw;

        let mut y = Array5::<F>::zeros((bs, co, ci, kh, kw));
        {
            let ws = crate::ops_conv::slice_of(&wv);
            let ss = crate::ops_conv::slice_of(&sv);
            let ys = y.as_slice_mut().unwrap();
            for b in 0..bs {
                for o in 0..co {
                    for c in 0..ci {
                        let scale = ss[b * ci + c];
                        let src = &ws[(o * ci + c) * k..(o * ci + c + 1) * k];
                        let dst = &mut ys[((b * co + o) * ci + c) * k..((b * co + o) * ci + c + 1) * k];
                        for (d, w) in dst.iter_mut().zip(src) {
                            *d = *w * scale;
                        }
                    }
                }
            }
        }
        let (wc, sc) = (Rc::clone(&wv), Rc::clone(&sv));
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id, styles.id],
            Box::new(move |g, need| {
                let gs = crate::ops_conv::slice_of(g);
                let ws = crate::ops_conv::slice_of(&wc);
                let ss = crate::ops_conv::slice_of(&sc);
                let gw = need[0].then(|| {
                    let mut out = Array4::<F>::zeros((co, ci, kh, kw));
                    let os = out.as_slice_mut().unwrap();
                    for b in 0..bs {
                        for o in 0..co {
                            for c in 0..ci {
                                let scale = ss[b * ci + c];
                                let src = &gs[((b * co + o) * ci + c) * k..((b * co + o) * ci + c + 1) * k];
                                let dst = &mut os[(o * ci + c) * k..(o * ci + c + 1) * k];
                                for (d, gv) in dst.iter_mut().zip(src) {
                                    *d += *gv * scale;
                                }
                            }
                        }
                    }
                    out.into_dyn()
                });
                let gss = need[1].then(|| {
                    let mut out = Array2::<F>::zeros((bs, ci));
                    let os = out.as_slice_mut().unwrap();
                    for b in 0..bs {
                        for o in 0..co {
                            for c in 0..ci {
                                let src = &gs[((b * co + o) * ci + c) * k..((b * co + o) * ci + c + 1) * k];
                                let wrow = &ws[(o * ci + c) * k..(o * ci + c + 1) * k];
                                let mut acc = F::zero();
                                for (gv, w) in src.iter().zip(wrow) {
                                    acc += *gv * *w;
                                }
                                os[b * ci + c] += acc;
                            }
                        }
                    }
                    out.into_dyn()
                });
                vec![gw, gss]
            }),
        )
    }

    /// Sums a [B,Co,Ci,kh,kw] tensor over its trailing three axes -> [B,Co].
    pub fn sum_tail3(&self) -> Var<'t, F> {
        let wv = self.value();
        let wdim = wv.shape().to_vec();
        let (bs, co, ci, kh, kw) = (wdim[0], wdim[1], wdim[2], wdim[3], wdim[4]);
        let tail = ci * kh * kw;
        let mut y = Array2::<F>::zeros((bs, co));
        {
            let ws = crate::ops_conv::slice_of(&wv);
            let ys = y.as_slice_mut().unwrap();
            for (bo, out) in ys.iter_mut().enumerate() {
                let mut acc = F::zero();
                for v in &ws[bo * tail..(bo + 1) * tail] {
                    acc += *v;
                }
                *out = acc;
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let gs = crate::ops_conv::slice_of(g);
                let mut gx = Array5::<F>::zeros((bs, co, ci, kh, kw));
                {
                    let os = gx.as_slice_mut().unwrap();
                    for (bo, gv) in gs.iter().enumerate() {
                        for o in &mut os[bo * tail..(bo + 1) * tail] {
                            *o = *gv;
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Scales per-sample kernels [B,Co,Ci,kh,kw] by [B,Co] factors.
    pub fn scale_bco(&self, factors: Var<'t, F>) -> Var<'t, F> {
        let wv = self.value();
        let fv = factors.value();
        let wdim = wv.shape().to_vec();
        let (bs, co, ci, kh, kw) = (wdim[0], wdim[1], wdim[2], wdim[3], wdim[4]);
        assert_eq!(fv.shape(), [bs, co], "scale_bco factor shape");
        let tail = ci * kh * kw;
        let mut y = wv.as_ref().clone();
        {
            let ys = y.as_slice_mut().unwrap();
            let fs = crate::ops_conv::slice_of(&fv);
            for (bo, f) in fs.iter().enumerate() {
                for v in &mut ys[bo * tail..(bo + 1) * tail] {
                    *v = *v * *f;
                }
            }
        }
        let (wc, fc) = (Rc::clone(&wv), Rc::clone(&fv));
        self.tape.push_op(
            y,
            vec![self.id, factors.id],
            Box::new(move |g, need| {
                let gs = crate::ops_conv::slice_of(g);
                let ws = crate::ops_conv::slice_of(&wc);
                let fs = crate::ops_conv::slice_of(&fc);
                let gw = need[0].then(|| {
                    let mut out = Array5::<F>::zeros((bs, co, ci, kh, kw));
                    {
                        let os = out.as_slice_mut().unwrap();
                        for (bo, f) in fs.iter().enumerate() {
                            let src = &gs[bo * tail..(bo + 1) * tail];
                            let dst = &mut os[bo * tail..(bo + 1) * tail];
                            for (d, gv) in dst.iter_mut().zip(src) {
                                *d = *gv * *f;
                            }
                        }
                    }
                    out.into_dyn()
                });
                let gf = need[1].then(|| {
                    let mut out = Array2::<F>::zeros((bs, co));
                    {
                        let os = out.as_slice_mut().unwrap();
                        for (bo, o) in os.iter_mut().enumerate() {
                            let mut acc = F::zero();
                            for (gv, w) in gs[bo * tail..(bo + 1) * tail]
                                .iter()
                                .zip(&ws[bo * tail..(bo + 1) * tail])
                            {
                                acc += *gv * *w;
                            }
                            *o = acc;
                        }
                    }
                    out.into_dyn()
                });
                vec![gw, gf]
            }),
        )
    }

    /// `x + strength * noise` with noise [B,1,H,W] broadcast over channels;
    /// `strength` is a differentiable scalar.
    pub fn add_scaled_noise(&self, strength: Var<'t, F>, noise: &Array4<F>) -> Var<'t, F> {
        let xv = self.value();
        let (bs, c, h, w) = as4(&xv).dim();
        assert_eq!(noise.dim(), (bs, 1, h, w), "noise shape");
        let sv = strength.value();
        assert_eq!(sv.len(), 1, "noise strength is a scalar");
        let s = sv[ndarray::IxDyn(&[])];
        let hw = h * w;
        let mut y = xv.as_ref().clone();
        {
            let ys = y.as_slice_mut().unwrap();
            let ns = noise.as_slice().unwrap();
            for b in 0..bs {
                let nrow = &ns[b * hw..(b + 1) * hw];
                for ch in 0..c {
                    let dst = &mut ys[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                    for (d, n) in dst.iter_mut().zip(nrow) {
                        *d += s * *n;
                    }
                }
            }
        }
        let noise_c = noise.clone();
        self.tape.push_op(
            y,
            vec![self.id, strength.id],
            Box::new(move |g, need| {
                let gs = need[1].then(|| {
                    let gsl = crate::ops_conv::slice_of(g);
                    let ns = noise_c.as_slice().unwrap();
                    let mut acc = F::zero();
                    for b in 0..bs {
                        let nrow = &ns[b * hw..(b + 1) * hw];
                        for ch in 0..c {
                            for (gv, n) in
                                gsl[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().zip(nrow)
                            {
                                acc += *gv * *n;
                            }
                        }
                    }
                    ndarray::ArrayD::from_elem(ndarray::IxDyn(&[]), acc)
                });
                vec![need[0].then(|| g.clone()), gs]
            }),
        )
    }

    /// Smooth vector squash for [B,2,H,W]: `y = x / sqrt(1 + |x|^2)` per
    /// pixel, keeping the 2-vector norm strictly below 1.
    pub fn squash2(&self) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, c, h, w) = x.dim();
        assert_eq!(c, 2, "squash2 expects 2 channels");
        let one = F::one();
        let mut y = x.to_owned();
        for b in 0..bs {
            for yy in 0..h {
                for xx in 0..w {
                    let (a0, a1) = (x[[b, 0, yy, xx]], x[[b, 1, yy, xx]]);
                    let s = (one + a0 * a0 + a1 * a1).sqrt().recip();
                    y[[b, 0, yy, xx]] = a0 * s;
                    y[[b, 1, yy, xx]] = a1 * s;
                }
            }
        }
        let xc = Rc::clone(&xv);
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let g4 = as4(g);
                let x = as4(&xc);
                let mut gx = Array4::<F>::zeros((bs, 2, h, w));
                for b in 0..bs {
                    for yy in 0..h {
                        for xx in 0..w {
                            let (a0, a1) = (x[[b, 0, yy, xx]], x[[b, 1, yy, xx]]);
                            let s2 = one / (one + a0 * a0 + a1 * a1);
                            let s = s2.sqrt();
                            let s3 = s * s2;
                            let (g0, g1) = (g4[[b, 0, yy, xx]], g4[[b, 1, yy, xx]]);
                            let dot = a0 * g0 + a1 * g1;
                            gx[[b, 0, yy, xx]] = s * g0 - s3 * a0 * dot;
                            gx[[b, 1, yy, xx]] = s * g1 - s3 * a1 * dot;
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    // ---- differentiable augmentation primitives (constant parameters) ----

    /// Horizontal flip of the samples selected by `apply`.
    pub fn hflip_per_sample(&self, apply: &[bool]) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, c, h, w) = x.dim();
        assert_eq!(apply.len(), bs);
        let sel = apply.to_vec();
        let mut y = x.to_owned();
        for (b, flip) in sel.iter().enumerate() {
            if *flip {
                for ch in 0..c {
                    for yy in 0..h {
                        for xx in 0..w / 2 {
                            y.swap([b, ch, yy, xx], [b, ch, yy, w - 1 - xx]);
                        }
                    }
                }
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let mut gx = as4(g).to_owned();
                for (b, flip) in sel.iter().enumerate() {
                    if *flip {
                        for ch in 0..c {
                            for yy in 0..h {
                                for xx in 0..w / 2 {
                                    gx.swap([b, ch, yy, xx], [b, ch, yy, w - 1 - xx]);
                                }
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Per-sample counter-clockwise quarter-turns (square images).
    pub fn rot90_per_sample(&self, quarter_turns: &[u8]) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, c, h, w) = x.dim();
        assert_eq!(h, w, "rot90 needs square images");
        assert_eq!(quarter_turns.len(), bs);
        let ks = quarter_turns.to_vec();
        let rotate = move |src: &ndarray::ArrayView4<'_, F>, ks: &[u8]| {
            let mut out = Array4::<F>::zeros((bs, c, h, w));
            for b in 0..bs {
                let k = ks[b] % 4;
                for ch in 0..c {
                    for yy in 0..h {
                        for xx in 0..w {
                            let (sy, sx) = match k {
                                0 => (yy, xx),
                                1 => (xx, w - 1 - yy),
                                2 => (h - 1 - yy, w - 1 - xx),
                                _ => (h - 1 - xx, yy),
                            };
                            out[[b, ch, yy, xx]] = src[[b, ch, sy, sx]];
                        }
                    }
                }
            }
            out
        };
        let y = rotate(&x, &ks);
        let inv: Vec<u8> = ks.iter().map(|k| (4 - (k % 4)) % 4).collect();
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let g4 = as4(g);
                vec![Some(rotate(&g4, &inv).into_dyn())]
            }),
        )
    }

    /// Per-sample integer translation with zero fill.
    pub fn translate_per_sample(&self, shifts: &[(i64, i64)]) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, c, h, w) = x.dim();
        assert_eq!(shifts.len(), bs);
        let sh = shifts.to_vec();
        let shift = move |src: &ndarray::ArrayView4<'_, F>, sh: &[(i64, i64)]| {
            let mut out = Array4::<F>::zeros((bs, c, h, w));
            for b in 0..bs {
                let (dx, dy) = sh[b];
                for ch in 0..c {
                    for yy in 0..h {
                        let sy = yy as i64 - dy;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        for xx in 0..w {
                            let sx = xx as i64 - dx;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            out[[b, ch, yy, xx]] = src[[b, ch, sy as usize, sx as usize]];
                        }
                    }
                }
            }
            out
        };
        let y = shift(&x, &sh);
        let inv: Vec<(i64, i64)> = sh.iter().map(|(dx, dy)| (-dx, -dy)).collect();
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let g4 = as4(g);
                vec![Some(shift(&g4, &inv).into_dyn())]
            }),
        )
    }

    /// Per-sample isotropic scaling about the image center (bilinear, zero
    /// outside). `scale[b] = 1.0` is the identity.
    pub fn scale_per_sample(&self, scales: &[f64]) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, c, h, w) = x.dim();
        assert_eq!(scales.len(), bs);
        let sc = scales.to_vec();
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);

        // (output pixel) -> 4 source taps with weights
        let taps = move |s: f64, oy: usize, ox: usize| -> [(usize, usize, f64); 4] {
            let sy = cy + (oy as f64 - cy) / s;
            let sx = cx + (ox as f64 - cx) / s;
            let (fy, fx) = (sy.floor(), sx.floor());
            let (wy, wx) = (sy - fy, sx - fx);
            let mut out = [(0usize, 0usize, 0.0f64); 4];
            let mut k = 0;
            for (iy, fyw) in [(fy as i64, 1.0 - wy), (fy as i64 + 1, wy)] {
                for (ix, fxw) in [(fx as i64, 1.0 - wx), (fx as i64 + 1, wx)] {
                    let weight = fyw * fxw;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w && weight != 0.0
                    {
                        out[k] = (iy as usize, ix as usize, weight);
                        k += 1;
                    }
                }
            }
            for slot in out.iter_mut().skip(k) {
                *slot = (0, 0, 0.0);
            }
            out
        };

        let mut y = Array4::<F>::zeros((bs, c, h, w));
        for b in 0..bs {
            if sc[b] == 1.0 {
                y.index_axis_mut(ndarray::Axis(0), b)
                    .assign(&x.index_axis(ndarray::Axis(0), b));
                continue;
            }
            for ch in 0..c {
                for oy in 0..h {
                    for ox in 0..w {
                        let mut acc = F::zero();
                        for (iy, ix, wgt) in taps(sc[b], oy, ox) {
                            if wgt != 0.0 {
                                acc += x[[b, ch, iy, ix]] * F::from_f64(wgt);
                            }
                        }
                        y[[b, ch, oy, ox]] = acc;
                    }
                }
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let g4 = as4(g);
                let mut gx = Array4::<F>::zeros((bs, c, h, w));
                for b in 0..bs {
                    if sc[b] == 1.0 {
                        gx.index_axis_mut(ndarray::Axis(0), b)
                            .assign(&g4.index_axis(ndarray::Axis(0), b));
                        continue;
                    }
                    for ch in 0..c {
                        for oy in 0..h {
                            for ox in 0..w {
                                let gv = g4[[b, ch, oy, ox]];
                                for (iy, ix, wgt) in taps(sc[b], oy, ox) {
                                    if wgt != 0.0 {
                                        gx[[b, ch, iy, ix]] += gv * F::from_f64(wgt);
                                    }
                                }
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Per-sample contrast (about mid-gray) and brightness:
    /// `y = (x - 0.5) * contrast + 0.5 + brightness`.
    pub fn brightness_contrast_per_sample(&self, contrast: &[f64], brightness: &[f64]) -> Var<'t, F> {
        let xv = self.value();
        let x = as4(&xv);
        let (bs, _c, _h, _w) = x.dim();
        assert_eq!(contrast.len(), bs);
        assert_eq!(brightness.len(), bs);
        let half = F::from_f64(0.5);
        let mut y = x.to_owned();
        for b in 0..bs {
            let (cf, bf) = (F::from_f64(contrast[b]), F::from_f64(brightness[b]));
            y.index_axis_mut(ndarray::Axis(0), b)
                .mapv_inplace(|v| (v - half) * cf + half + bf);
        }
        let con = contrast.to_vec();
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let mut gx = as4(g).to_owned();
                for (b, cf) in con.iter().enumerate() {
                    let cf = F::from_f64(*cf);
                    gx.index_axis_mut(ndarray::Axis(0), b).mapv_inplace(|v| v * cf);
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }
}

impl<'t, F: Real> Var<'t, F> {
    /// Repeats a [C,H,W] tensor across a batch -> [B,C,H,W].
    pub fn broadcast_batch(&self, batch: usize) -> Var<'t, F> {
        let xv = self.value();
        let x3 = xv.view().into_dimensionality::<ndarray::Ix3>().expect("broadcast_batch 3-d");
        let (c, h, w) = x3.dim();
        let mut y = Array4::<F>::zeros((batch, c, h, w));
        for b in 0..batch {
            y.index_axis_mut(ndarray::Axis(0), b).assign(&x3);
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let g4 = as4(g);
                let mut gx = ndarray::Array3::<F>::zeros((c, h, w));
                for b in 0..batch {
                    gx += &g4.index_axis(ndarray::Axis(0), b);
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Adds a length-N bias to each row of a [B,N] matrix.
    pub fn bias_rows(&self, bias: Var<'t, F>) -> Var<'t, F> {
        let xv = self.value();
        let bv = bias.value();
        let x2 = xv.view().into_dimensionality::<Ix2>().expect("bias_rows 2-d");
        let (bs, n) = x2.dim();
        assert_eq!(bv.shape(), [n], "bias_rows shape");
        let mut y = x2.to_owned();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += bv[ndarray::IxDyn(&[j])];
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id, bias.id],
            Box::new(move |g, need| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let gb = need[1].then(|| {
                    let mut out = Array1::<F>::zeros(n);
                    for row in g2.rows() {
                        for (j, v) in row.iter().enumerate() {
                            out[j] += *v;
                        }
                    }
                    let _ = bs;
                    out.into_dyn()
                });
                vec![need[0].then(|| g.clone()), gb]
            }),
        )
    }
}


