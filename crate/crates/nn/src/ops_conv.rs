//! Convolution, pooling and resampling ops (NCHW layout).
//!
//! Convolutions run as im2col + GEMM per sample, parallelized over the batch
//! with deterministic assembly. Backward passes recompute the column matrix
//! instead of caching it. Hot loops operate on contiguous slices; every tape
//! value is standard layout by construction.

use crate::real::Real;
use crate::tape::{Arr, Var};
use ndarray::{Array2, Array4};
use rayon::prelude::*;
use std::rc::Rc;

pub(crate) fn as4<F: Real>(a: &Arr<F>) -> ndarray::ArrayView4<'_, F> {
    a.view().into_dimensionality::<ndarray::Ix4>().expect("expected 4-d tensor")
}

pub(crate) fn slice_of<F: Real>(a: &Arr<F>) -> &[F] {
    a.as_slice().expect("tape values are standard layout")
}

fn out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// One sample's pixels -> columns [Ci*kh*kw, Ho*Wo]
fn im2col<F: Real>(
    x: &[F],
    (ci, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
) -> Array2<F> {
    let (ho, wo) = (out_dim(h, kh, stride, pad), out_dim(w, kw, stride, pad));
    let mut cols = Array2::<F>::zeros((ci * kh * kw, ho * wo));
    let cols_slice = cols.as_slice_mut().unwrap();
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    let dst_row = dst_base + oy * wo;
                    if stride == 1 {
                        // contiguous copy of the valid span
                        let off = kx as isize - pad as isize;
                        let ox_start = (-off).max(0) as usize;
                        let ox_end = (w as isize - off).min(wo as isize).max(0) as usize;
                        if ox_start < ox_end {
                            let src_start = (ox_start as isize + off) as usize;
                            cols_slice[dst_row + ox_start..dst_row + ox_end].copy_from_slice(
                                &x[src_row + src_start..src_row + src_start + (ox_end - ox_start)],
                            );
                        }
                    } else {
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                cols_slice[dst_row + ox] = x[src_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of im2col: scatter columns back into one sample's pixel buffer.
fn col2im<F: Real>(
    cols: &Array2<F>,
    img: &mut [F],
    (ci, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
) {
    let (ho, wo) = (out_dim(h, kh, stride, pad), out_dim(w, kw, stride, pad));
    let cols_slice = cols.as_slice().unwrap();
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let src_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (c * h + iy as usize) * w;
                    let src_row = src_base + oy * wo;
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            img[dst_row + ix as usize] += cols_slice[src_row + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<'t, F: Real> Var<'t, F> {
    /// Shared-weight convolution: x [B,Ci,H,W] * w [Co,Ci,kh,kw].
    pub fn conv2d(&self, weight: Var<'t, F>, stride: usize, pad: usize) -> Var<'t, F> {
        let xv = self.value();
        let wv = weight.value();
        let (bs, ci, h, wdt) = as4(&xv).dim();
        let wdim = wv.shape().to_vec();
        let (co, wci, kh, kw) = (wdim[0], wdim[1], wdim[2], wdim[3]);
        assert_eq!(ci, wci, "conv2d channel mismatch");
        let (ho, wo) = (out_dim(h, kh, stride, pad), out_dim(wdt, kw, stride, pad));

        let plane = ci * h * wdt;
        let xs = slice_of(&xv);
        let wmat = Array2::from_shape_vec((co, ci * kh * kw), slice_of(&wv).to_vec()).unwrap();
        let outs: Vec<Array2<F>> = (0..bs)
            .into_par_iter()
            .map(|b| {
                let cols =
                    im2col(&xs[b * plane..(b + 1) * plane], (ci, h, wdt), (kh, kw), stride, pad);
                wmat.dot(&cols)
            })
            .collect();
        let mut y = Array4::<F>::zeros((bs, co, ho, wo));
        {
            let ys = y.as_slice_mut().unwrap();
            for (b, ob) in outs.into_iter().enumerate() {
                ys[b * co * ho * wo..(b + 1) * co * ho * wo]
                    .copy_from_slice(ob.as_slice().unwrap());
            }
        }

        let (xc, wc) = (Rc::clone(&xv), Rc::clone(&wv));
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id, weight.id],
            Box::new(move |g, need| {
                let gs = slice_of(g);
                let xs = slice_of(&xc);
                let wmat =
                    Array2::from_shape_vec((co, ci * kh * kw), slice_of(&wc).to_vec()).unwrap();
                let gplane = co * ho * wo;

                let gx = need[0].then(|| {
                    let parts: Vec<Vec<F>> = (0..bs)
                        .into_par_iter()
                        .map(|b| {
                            let gb = ndarray::ArrayView2::from_shape(
                                (co, ho * wo),
                                &gs[b * gplane..(b + 1) * gplane],
                            )
                            .unwrap();
                            let cg = wmat.t().dot(&gb).as_standard_layout().to_owned();
                            let mut img = vec![F::zero(); plane];
                            col2im(&cg, &mut img, (ci, h, wdt), (kh, kw), stride, pad);
                            img
                        })
                        .collect();
                    let mut gx = Array4::<F>::zeros((bs, ci, h, wdt));
                    let gxs = gx.as_slice_mut().unwrap();
                    for (b, p) in parts.into_iter().enumerate() {
                        gxs[b * plane..(b + 1) * plane].copy_from_slice(&p);
                    }
                    gx.into_dyn()
                });

                let gw = need[1].then(|| {
                    let partials: Vec<Array2<F>> = (0..bs)
                        .into_par_iter()
                        .map(|b| {
                            let cols = im2col(
                                &xs[b * plane..(b + 1) * plane],
                                (ci, h, wdt),
                                (kh, kw),
                                stride,
                                pad,
                            );
                            let gb = ndarray::ArrayView2::from_shape(
                                (co, ho * wo),
                                &gs[b * gplane..(b + 1) * gplane],
                            )
                            .unwrap();
                            gb.dot(&cols.t())
                        })
                        .collect();
                    let mut acc = Array2::<F>::zeros((co, ci * kh * kw));
                    for p in partials {
                        acc += &p;
                    }
                    acc.as_standard_layout()
                        .to_owned()
                        .into_shape_with_order(ndarray::IxDyn(&[co, ci, kh, kw]))
                        .unwrap()
                });
                vec![gx, gw]
            }),
        )
    }

    /// Per-sample-weight convolution (style-modulated): x [B,Ci,H,W] *
    /// w [B,Co,Ci,kh,kw], stride 1, same padding.
    pub fn conv2d_per_sample(&self, weight: Var<'t, F>) -> Var<'t, F> {
        let xv = self.value();
        let wv = weight.value();
        let (bs, ci, h, wdt) = as4(&xv).dim();
        let wdim = wv.shape().to_vec();
        let (wb, co, wci, kh, kw) = (wdim[0], wdim[1], wdim[2], wdim[3], wdim[4]);
        assert_eq!(bs, wb, "per-sample batch mismatch");
        assert_eq!(ci, wci, "per-sample channel mismatch");
        let pad = kh / 2;
        let (ho, wo) = (out_dim(h, kh, 1, pad), out_dim(wdt, kw, 1, pad));
        assert_eq!((ho, wo), (h, wdt), "same-padding convolution");

        let plane = ci * h * wdt;
        let wplane = co * ci * kh * kw;
        let xs = slice_of(&xv);
        let ws = slice_of(&wv);
        let outs: Vec<Array2<F>> = (0..bs)
            .into_par_iter()
            .map(|b| {
                let cols = im2col(&xs[b * plane..(b + 1) * plane], (ci, h, wdt), (kh, kw), 1, pad);
                let wmat = ndarray::ArrayView2::from_shape(
                    (co, ci * kh * kw),
                    &ws[b * wplane..(b + 1) * wplane],
                )
                .unwrap();
                wmat.dot(&cols)
            })
            .collect();
        let mut y = Array4::<F>::zeros((bs, co, ho, wo));
        {
            let ys = y.as_slice_mut().unwrap();
            for (b, ob) in outs.into_iter().enumerate() {
                ys[b * co * ho * wo..(b + 1) * co * ho * wo]
                    .copy_from_slice(ob.as_slice().unwrap());
            }
        }

        let (xc, wc) = (Rc::clone(&xv), Rc::clone(&wv));
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id, weight.id],
            Box::new(move |g, need| {
                let gs = slice_of(g);
                let xs = slice_of(&xc);
                let ws = slice_of(&wc);
                let gplane = co * ho * wo;

                let gx = need[0].then(|| {
                    let parts: Vec<Vec<F>> = (0..bs)
                        .into_par_iter()
                        .map(|b| {
                            let wmat = ndarray::ArrayView2::from_shape(
                                (co, ci * kh * kw),
                                &ws[b * wplane..(b + 1) * wplane],
                            )
                            .unwrap();
                            let gb = ndarray::ArrayView2::from_shape(
                                (co, ho * wo),
                                &gs[b * gplane..(b + 1) * gplane],
                            )
                            .unwrap();
                            let cg = wmat.t().dot(&gb).as_standard_layout().to_owned();
                            let mut img = vec![F::zero(); plane];
                            col2im(&cg, &mut img, (ci, h, wdt), (kh, kw), 1, pad);
                            img
                        })
                        .collect();
                    let mut gx = Array4::<F>::zeros((bs, ci, h, wdt));
                    let gxs = gx.as_slice_mut().unwrap();
                    for (b, p) in parts.into_iter().enumerate() {
                        gxs[b * plane..(b + 1) * plane].copy_from_slice(&p);
                    }
                    gx.into_dyn()
                });

                let gw = need[1].then(|| {
                    let parts: Vec<Array2<F>> = (0..bs)
                        .into_par_iter()
                        .map(|b| {
                            let cols = im2col(
                                &xs[b * plane..(b + 1) * plane],
                                (ci, h, wdt),
                                (kh, kw),
                                1,
                                pad,
                            );
                            let gb = ndarray::ArrayView2::from_shape(
                                (co, ho * wo),
                                &gs[b * gplane..(b + 1) * gplane],
                            )
                            .unwrap();
                            gb.dot(&cols.t()).as_standard_layout().to_owned()
                        })
                        .collect();
                    let mut gw = ndarray::Array5::<F>::zeros((bs, co, ci, kh, kw));
                    let gws = gw.as_slice_mut().unwrap();
                    for (b, p) in parts.into_iter().enumerate() {
                        gws[b * wplane..(b + 1) * wplane].copy_from_slice(p.as_slice().unwrap());
                    }
                    gw.into_dyn()
                });
                vec![gx, gw]
            }),
        )
    }

    /// Adds a per-channel bias to an NCHW tensor.
    pub fn bias_nchw(&self, bias: Var<'t, F>) -> Var<'t, F> {
        let xv = self.value();
        let bv = bias.value();
        let (bs, c, h, w) = as4(&xv).dim();
        assert_eq!(bv.shape(), [c], "bias shape");
        let hw = h * w;
        let mut y = xv.as_ref().clone();
        {
            let ys = y.as_slice_mut().unwrap();
            let bslice = slice_of(&bv);
            for b in 0..bs {
                for ch in 0..c {
                    let beta = bslice[ch];
                    for v in &mut ys[(b * c + ch) * hw..(b * c + ch + 1) * hw] {
                        *v += beta;
                    }
                }
            }
        }
        self.tape.push_op(
            y,
            vec![self.id, bias.id],
            Box::new(move |g, need| {
                let gb = need[1].then(|| {
                    let gs = slice_of(g);
                    let mut out = ndarray::Array1::<F>::zeros(c);
                    for b in 0..bs {
                        for ch in 0..c {
                            let mut acc = F::zero();
                            for v in &gs[(b * c + ch) * hw..(b * c + ch + 1) * hw] {
                                acc += *v;
                            }
                            out[ch] += acc;
                        }
                    }
                    out.into_dyn()
                });
                vec![need[0].then(|| g.clone()), gb]
            }),
        )
    }

    /// 2x2 average pooling with stride 2 (even dims required).
    pub fn avg_pool2(&self) -> Var<'t, F> {
        let xv = self.value();
        let (bs, c, h, w) = as4(&xv).dim();
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims");
        let quarter = F::from_f64(0.25);
        let (ho, wo) = (h / 2, w / 2);
        let mut y = Array4::<F>::zeros((bs, c, ho, wo));
        {
            let xs = slice_of(&xv);
            let ys = y.as_slice_mut().unwrap();
            for bc in 0..bs * c {
                let src = &xs[bc * h * w..(bc + 1) * h * w];
                let dst = &mut ys[bc * ho * wo..(bc + 1) * ho * wo];
                for oy in 0..ho {
                    let r0 = &src[2 * oy * w..2 * oy * w + w];
                    let r1 = &src[(2 * oy + 1) * w..(2 * oy + 1) * w + w];
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, out) in drow.iter_mut().enumerate() {
                        *out =
                            (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
                    }
                }
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let gs = slice_of(g);
                let mut gx = Array4::<F>::zeros((bs, c, h, w));
                {
                    let gxs = gx.as_slice_mut().unwrap();
                    for bc in 0..bs * c {
                        let src = &gs[bc * ho * wo..(bc + 1) * ho * wo];
                        let dst = &mut gxs[bc * h * w..(bc + 1) * h * w];
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let v = src[oy * wo + ox] * quarter;
                                dst[2 * oy * w + 2 * ox] = v;
                                dst[2 * oy * w + 2 * ox + 1] = v;
                                dst[(2 * oy + 1) * w + 2 * ox] = v;
                                dst[(2 * oy + 1) * w + 2 * ox + 1] = v;
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Mean over spatial dims: [B,C,H,W] -> [B,C].
    pub fn global_avg_pool(&self) -> Var<'t, F> {
        let xv = self.value();
        let (bs, c, h, w) = as4(&xv).dim();
        let inv = F::from_f64(1.0 / (h * w) as f64);
        let hw = h * w;
        let mut y = Array2::<F>::zeros((bs, c));
        {
            let xs = slice_of(&xv);
            let ys = y.as_slice_mut().unwrap();
            for bc in 0..bs * c {
                let mut acc = F::zero();
                for v in &xs[bc * hw..(bc + 1) * hw] {
                    acc += *v;
                }
                ys[bc] = acc * inv;
            }
        }
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let gs = slice_of(g);
                let mut gx = Array4::<F>::zeros((bs, c, h, w));
                {
                    let gxs = gx.as_slice_mut().unwrap();
                    for bc in 0..bs * c {
                        let v = gs[bc] * inv;
                        for o in &mut gxs[bc * hw..(bc + 1) * hw] {
                            *o = v;
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Bilinear 2x upsampling with edge clamping ([B,C,H,W] -> [B,C,2H,2W]).
    pub fn upsample2x_bilinear(&self) -> Var<'t, F> {
        let xv = self.value();
        let (bs, c, h, w) = as4(&xv).dim();
        let taps_y = bilinear_taps(h);
        let taps_x = bilinear_taps(w);
        let mut y = Array4::<F>::zeros((bs, c, 2 * h, 2 * w));
        {
            let xs = slice_of(&xv);
            let ys = y.as_slice_mut().unwrap();
            let (h2, w2) = (2 * h, 2 * w);
            for bc in 0..bs * c {
                let src = &xs[bc * h * w..(bc + 1) * h * w];
                let dst = &mut ys[bc * h2 * w2..(bc + 1) * h2 * w2];
                for oy in 0..h2 {
                    let (y0, wy0, y1, wy1) = taps_y[oy];
                    let (fy0, fy1) = (F::from_f64(wy0), F::from_f64(wy1));
                    let r0 = &src[y0 * w..y0 * w + w];
                    let r1 = &src[y1 * w..y1 * w + w];
                    let drow = &mut dst[oy * w2..(oy + 1) * w2];
                    for (ox, out) in drow.iter_mut().enumerate() {
                        let (x0, wx0, x1, wx1) = taps_x[ox];
                        *out = (r0[x0] * F::from_f64(wx0) + r0[x1] * F::from_f64(wx1)) * fy0
                            + (r1[x0] * F::from_f64(wx0) + r1[x1] * F::from_f64(wx1)) * fy1;
                    }
                }
            }
        }
        let (ty, tx) = (taps_y, taps_x);
        self.tape.push_op(
            y.into_dyn(),
            vec![self.id],
            Box::new(move |g, _need| {
                let gs = slice_of(g);
                let mut gx = Array4::<F>::zeros((bs, c, h, w));
                {
                    let gxs = gx.as_slice_mut().unwrap();
                    let (h2, w2) = (2 * h, 2 * w);
                    for bc in 0..bs * c {
                        let src = &gs[bc * h2 * w2..(bc + 1) * h2 * w2];
                        let dst = &mut gxs[bc * h * w..(bc + 1) * h * w];
                        for oy in 0..h2 {
                            let (y0, wy0, y1, wy1) = ty[oy];
                            for (ox, gv) in src[oy * w2..(oy + 1) * w2].iter().enumerate() {
                                let (x0, wx0, x1, wx1) = tx[ox];
                                dst[y0 * w + x0] += *gv * F::from_f64(wy0 * wx0);
                                dst[y0 * w + x1] += *gv * F::from_f64(wy0 * wx1);
                                dst[y1 * w + x0] += *gv * F::from_f64(wy1 * wx0);
                                dst[y1 * w + x1] += *gv * F::from_f64(wy1 * wx1);
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }
}

/// Source taps for 2x bilinear upsampling: output i samples input at
/// i/2 - 0.25, clamped at the edges.
fn bilinear_taps(n: usize) -> Vec<(usize, f64, usize, f64)> {
    (0..2 * n)
        .map(|i| {
            let u = i as f64 / 2.0 - 0.25;
            let f = u.floor();
            let frac = u - f;
            let j0 = (f.max(0.0) as usize).min(n - 1);
            let j1 = ((f + 1.0).max(0.0) as usize).min(n - 1);
            (j0, 1.0 - frac, j1, frac)
        })
        .collect()
}
