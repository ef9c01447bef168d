//! 8-bit grayscale PNG I/O and resampling helpers.
//!
//! Pixel value `v` maps to intensity `v / 255`.

use crate::error::{Error, Result};
use crate::minutiae::GrayscaleImage;
use image::{GrayImage, ImageReader, Luma};
use ndarray::Array2;
use std::path::Path;

pub fn save_png_gray(img: &GrayscaleImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = img.data.dim();
    let mut out = GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = (img.data[[y, x]].clamp(0.0, 1.0) * 255.0).round() as u8;
            out.put_pixel(x as u32, y as u32, Luma([v]));
        }
    }
    out.save(path)
        .map_err(|e| Error::parse(path, format!("png encode failed: {e}")))
}

pub fn load_png_gray(path: impl AsRef<Path>) -> Result<GrayscaleImage> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::parse(path, format!("png decode failed: {e}")))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            data[[y, x]] = f64::from(img.get_pixel(x as u32, y as u32)[0]) / 255.0;
        }
    }
    Ok(GrayscaleImage { data })
}

/// Bilinear resize (pixel-center aligned).
pub fn resize_bilinear(img: &GrayscaleImage, out_h: usize, out_w: usize) -> GrayscaleImage {
    let (h, w) = img.data.dim();
    let mut out = Array2::<f64>::zeros((out_h, out_w));
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1.0);
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (wy, wx) = (fy - y0 as f64, fx - x0 as f64);
            out[[oy, ox]] = img.data[[y0, x0]] * (1.0 - wy) * (1.0 - wx)
                + img.data[[y0, x1]] * (1.0 - wy) * wx
                + img.data[[y1, x0]] * wy * (1.0 - wx)
                + img.data[[y1, x1]] * wy * wx;
        }
    }
    GrayscaleImage { data: out }
}

/// Writes a grid of equally sized images as one contact sheet.
pub fn save_contact_sheet(
    images: &[GrayscaleImage],
    columns: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if images.is_empty() {
        return Err(Error::invalid("contact sheet needs at least one image"));
    }
    let (h, w) = images[0].data.dim();
    let cols = columns.max(1);
    let rows = images.len().div_ceil(cols);
    let pad = 2usize;
    let mut sheet = Array2::<f64>::from_elem((rows * (h + pad) + pad, cols * (w + pad) + pad), 1.0);
    for (i, img) in images.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let (oy, ox) = (pad + r * (h + pad), pad + c * (w + pad));
        for y in 0..h.min(img.data.nrows()) {
            for x in 0..w.min(img.data.ncols()) {
                sheet[[oy + y, ox + x]] = img.data[[y, x]];
            }
        }
    }
    save_png_gray(&GrayscaleImage { data: sheet }, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_at_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut data = Array2::<f64>::zeros((17, 23));
        for y in 0..17 {
            for x in 0..23 {
                data[[y, x]] = ((y * 23 + x) % 256) as f64 / 255.0;
            }
        }
        let img = GrayscaleImage::new(data).unwrap();
        save_png_gray(&img, &path).unwrap();
        let back = load_png_gray(&path).unwrap();
        assert_eq!(back.data, img.data);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = GrayscaleImage::constant(32, 32, 0.25);
        let out = resize_bilinear(&img, 64, 48);
        assert!(out.data.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}
