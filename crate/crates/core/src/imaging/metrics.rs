use serde::Serialize;

use super::{ColorSpace, ImageBuf};
use crate::error::{Error, Result};

/// BT.601 studio-swing luma of an RGB image in `[0, 1]` units.
pub fn rgb_to_y(img: &ImageBuf) -> Result<ImageBuf> {
    if img.colorspace() != ColorSpace::Rgb {
        return Err(Error::dims(
            &[img.channels(), img.height(), img.width()],
            "rgb_to_y needs an RGB image",
        ));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let y = (0..r.len())
        .map(|i| (16.0 + 65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i]) / 255.0)
        .collect();
    ImageBuf::new(img.width(), img.height(), ColorSpace::Y, y)
}

fn luma(img: &ImageBuf) -> Result<ImageBuf> {
    match img.colorspace() {
        ColorSpace::Rgb => rgb_to_y(img),
        ColorSpace::Y => Ok(img.clone()),
    }
}

fn check_pair(a: &ImageBuf, b: &ImageBuf) -> Result<()> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: [1, a.channels(), a.height(), a.width()],
            rhs: [1, b.channels(), b.height(), b.width()],
        });
    }
    Ok(())
}

pub fn mse(a: &ImageBuf, b: &ImageBuf, border: usize) -> Result<f64> {
    check_pair(a, b)?;
    let (a, b) = (a.shave(border)?, b.shave(border)?);
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// `10·log10(1/MSE)` after removing `border` pixels from every side;
/// `+∞` when the cropped images are identical.
pub fn psnr(a: &ImageBuf, b: &ImageBuf, border: usize) -> Result<f64> {
    let m = mse(a, b, border)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Mean SSIM over all valid 11×11 windows of single-channel images.
pub fn ssim(a: &ImageBuf, b: &ImageBuf, border: usize) -> Result<f64> {
    check_pair(a, b)?;
    if a.channels() != 1 {
        return Err(Error::dims(
            &[a.channels(), a.height(), a.width()],
            "ssim needs single-channel images",
        ));
    }
    let (a, b) = (a.shave(border)?, b.shave(border)?);
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::dims(&[1, h, w], "image smaller than the SSIM window"));
    }
    let win = gaussian_window();
    let (pa, pb) = (a.data(), b.data());
    let mut total = 0.0;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let row = (y0 + dy) * w + x0;
                for dx in 0..SSIM_WINDOW {
                    let g = win[dy * SSIM_WINDOW + dx];
                    let (va, vb) = (pa[row + dx], pb[row + dx]);
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    Ok(total / ((h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub border: usize,
    pub quantize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    pub psnr_y: f64,
    pub ssim_y: f64,
}

/// PSNR and SSIM on the Y channel, optionally after 8-bit quantization of the output.
pub fn evaluate_pair(sr: &ImageBuf, hr: &ImageBuf, opts: EvalOptions) -> Result<PairMetrics> {
    let sr = if opts.quantize { sr.quantize() } else { sr.clone() };
    let (ys, yh) = (luma(&sr)?, luma(hr)?);
    Ok(PairMetrics {
        psnr_y: psnr(&ys, &yh, opts.border)?,
        ssim_y: ssim(&ys, &yh, opts.border)?,
    })
}
