//! Bicubic resampling with Matlab `imresize` conventions.
//!
//! * cubic convolution kernel, a = −0.5, support 4
//! * when shrinking with antialiasing, the kernel is stretched by 1/scale
//! * output sample `x` (1-based) maps to input `u = x/scale + 0.5·(1 − 1/scale)`
//! * out-of-range taps are mirrored (`…, 2, 1, 1, 2, …, n, n, n−1, …`)
//! * weights are normalized to sum to one
//! * output size is `round(n · scale)`; rows are resized before columns

use super::ImageBuf;
use crate::error::{Error, Result};

pub const CUBIC_A: f64 = -0.5;

pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Taps of one output sample: 0-based input indices and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

pub fn contributions(in_len: usize, out_len: usize, scale: f64, antialias: bool) -> Vec<Contribution> {
    let shrink = antialias && scale < 1.0;
    let width = if shrink { 4.0 / scale } else { 4.0 };
    let taps = width.ceil() as i64 + 2;
    (1..=out_len)
        .map(|x| {
            let u = x as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - width / 2.0).floor() as i64;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for j in 0..taps {
                let idx = left + j;
                let d = u - idx as f64;
                let w = if shrink { scale * cubic(scale * d) } else { cubic(d) };
                if w != 0.0 {
                    // idx is 1-based here
                    indices.push(mirror(idx - 1, in_len));
                    weights.push(w);
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Contribution { indices, weights }
        })
        .collect()
}

pub fn output_len(in_len: usize, scale: f64) -> usize {
    (in_len as f64 * scale).round() as usize
}

fn resize_axis(
    src: &[f64],
    planes: usize,
    height: usize,
    width: usize,
    contrib: &[Contribution],
    along_rows: bool,
) -> Vec<f64> {
    let (oh, ow) = if along_rows {
        (contrib.len(), width)
    } else {
        (height, contrib.len())
    };
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let plane = &src[p * height * width..(p + 1) * height * width];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let c = if along_rows { &contrib[y] } else { &contrib[x] };
                dst[y * ow + x] = c
                    .indices
                    .iter()
                    .zip(&c.weights)
                    .map(|(&i, &w)| {
                        let v = if along_rows {
                            plane[i * width + x]
                        } else {
                            plane[y * width + i]
                        };
                        w * v
                    })
                    .sum();
            }
        }
    }
    out
}

/// Resizes by `scale` along both axes. Values are not clamped.
pub fn bicubic_resize(img: &ImageBuf, scale: f64, antialias: bool) -> Result<ImageBuf> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale factor must be positive, got {scale}")));
    }
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (output_len(w, scale), output_len(h, scale));
    if ow == 0 || oh == 0 {
        return Err(Error::dims(
            &[img.channels(), h, w],
            format!("scale {scale} gives an empty output"),
        ));
    }
    let rows = contributions(h, oh, scale, antialias);
    let cols = contributions(w, ow, scale, antialias);
    let tmp = resize_axis(img.data(), img.channels(), h, w, &rows, true);
    let out = resize_axis(&tmp, img.channels(), oh, w, &cols, false);
    ImageBuf::new(ow, oh, img.colorspace(), out)
}

/// Bicubic ×s upscaling: the standard reference baseline.
pub fn bicubic_upscale(img: &ImageBuf, s: usize) -> Result<ImageBuf> {
    bicubic_resize(img, s as f64, true)
}

/// BI degradation: bicubic ×1/s downscaling with antialiasing.
pub fn bicubic_downscale(img: &ImageBuf, s: usize) -> Result<ImageBuf> {
    bicubic_resize(img, 1.0 / s as f64, true)
}

/// Pixel replication ×s.
pub fn nearest_upscale(img: &ImageBuf, s: usize) -> Result<ImageBuf> {
    ImageBuf::from_fn(img.width() * s, img.height() * s, img.colorspace(), |c, y, x| {
        img.at(c, y / s, x / s)
    })
}
