//! Synthetic test images: gradients, hard-edged shapes, stripes and checkers.

#![allow(dead_code)]

pub mod cases;
pub mod oracle;

use std::path::Path;

use hpun::imaging::{ColorSpace, ImageBuf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Shape {
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Disc {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Stripes {
        angle: f64,
        period: f64,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Checker {
        cell: f64,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
}

impl Shape {
    fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::Stripes {
                angle,
                period,
                x0,
                y0,
                x1,
                y1,
            } => {
                let t = x * angle.cos() + y * angle.sin();
                x >= x0 && x < x1 && y >= y0 && y < y1 && t.rem_euclid(period) < period / 2.0
            }
            Shape::Checker { cell, x0, y0, x1, y1 } => {
                x >= x0
                    && x < x1
                    && y >= y0
                    && y < y1
                    && ((((x - x0) / cell).floor() + ((y - y0) / cell).floor()) as i64) % 2 == 0
            }
        }
    }
}

/// One RGB image with a smooth background and a handful of antialiased shapes.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let mut color = || [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    let bg0 = color();
    let bg1 = color();
    let mut shapes = Vec::new();
    let n = rng.gen_range(4..9);
    for _ in 0..n {
        let c = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let x0 = rng.gen_range(0.0..w * 0.8);
        let y0 = rng.gen_range(0.0..h * 0.8);
        let x1 = x0 + rng.gen_range(w * 0.1..w * 0.5);
        let y1 = y0 + rng.gen_range(h * 0.1..h * 0.5);
        let shape = match rng.gen_range(0..4) {
            0 => Shape::Rect { x0, y0, x1, y1 },
            1 => Shape::Disc {
                cx: x0,
                cy: y0,
                r: rng.gen_range(3.0..w * 0.25),
            },
            2 => Shape::Stripes {
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                period: rng.gen_range(3.0..9.0),
                x0,
                y0,
                x1,
                y1,
            },
            _ => Shape::Checker {
                cell: rng.gen_range(2.0..6.0),
                x0,
                y0,
                x1,
                y1,
            },
        };
        shapes.push((shape, c));
    }
    const SS: usize = 4;
    ImageBuf::from_fn(width, height, ColorSpace::Rgb, |ch, y, x| {
        let mut acc = 0.0;
        for sy in 0..SS {
            for sx in 0..SS {
                let px = x as f64 + (sx as f64 + 0.5) / SS as f64;
                let py = y as f64 + (sy as f64 + 0.5) / SS as f64;
                let t = (px / w + py / h) / 2.0;
                let mut v = bg0[ch] * (1.0 - t) + bg1[ch] * t;
                for (s, c) in &shapes {
                    if s.covers(px, py) {
                        v = c[ch];
                    }
                }
                acc += v;
            }
        }
        acc / (SS * SS) as f64
    })
    .unwrap()
    .quantize()
}

/// Writes `count` synthetic PNGs named `img_000.png`, ... into `dir`.
pub fn write_corpus(dir: &Path, count: usize, width: usize, height: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        synthetic_image(width, height, seed * 1000 + i as u64)
            .save_png(&dir.join(format!("img_{i:03}.png")))
            .unwrap();
    }
}
