use std::path::Path;

use serde::Serialize;

use super::{ColorSpace, ImageBuf};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Normalized mean error between shallow and deep features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmeReport {
    /// `‖F^S − F^D‖_F / N` with N the element count.
    pub nme: f64,
    pub width: usize,
    pub height: usize,
    /// Per-position L2 norm of the difference across batch and channels, row-major.
    pub error_map: Vec<f64>,
    pub threshold: f64,
    pub binarized: Vec<bool>,
}

pub fn nme<T: Real>(shallow: &Tensor<T>, deep: &Tensor<T>, threshold: Option<f64>) -> Result<NmeReport> {
    if shallow.dims() != deep.dims() {
        return Err(Error::ShapeMismatch {
            op: "nme",
            lhs: shallow.dims(),
            rhs: deep.dims(),
        });
    }
    let [n, c, h, w] = shallow.dims();
    let (a, b) = (shallow.data(), deep.data());
    let mut sq_map = vec![0.0f64; h * w];
    for plane in 0..n * c {
        for (i, m) in sq_map.iter_mut().enumerate() {
            let d = a[plane * h * w + i].as_f64() - b[plane * h * w + i].as_f64();
            *m += d * d;
        }
    }
    let total: f64 = sq_map.iter().sum();
    let error_map: Vec<f64> = sq_map.iter().map(|v| v.sqrt()).collect();
    let threshold = threshold.unwrap_or_else(|| error_map.iter().sum::<f64>() / error_map.len() as f64);
    let binarized = error_map.iter().map(|&v| v > threshold).collect();
    Ok(NmeReport {
        nme: total.sqrt() / shallow.numel() as f64,
        width: w,
        height: h,
        error_map,
        threshold,
        binarized,
    })
}

impl NmeReport {
    /// Error map scaled by its maximum into a grayscale image.
    pub fn map_image(&self) -> ImageBuf {
        let max = self.error_map.iter().cloned().fold(0.0, f64::max);
        let data = self
            .error_map
            .iter()
            .map(|&v| if max > 0.0 { v / max } else { 0.0 })
            .collect();
        ImageBuf::new(self.width, self.height, ColorSpace::Y, data).expect("map dims match")
    }

    pub fn binarized_image(&self) -> ImageBuf {
        let data = self.binarized.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImageBuf::new(self.width, self.height, ColorSpace::Y, data).expect("map dims match")
    }

    pub fn map_csv(&self) -> String {
        let mut out = String::new();
        for row in self.error_map.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `map.png`, `binarized.png` and `map.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.map_image().save_png(&dir.join("map.png"))?;
        self.binarized_image().save_png(&dir.join("binarized.png"))?;
        crate::io::write_atomic_str(&dir.join("map.csv"), &self.map_csv())
    }
}
