//! Image buffers, bicubic degradation, quality metrics and evaluation.

mod image;
pub mod metrics;
mod nme;
pub mod resize;

pub use self::image::{ColorSpace, ImageBuf};
pub use metrics::{evaluate_pair, psnr, rgb_to_y, ssim, EvalOptions, PairMetrics};
pub use nme::{nme, NmeReport};
pub use resize::{bicubic_downscale, bicubic_resize, bicubic_upscale, nearest_upscale};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::Dihedral;
use crate::real::Real;
use crate::tensor::Tensor;

/// Anything that maps an LR RGB image to an s× larger RGB image.
pub trait Upscaler {
    fn scale(&self) -> usize;
    fn upscale(&self, lr: &ImageBuf) -> Result<ImageBuf>;
}

pub struct Bicubic {
    pub scale: usize,
}

impl Upscaler for Bicubic {
    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &ImageBuf) -> Result<ImageBuf> {
        bicubic_upscale(lr, self.scale)
    }
}

pub struct Nearest {
    pub scale: usize,
}

impl Upscaler for Nearest {
    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &ImageBuf) -> Result<ImageBuf> {
        nearest_upscale(lr, self.scale)
    }
}

/// Runs a model on one image, padding the input to even dims and cropping the output back.
pub struct ModelUpscaler<'m, T> {
    pub model: &'m Model<T>,
    pub self_ensemble: bool,
}

impl<'m, T: Real> ModelUpscaler<'m, T> {
    pub fn new(model: &'m Model<T>) -> Self {
        ModelUpscaler {
            model,
            self_ensemble: false,
        }
    }

    pub fn with_self_ensemble(mut self, on: bool) -> Self {
        self.self_ensemble = on;
        self
    }
}

impl<T: Real> Upscaler for ModelUpscaler<'_, T> {
    fn scale(&self) -> usize {
        self.model.spec().scale
    }

    fn upscale(&self, lr: &ImageBuf) -> Result<ImageBuf> {
        if lr.colorspace() != ColorSpace::Rgb {
            return Err(Error::Data("model input must be RGB".into()));
        }
        let s = self.scale();
        let x = lr.pad_to_even().to_tensor::<T>();
        let y = if self.self_ensemble {
            self_ensemble(|t| self.model.infer(t), &x)?
        } else {
            self.model.infer(&x)?
        };
        ImageBuf::from_tensor(&y, 0)?.crop(0, 0, lr.width() * s, lr.height() * s)
    }
}

#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub lr: ImageBuf,
    pub hr: ImageBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr_y: f64,
    pub ssim_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub images: Vec<ImageScore>,
    pub mean_psnr_y: f64,
    pub mean_ssim_y: f64,
}

/// Upscales each LR image and scores it against its HR image, in parallel across images.
pub fn evaluate<U: Upscaler + Sync>(up: &U, pairs: &[ImagePair], opts: EvalOptions) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let images = pairs
        .par_iter()
        .map(|p| {
            let sr = up.upscale(&p.lr)?;
            let m = evaluate_pair(&sr, &p.hr, opts)?;
            Ok(ImageScore {
                name: p.name.clone(),
                psnr_y: m.psnr_y,
                ssim_y: m.ssim_y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = images.len() as f64;
    Ok(EvalReport {
        mean_psnr_y: images.iter().map(|s| s.psnr_y).sum::<f64>() / n,
        mean_ssim_y: images.iter().map(|s| s.ssim_y).sum::<f64>() / n,
        images,
    })
}

/// Mean of `f` over the eight dihedral transforms of `x`, each output mapped back.
pub fn self_ensemble<T: Real>(f: impl Fn(&Tensor<T>) -> Result<Tensor<T>>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut dims = [0; 4];
    for t in Dihedral::all() {
        let y = t.invert(&f(&t.apply(x))?);
        dims = y.dims();
        match &mut acc {
            None => acc = Some(y.data().iter().map(|v| v.as_f64()).collect()),
            Some(a) => {
                if a.len() != y.numel() {
                    return Err(Error::dims(&y.dims(), "self-ensemble outputs differ in size"));
                }
                a.iter_mut().zip(y.data()).for_each(|(a, v)| *a += v.as_f64());
            }
        }
    }
    let data = acc
        .expect("eight transforms")
        .into_iter()
        .map(|v| T::from_f64_lossy(v / 8.0))
        .collect();
    Tensor::new(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_of_equivariant_map_is_single_pass() {
        let x = Tensor::<f64>::randn([1, 3, 4, 6], 3).unwrap();
        let double = |t: &Tensor<f64>| Ok(t.map(|v| 2.0 * v));
        let y = self_ensemble(double, &x).unwrap();
        assert!(y.max_abs_diff(&x.map(|v| 2.0 * v)) < 1e-15);
    }

    #[test]
    fn ensemble_of_nearest_upscaler_matches() {
        let img = ImageBuf::from_fn(5, 3, ColorSpace::Rgb, |c, y, x| ((c + y * 5 + x) % 9) as f64 / 9.0).unwrap();
        let up = |t: &Tensor<f64>| {
            let im = ImageBuf::from_tensor(t, 0)?;
            Ok(nearest_upscale(&im, 2)?.to_tensor())
        };
        let single = nearest_upscale(&img, 2).unwrap();
        let ens = self_ensemble(up, &img.to_tensor()).unwrap();
        let ens = ImageBuf::from_tensor(&ens, 0).unwrap();
        assert!(ens.data().iter().zip(single.data()).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
