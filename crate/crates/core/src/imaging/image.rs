use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    /// Luma only (the Y plane of studio-swing YCbCr).
    Y,
}

/// Planar image with `[0, 1]`-normalized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Result<Self> {
        let channels = match colorspace {
            ColorSpace::Rgb => 3,
            ColorSpace::Y => 1,
        };
        if width == 0 || height == 0 {
            return Err(Error::dims(&[channels, height, width], "empty image"));
        }
        if data.len() != channels * width * height {
            return Err(Error::dims(
                &[channels, height, width],
                format!("{} samples given", data.len()),
            ));
        }
        Ok(ImageBuf {
            width,
            height,
            channels,
            colorspace,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, colorspace: ColorSpace, value: f64) -> Result<Self> {
        let c = if colorspace == ColorSpace::Rgb { 3 } else { 1 };
        Self::new(width, height, colorspace, vec![value; c * width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let c = if colorspace == ColorSpace::Rgb { 3 } else { 1 };
        let mut data = Vec::with_capacity(c * width * height);
        for ch in 0..c {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(ch, y, x));
                }
            }
        }
        Self::new(width, height, colorspace, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuf {
        ImageBuf {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamp(&self) -> ImageBuf {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Clamps to `[0, 1]` and rounds to the nearest multiple of 1/255.
    pub fn quantize(&self) -> ImageBuf {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImageBuf> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::dims(
                &[self.channels, self.height, self.width],
                format!("crop {width}x{height}+{x0}+{y0} out of bounds"),
            ));
        }
        ImageBuf::from_fn(width, height, self.colorspace, |c, y, x| self.at(c, y0 + y, x0 + x))
    }

    /// Removes `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<ImageBuf> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::dims(
                &[self.channels, self.height, self.width],
                format!("border crop {border} leaves no pixels"),
            ));
        }
        self.crop(border, border, self.width - 2 * border, self.height - 2 * border)
    }

    /// Crops to the largest size whose sides are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<ImageBuf> {
        let (w, h) = (self.width / m * m, self.height / m * m);
        self.crop(0, 0, w, h)
    }

    /// Replicates the last row/column so both sides become even.
    pub fn pad_to_even(&self) -> ImageBuf {
        let w = self.width + self.width % 2;
        let h = self.height + self.height % 2;
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        ImageBuf::from_fn(w, h, self.colorspace, |c, y, x| {
            self.at(c, y.min(self.height - 1), x.min(self.width - 1))
        })
        .expect("padded dims are non-zero")
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64_lossy(v)).collect();
        Tensor::new([1, self.channels, self.height, self.width], data).expect("image dims are valid")
    }

    /// Reads one batch item of a `[N, C, H, W]` tensor with C = 3 (RGB) or 1 (Y).
    pub fn from_tensor<T: Real>(t: &Tensor<T>, item: usize) -> Result<ImageBuf> {
        let [n, c, h, w] = t.dims();
        let colorspace = match c {
            3 => ColorSpace::Rgb,
            1 => ColorSpace::Y,
            _ => return Err(Error::dims(&t.dims(), "image tensors need 1 or 3 channels")),
        };
        if item >= n {
            return Err(Error::dims(&t.dims(), format!("batch item {item} out of range")));
        }
        let len = c * h * w;
        let data = t.data()[item * len..(item + 1) * len]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        ImageBuf::new(w, h, colorspace, data)
    }

    pub fn load_png(path: &Path) -> Result<ImageBuf> {
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                source: e,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.as_raw();
        ImageBuf::from_fn(w, h, ColorSpace::Rgb, |c, y, x| raw[(y * w + x) * 3 + c] as f64 / 255.0)
    }

    pub fn to_u8_interleaved(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.push((self.at(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let color = match self.colorspace {
            ColorSpace::Rgb => image::ExtendedColorType::Rgb8,
            ColorSpace::Y => image::ExtendedColorType::L8,
        };
        let mut buf = Vec::new();
        image::codecs::png::PngEncoder::new(&mut buf)
            .write_image(&self.to_u8_interleaved(), self.width as u32, self.height as u32, color)
            .map_err(|e| Error::Image {
                path: "<memory>".into(),
                source: e,
            })?;
        Ok(buf)
    }

    /// Writes an 8-bit PNG atomically.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.encode_png()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ImageBuf {
        ImageBuf::from_fn(5, 3, ColorSpace::Rgb, |c, y, x| ((c * 15 + y * 5 + x) as f64) / 60.0).unwrap()
    }

    #[test]
    fn png_round_trip_is_exact_for_quantized_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = sample().quantize();
        img.save_png(&path).unwrap();
        let back = ImageBuf::load_png(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pad_and_crop() {
        let img = sample();
        let p = img.pad_to_even();
        assert_eq!((p.width(), p.height()), (6, 4));
        assert_eq!(p.at(1, 3, 5), img.at(1, 2, 4));
        assert_eq!(p.crop(0, 0, 5, 3).unwrap(), img);
        assert!(img.shave(2).is_err());
        assert_eq!(img.shave(1).unwrap().width(), 3);
    }

    #[test]
    fn tensor_round_trip() {
        let img = sample();
        let t: Tensor<f64> = img.to_tensor();
        assert_eq!(t.dims(), [1, 3, 3, 5]);
        assert_eq!(ImageBuf::from_tensor(&t, 0).unwrap(), img);
    }
}
