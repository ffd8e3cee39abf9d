//! Rank-4 tensors in batch-channel-height-width layout.
//!
//! # Binary dump format
//!
//! A dump is a 16-byte header followed by the elements, little-endian, in
//! row-major `(b, c, h, w)` order:
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 4    | magic `b"HPTN"`                       |
//! | 4      | 2    | dtype code, u16 LE (1 = f32, 2 = f64) |
//! | 6      | 2    | reserved, must be 0                   |
//! | 8      | 8    | dims `b, c, h, w`, each u16 LE        |
//!
//! Dims are therefore capped at 65535. A dump written as one dtype can be
//! read back as the other; values are converted on load.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::real::{DType, Real};

pub type Dims = [usize; 4];

pub const TENSOR_MAGIC: &[u8; 4] = b"HPTN";
pub const TENSOR_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

pub fn numel(dims: Dims) -> usize {
    dims.iter().product()
}

pub fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::dims(&dims, "all dims must be >= 1"));
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != numel(dims) {
            return Err(Error::dims(&dims, format!("buffer holds {} elements", data.len())));
        }
        Ok(Tensor {
            dims,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), numel(dims));
        Tensor {
            dims,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(dims: Dims, value: T) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self::from_parts(dims, vec![value; numel(dims)]))
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: Dims) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Self::from_parts(other.dims, vec![T::zero(); other.data.len()])
    }

    /// Standard-normal samples from a ChaCha8 stream seeded with `seed`.
    pub fn randn(dims: Dims, seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..numel(dims))
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::from_f64_lossy(v)
            })
            .collect();
        Ok(Self::from_parts(dims, data))
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn rand_uniform(dims: Dims, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        use rand::Rng;
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..numel(dims))
            .map(|_| T::from_f64_lossy(rng.gen_range(lo..hi)))
            .collect();
        Ok(Self::from_parts(dims, data))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.dims;
        ((b * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(b, c, h, w)]
    }

    pub fn reshape(self, dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        if numel(dims) != self.data.len() {
            return Err(Error::dims(&dims, "reshape must preserve element count"));
        }
        Ok(Tensor {
            dims,
            data: self.data,
            requires_grad: self.requires_grad,
            grad: None,
        })
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[T]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::dims(
                &self.dims,
                format!("gradient has {} elements", delta.len()),
            ));
        }
        let grad = self.grad.get_or_insert_with(|| vec![T::zero(); delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g = *g + *d;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.dims,
            self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// Extracts batch item `b` as a `(1, C, H, W)` tensor.
    pub fn batch_item(&self, b: usize) -> Tensor<T> {
        let [_, c, h, w] = self.dims;
        let len = c * h * w;
        Self::from_parts([1, c, h, w], self.data[b * len..(b + 1) * len].to_vec())
    }

    /// Concatenates `(1, C, H, W)`-compatible tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Data("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(items.len() * first.numel());
        let mut batch = 0;
        for t in items {
            let [b, tc, th, tw] = t.dims;
            if (tc, th, tw) != (c, h, w) {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    lhs: first.dims,
                    rhs: t.dims,
                });
            }
            batch += b;
            data.extend_from_slice(&t.data);
        }
        Ok(Self::from_parts([batch, c, h, w], data))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(TENSOR_HEADER_LEN + self.data.len() * T::DTYPE.size());
        buf.extend_from_slice(TENSOR_MAGIC);
        buf.extend_from_slice(&T::DTYPE.code().to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        for d in self.dims {
            let d = u16::try_from(d).expect("dims checked at construction");
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            v.write_le(&mut buf);
        }
        buf
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptHeader {
            what: "tensor".into(),
            reason: reason.into(),
        };
        let mut header = [0u8; TENSOR_HEADER_LEN];
        input.read_exact(&mut header).map_err(|_| corrupt("truncated header"))?;
        if &header[0..4] != TENSOR_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let dtype = DType::from_code(u16::from_le_bytes([header[4], header[5]]))
            .ok_or_else(|| corrupt("unknown dtype code"))?;
        if header[6] != 0 || header[7] != 0 {
            return Err(corrupt("reserved bytes set"));
        }
        let mut dims = [0usize; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            *d = u16::from_le_bytes([header[8 + 2 * i], header[9 + 2 * i]]) as usize;
        }
        check_dims(dims).map_err(|_| corrupt("zero dimension"))?;
        let n = numel(dims);
        let mut raw = vec![0u8; n * dtype.size()];
        input.read_exact(&mut raw).map_err(|_| corrupt("truncated payload"))?;
        let data = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| T::from_f64_lossy(f32::read_le(c) as f64))
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| T::from_f64_lossy(f64::read_le(c)))
                .collect(),
        };
        Ok(Self::from_parts(dims, data))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.dims.iter().any(|&d| d > u16::MAX as usize) {
            return Err(Error::dims(&self.dims, "dump format caps dims at 65535"));
        }
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_has_four_zero_entries() {
        let t = Tensor::<f64>::zeros([1, 1, 2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(Tensor::<f32>::zeros([1, 0, 2, 2]).is_err());
        assert!(Tensor::<f32>::randn([0, 1, 1, 1], 3).is_err());
        assert!(Tensor::<f32>::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn randn_is_deterministic_per_seed() {
        let a = Tensor::<f32>::randn([1, 4, 3, 3], 7).unwrap();
        let b = Tensor::<f32>::randn([1, 4, 3, 3], 7).unwrap();
        let c = Tensor::<f32>::randn([1, 4, 3, 3], 8).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn randn_sample_mean_is_near_zero() {
        let t = Tensor::<f64>::randn([1, 1, 1000, 1000], 11).unwrap();
        let mean = t.data().iter().sum::<f64>() / t.numel() as f64;
        // standard error is 1e-3; 0.01 is a 10-sigma band
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn grad_accumulates_until_zeroed() {
        let mut t = Tensor::<f64>::zeros([1, 1, 1, 2]).unwrap().with_grad();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }

    #[test]
    fn dump_header_is_byte_exact() {
        let t = Tensor::<f32>::new([1, 2, 1, 1], vec![1.0, -2.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(
            &bytes[..16],
            &[b'H', b'P', b'T', b'N', 1, 0, 0, 0, 1, 0, 2, 0, 1, 0, 1, 0]
        );
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn dump_round_trip_and_cross_dtype() {
        let t = Tensor::<f64>::randn([2, 3, 4, 5], 1).unwrap();
        let back = Tensor::<f64>::read_from(&mut t.to_bytes().as_slice()).unwrap();
        assert_eq!(t, back);
        let narrowed = Tensor::<f32>::read_from(&mut t.to_bytes().as_slice()).unwrap();
        assert_eq!(narrowed.dims(), t.dims());
        assert!((narrowed.data()[0] as f64 - t.data()[0]).abs() < 1e-6);
    }

    #[test]
    fn truncated_dump_is_corrupt() {
        let t = Tensor::<f32>::ones([1, 1, 2, 2]).unwrap();
        let bytes = t.to_bytes();
        for cut in [0, 10, 17] {
            let err = Tensor::<f32>::read_from(&mut &bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CorruptHeader { .. }), "{err}");
        }
    }
}
