use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    /// Divisor is always `k²`; padded taps count as zeros.
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    /// Stride-1 pooling that keeps spatial size; `kernel` must be odd.
    pub fn same(kind: PoolKind, kernel: usize) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "stride-1 pooling needs an odd kernel to preserve size, got {kernel}"
            )));
        }
        Ok(PoolSpec {
            kind,
            kernel,
            stride: 1,
            padding: kernel / 2,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        // padding >= kernel would allow windows that see no input at all
        if self.kernel == 0 || self.stride == 0 || self.padding >= self.kernel {
            return Err(Error::Config(format!("invalid pool {self:?}")));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::dims(&[h, w], "input smaller than pooling window"));
        }
        Ok((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }
}

/// Checks that a stride-1 max-pool with this kernel/padding keeps spatial size.
pub fn check_same_padding(kernel: usize, padding: usize) -> Result<()> {
    if kernel.is_multiple_of(2) || 2 * padding != kernel - 1 {
        return Err(Error::Config(format!(
            "stride-1 pooling with kernel {kernel} and padding {padding} changes spatial size"
        )));
    }
    Ok(())
}

pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat input index of the winning tap per output element (max pooling only).
    pub argmax: Option<Vec<usize>>,
}

pub fn pool2d_forward<T: Real>(x: &Tensor<T>, spec: &PoolSpec) -> Result<PoolOutput<T>> {
    let [b, c, h, w] = x.dims();
    let (oh, ow) = spec.output_hw(h, w)?;
    let planes = b * c;
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = (spec.kind == PoolKind::Max).then(|| Vec::with_capacity(planes * oh * ow));
    let norm = T::from_f64_lossy((spec.kernel * spec.kernel) as f64);
    for plane in 0..planes {
        let base = plane * h * w;
        let xs = &x.data()[base..base + h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * spec.stride) as isize - spec.padding as isize;
                let x0 = (ox * spec.stride) as isize - spec.padding as isize;
                let mut best = T::neg_infinity();
                let mut best_idx = usize::MAX;
                let mut sum = T::zero();
                for ky in 0..spec.kernel as isize {
                    let iy = y0 + ky;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..spec.kernel as isize {
                        let ix = x0 + kx;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let i = iy as usize * w + ix as usize;
                        let v = xs[i];
                        sum = sum + v;
                        // strict comparison keeps the first maximum in scan order
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = i;
                        }
                    }
                }
                match spec.kind {
                    PoolKind::Max => {
                        out.push(best);
                        if let Some(a) = argmax.as_mut() {
                            a.push(base + best_idx);
                        }
                    }
                    PoolKind::Avg => out.push(sum / norm),
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_parts([b, c, oh, ow], out),
        argmax,
    })
}

pub fn pool2d_backward<T: Real>(
    input_dims: [usize; 4],
    spec: &PoolSpec,
    argmax: Option<&[usize]>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [b, c, h, w] = input_dims;
    let (oh, ow) = spec.output_hw(h, w)?;
    if grad_out.dims() != [b, c, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "pool2d_backward",
            lhs: [b, c, oh, ow],
            rhs: grad_out.dims(),
        });
    }
    let mut gx = vec![T::zero(); b * c * h * w];
    match spec.kind {
        PoolKind::Max => {
            let argmax = argmax.ok_or_else(|| Error::Config("max pool backward needs argmax".into()))?;
            for (g, &i) in grad_out.data().iter().zip(argmax) {
                gx[i] = gx[i] + *g;
            }
        }
        PoolKind::Avg => {
            let norm = T::from_f64_lossy((spec.kernel * spec.kernel) as f64);
            for plane in 0..b * c {
                let gy = &grad_out.data()[plane * oh * ow..][..oh * ow];
                let gxp = &mut gx[plane * h * w..][..h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gy[oy * ow + ox] / norm;
                        let y0 = (oy * spec.stride) as isize - spec.padding as isize;
                        let x0 = (ox * spec.stride) as isize - spec.padding as isize;
                        for ky in 0..spec.kernel as isize {
                            let iy = y0 + ky;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..spec.kernel as isize {
                                let ix = x0 + kx;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let i = iy as usize * w + ix as usize;
                                gxp[i] = gxp[i] + g;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(input_dims, gx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_same(x: &Tensor<f64>) -> Tensor<f64> {
        pool2d_forward(x, &PoolSpec::same(PoolKind::Max, 3).unwrap())
            .unwrap()
            .output
    }

    #[test]
    fn constant_input_is_fixed_point() {
        let x = Tensor::<f64>::full([1, 2, 4, 5], -3.5).unwrap();
        assert_eq!(max_same(&x), x);
        let avg = pool2d_forward(&x, &PoolSpec::same(PoolKind::Avg, 3).unwrap())
            .unwrap()
            .output;
        // interior windows see nine taps
        assert_eq!(avg.at(0, 0, 1, 1), -3.5);
    }

    #[test]
    fn single_peak_spreads_to_its_neighbourhood() {
        let mut x = Tensor::<f64>::zeros([1, 1, 5, 5]).unwrap();
        x.data_mut()[2 * 5 + 2] = 1.0;
        let y = max_same(&x);
        for r in 0..5 {
            for c in 0..5 {
                let expect = if (1..=3).contains(&r) && (1..=3).contains(&c) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(y.at(0, 0, r, c), expect, "({r},{c})");
            }
        }
    }

    #[test]
    fn padding_never_wins_for_negative_inputs() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], -1.0).unwrap();
        assert!(max_same(&x).data().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn gradient_lands_on_first_argmax() {
        let x = Tensor::<f64>::new([1, 1, 1, 3], vec![2.0, 2.0, 1.0]).unwrap();
        let spec = PoolSpec::same(PoolKind::Max, 3).unwrap();
        let fwd = pool2d_forward(&x, &spec).unwrap();
        let gy = Tensor::<f64>::ones([1, 1, 1, 3]).unwrap();
        let gx = pool2d_backward(x.dims(), &spec, fwd.argmax.as_deref(), &gy).unwrap();
        assert_eq!(gx.data(), &[2.0, 1.0, 0.0]);
    }

    #[test]
    fn even_kernel_or_mismatched_padding_is_rejected() {
        assert!(PoolSpec::same(PoolKind::Max, 2).is_err());
        assert!(check_same_padding(3, 2).is_err());
        assert!(check_same_padding(5, 2).is_ok());
    }
}
