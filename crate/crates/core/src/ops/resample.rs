//! Fixed ×2 upsamplers used inside the downsampling branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampler {
    Bilinear,
    Nearest,
}

/// Two-tap interpolation along one axis: `out[d] = (1-f)·in[i0] + f·in[i1]`.
#[derive(Clone, Copy)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    frac: T,
}

/// Half-pixel-centre source positions for a ×2 upsample, clamped to the edge.
fn bilinear_taps<T: Real>(n: usize) -> Vec<Tap<T>> {
    (0..2 * n)
        .map(|d| {
            let src = ((d as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            Tap {
                i0,
                i1,
                frac: T::from_f64_lossy(frac),
            }
        })
        .collect()
}

pub fn upsample2_forward<T: Real>(x: &Tensor<T>, mode: Upsampler) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); b * c * oh * ow];
    match mode {
        Upsampler::Nearest => {
            for (plane, dst) in out.chunks_mut(oh * ow).enumerate() {
                let src = &x.data()[plane * h * w..][..h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        dst[oy * ow + ox] = src[(oy / 2) * w + ox / 2];
                    }
                }
            }
        }
        Upsampler::Bilinear => {
            let ty = bilinear_taps::<T>(h);
            let tx = bilinear_taps::<T>(w);
            let one = T::one();
            for (plane, dst) in out.chunks_mut(oh * ow).enumerate() {
                let src = &x.data()[plane * h * w..][..h * w];
                for (oy, a) in ty.iter().enumerate() {
                    for (ox, bt) in tx.iter().enumerate() {
                        let top = src[a.i0 * w + bt.i0] * (one - bt.frac) + src[a.i0 * w + bt.i1] * bt.frac;
                        let bot = src[a.i1 * w + bt.i0] * (one - bt.frac) + src[a.i1 * w + bt.i1] * bt.frac;
                        dst[oy * ow + ox] = top * (one - a.frac) + bot * a.frac;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts([b, c, oh, ow], out))
}

/// Transpose of [`upsample2_forward`].
pub fn upsample2_backward<T: Real>(input_dims: [usize; 4], mode: Upsampler, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input_dims;
    let (oh, ow) = (2 * h, 2 * w);
    if grad_out.dims() != [b, c, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "upsample2_backward",
            lhs: [b, c, oh, ow],
            rhs: grad_out.dims(),
        });
    }
    let mut gx = vec![T::zero(); b * c * h * w];
    let ty = bilinear_taps::<T>(h);
    let tx = bilinear_taps::<T>(w);
    let one = T::one();
    for (plane, gxp) in gx.chunks_mut(h * w).enumerate() {
        let gy = &grad_out.data()[plane * oh * ow..][..oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gy[oy * ow + ox];
                match mode {
                    Upsampler::Nearest => {
                        let i = (oy / 2) * w + ox / 2;
                        gxp[i] = gxp[i] + g;
                    }
                    Upsampler::Bilinear => {
                        let (a, bt) = (ty[oy], tx[ox]);
                        let taps = [
                            (a.i0 * w + bt.i0, (one - a.frac) * (one - bt.frac)),
                            (a.i0 * w + bt.i1, (one - a.frac) * bt.frac),
                            (a.i1 * w + bt.i0, a.frac * (one - bt.frac)),
                            (a.i1 * w + bt.i1, a.frac * bt.frac),
                        ];
                        for (i, wt) in taps {
                            gxp[i] = gxp[i] + g * wt;
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

    #[test]
    fn half_pixel_ramp() {
        let x = Tensor::<f64>::new([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = upsample2_forward(&x, Upsampler::Bilinear).unwrap();
        assert_eq!(y.dims(), [1, 1, 2, 4]);
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(&y.data()[4..], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constant_stays_constant() {
        for mode in [Upsampler::Bilinear, Upsampler::Nearest] {
            let x = Tensor::<f64>::full([2, 3, 3, 5], 0.7).unwrap();
            let y = upsample2_forward(&x, mode).unwrap();
            assert_eq!(y.dims(), [2, 3, 6, 10]);
            assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <U x, g> == <x, U^T g>
        for mode in [Upsampler::Bilinear, Upsampler::Nearest] {
            let x = Tensor::<f64>::randn([1, 2, 3, 4], 5).unwrap();
            let g = Tensor::<f64>::randn([1, 2, 6, 8], 6).unwrap();
            let ux = upsample2_forward(&x, mode).unwrap();
            let utg = upsample2_backward(x.dims(), mode, &g).unwrap();
            let lhs: f64 = ux.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(utg.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }
}
