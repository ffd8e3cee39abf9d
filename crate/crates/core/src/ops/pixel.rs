//! Space-to-depth and depth-to-space rearrangements.
//!
//! Channel ordering is fixed: input channel `c` at `(h·r + dy, w·r + dx)`
//! maps to output channel `c·r² + dy·r + dx` at `(h, w)`. Shuffle is the
//! exact inverse. Both are pure permutations.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::dims(
            &x.dims(),
            format!("pixel_unshuffle needs H and W divisible by {r}"),
        ));
    }
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![T::zero(); x.numel()];
    let src = x.data();
    for n in 0..b {
        for ch in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = ch * r * r + dy * r + dx;
                    let dst = &mut out[((n * c * r * r) + oc) * oh * ow..][..oh * ow];
                    for y in 0..oh {
                        let row = &src[((n * c + ch) * h + y * r + dy) * w..][..w];
                        for xo in 0..ow {
                            dst[y * ow + xo] = row[xo * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts([b, c * r * r, oh, ow], out))
}

pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims();
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::dims(
            &x.dims(),
            format!("pixel_shuffle needs channels divisible by {}", r * r),
        ));
    }
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); x.numel()];
    let src = x.data();
    for n in 0..b {
        for ch in 0..oc {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = ch * r * r + dy * r + dx;
                    let plane = &src[(n * c + ic) * h * w..][..h * w];
                    for y in 0..h {
                        let row = &mut out[((n * oc + ch) * oh + y * r + dy) * ow..][..ow];
                        for xi in 0..w {
                            row[xi * r + dx] = plane[y * w + xi];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts([b, oc, oh, ow], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unshuffle_2x2_block_becomes_four_channels() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_unshuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), [1, 4, 1, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shuffle_inverts_unshuffle() {
        for r in [2, 3, 4] {
            let x = Tensor::<f64>::randn([2, 3, 4 * r, 2 * r], r as u64).unwrap();
            let down = pixel_unshuffle(&x, r).unwrap();
            assert_eq!(down.dims(), [2, 3 * r * r, 4, 2]);
            assert_eq!(pixel_shuffle(&down, r).unwrap(), x);
        }
    }

    #[test]
    fn indivisible_shapes_are_rejected() {
        let x = Tensor::<f32>::zeros([1, 3, 5, 4]).unwrap();
        assert!(pixel_unshuffle(&x, 2).is_err());
        assert!(pixel_shuffle(&x, 2).is_err());
    }
}
