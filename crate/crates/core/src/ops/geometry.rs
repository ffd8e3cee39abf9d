//! The eight dihedral transforms of a square grid, applied to the spatial axes.

use crate::real::Real;
use crate::tensor::Tensor;

/// Transform `t ∈ 0..8`: optional horizontal flip (`t >= 4`) followed by
/// `t % 4` counter-clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral(u8);

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral(0);

    pub fn new(index: u8) -> Self {
        assert!(index < 8, "dihedral index {index} out of range");
        Dihedral(index)
    }

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8).map(Dihedral)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn flip(self) -> bool {
        self.0 >= 4
    }

    pub fn quarter_turns(self) -> u8 {
        self.0 % 4
    }

    pub fn apply<T: Real>(self, x: &Tensor<T>) -> Tensor<T> {
        let mut out = if self.flip() { flip_h(x) } else { x.clone() };
        for _ in 0..self.quarter_turns() {
            out = rot90(&out);
        }
        out
    }

    pub fn invert<T: Real>(self, y: &Tensor<T>) -> Tensor<T> {
        let mut out = y.clone();
        for _ in 0..(4 - self.quarter_turns()) % 4 {
            out = rot90(&out);
        }
        if self.flip() {
            flip_h(&out)
        } else {
            out
        }
    }
}

pub fn flip_h<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [b, c, h, w] = x.dims();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(w) {
        out.extend(row.iter().rev());
    }
    Tensor::from_parts([b, c, h, w], out)
}

/// Counter-clockwise quarter turn: `out[i][j] = in[j][W-1-i]`, shape `(W, H)`.
pub fn rot90<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [b, c, h, w] = x.dims();
    let mut out = vec![T::zero(); x.numel()];
    for (src, dst) in x.data().chunks(h * w).zip(out.chunks_mut(h * w)) {
        for i in 0..w {
            for j in 0..h {
                dst[i * h + j] = src[j * w + (w - 1 - i)];
            }
        }
    }
    Tensor::from_parts([b, c, w, h], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_transform_inverts() {
        let x = Tensor::<f64>::randn([2, 3, 4, 6], 9).unwrap();
        for t in Dihedral::all() {
            assert_eq!(t.invert(&t.apply(&x)), x, "transform {}", t.index());
        }
    }

    #[test]
    fn transforms_are_distinct() {
        let x = Tensor::<f64>::randn([1, 1, 3, 3], 1).unwrap();
        let outs: Vec<_> = Dihedral::all().map(|t| t.apply(&x)).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outs[i], outs[j]);
            }
        }
    }

    #[test]
    fn quarter_turn_layout() {
        let x = Tensor::<f64>::new([1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let y = rot90(&x);
        assert_eq!(y.dims(), [1, 1, 3, 2]);
        assert_eq!(y.data(), &[3., 6., 2., 5., 1., 4.]);
    }
}
