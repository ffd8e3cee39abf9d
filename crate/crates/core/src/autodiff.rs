//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records one forward pass. Only nodes that depend on a tracked
//! leaf are recorded; everything else is evaluated eagerly and its value is
//! released as soon as the last [`Var`] referencing it is dropped. Nodes are
//! appended in evaluation order, so walking them backwards is a valid reverse
//! topological order and each node is visited exactly once. Fan-out (a value
//! consumed by several ops) sums its incoming gradients.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec, PoolSpec, Upsampler};
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

type Id = Option<usize>;

enum Op<T> {
    Leaf,
    Add(Id, Id),
    Sub(Id, Id),
    Mul {
        a: Id,
        b: Id,
        av: Rc<Tensor<T>>,
        bv: Rc<Tensor<T>>,
    },
    Scale(Id, T),
    /// Constant offset; gradient passes through unchanged.
    Shift(Id),
    Sum(Id),
    Mean(Id),
    L1 {
        input: Id,
        sign: Vec<T>,
    },
    Mse {
        input: Id,
        residual: Vec<T>,
    },
    Relu {
        input: Id,
        output: Rc<Tensor<T>>,
    },
    Conv {
        x: Id,
        w: Id,
        b: Id,
        spec: ConvSpec,
        xv: Rc<Tensor<T>>,
        wv: Rc<Tensor<T>>,
    },
    Pool {
        input: Id,
        spec: PoolSpec,
        in_dims: Dims,
        argmax: Option<Vec<usize>>,
    },
    Upsample2 {
        input: Id,
        mode: Upsampler,
        in_dims: Dims,
    },
    Shuffle(Id, usize),
    Unshuffle(Id, usize),
}

struct Node<T> {
    op: Op<T>,
    dims: Dims,
}

pub struct Tape<T> {
    recording: bool,
    nodes: RefCell<Vec<Node<T>>>,
}

/// A value produced on a tape.
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: Id,
    value: Rc<Tensor<T>>,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        Var {
            tape: self.tape,
            id: self.id,
            value: Rc::clone(&self.value),
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            recording: true,
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// A tape that never records: forward-only evaluation.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op<T>, dims: Dims) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, dims });
        nodes.len() - 1
    }

    fn wrap(&self, id: Id, value: Tensor<T>) -> Var<'_, T> {
        Var {
            tape: self,
            id,
            value: Rc::new(value),
        }
    }

    /// Wraps a tensor; tracked when the tensor has `requires_grad` set.
    pub fn leaf(&self, tensor: Tensor<T>) -> Var<'_, T> {
        let id = (self.recording && tensor.requires_grad()).then(|| self.push(Op::Leaf, tensor.dims()));
        self.wrap(id, tensor)
    }

    pub fn constant(&self, tensor: Tensor<T>) -> Var<'_, T> {
        self.wrap(None, tensor)
    }

    /// Snapshot of a parameter tensor; tracked when it requires grad.
    pub fn param(&self, tensor: &Tensor<T>) -> Var<'_, T> {
        let mut snapshot = Tensor::from_parts(tensor.dims(), tensor.data().to_vec());
        snapshot.set_requires_grad(tensor.requires_grad());
        self.leaf(snapshot)
    }

    /// Propagates from a scalar `loss` back to every tracked leaf.
    pub fn backward(&self, loss: &Var<'_, T>) -> Result<Grads<T>> {
        if loss.value.dims() != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(loss.value.dims()));
        }
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::DetachedGraph);
        }
        let root = loss.id.ok_or(Error::DetachedGraph)?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root] = Some(vec![T::one()]);

        for idx in (0..=root).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let dims = node.dims;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    if let Some(b) = b {
                        let neg: Vec<T> = g.iter().map(|v| -*v).collect();
                        accumulate(&mut grads, Some(*b), &neg);
                    }
                }
                Op::Mul { a, b, av, bv } => {
                    if a.is_some() {
                        let ga: Vec<T> = g.iter().zip(bv.data()).map(|(g, b)| *g * *b).collect();
                        accumulate(&mut grads, *a, &ga);
                    }
                    if b.is_some() {
                        let gb: Vec<T> = g.iter().zip(av.data()).map(|(g, a)| *g * *a).collect();
                        accumulate(&mut grads, *b, &gb);
                    }
                }
                Op::Scale(a, c) => {
                    let ga: Vec<T> = g.iter().map(|v| *v * *c).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Shift(a) => accumulate(&mut grads, *a, &g),
                Op::Sum(a) => {
                    let n = input_len(&nodes, *a);
                    accumulate(&mut grads, *a, &vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = input_len(&nodes, *a);
                    let v = g[0] / T::from_f64_lossy(n as f64);
                    accumulate(&mut grads, *a, &vec![v; n]);
                }
                Op::L1 { input, sign } => {
                    let scale = g[0] / T::from_f64_lossy(sign.len() as f64);
                    let gi: Vec<T> = sign.iter().map(|s| *s * scale).collect();
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Mse { input, residual } => {
                    let scale = g[0] * T::from_f64_lossy(2.0 / residual.len() as f64);
                    let gi: Vec<T> = residual.iter().map(|r| *r * scale).collect();
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Relu { input, output } => {
                    let gi = ops::relu_backward(output, &g);
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Conv { x, w, b, spec, xv, wv } => {
                    let gy = Tensor::from_parts(dims, g);
                    let cg = ops::conv2d_backward(xv, spec, wv.data(), &gy)?;
                    accumulate(&mut grads, *x, cg.input.data());
                    accumulate(&mut grads, *w, &cg.weight);
                    if let Some(gb) = cg.bias {
                        accumulate(&mut grads, *b, &gb);
                    }
                }
                Op::Pool {
                    input,
                    spec,
                    in_dims,
                    argmax,
                } => {
                    let gy = Tensor::from_parts(dims, g);
                    let gi = ops::pool2d_backward(*in_dims, spec, argmax.as_deref(), &gy)?;
                    accumulate(&mut grads, *input, gi.data());
                }
                Op::Upsample2 { input, mode, in_dims } => {
                    let gy = Tensor::from_parts(dims, g);
                    let gi = ops::upsample2_backward(*in_dims, *mode, &gy)?;
                    accumulate(&mut grads, *input, gi.data());
                }
                Op::Shuffle(a, r) => {
                    let gy = Tensor::from_parts(dims, g);
                    let gi = ops::pixel_unshuffle(&gy, *r)?;
                    accumulate(&mut grads, *a, gi.data());
                }
                Op::Unshuffle(a, r) => {
                    let gy = Tensor::from_parts(dims, g);
                    let gi = ops::pixel_shuffle(&gy, *r)?;
                    accumulate(&mut grads, *a, gi.data());
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| match n.op {
                Op::Leaf => g,
                _ => None,
            })
            .collect();
        Ok(Grads {
            grads,
            dims: nodes.iter().map(|n| n.dims).collect(),
        })
    }
}

fn input_len<T>(nodes: &[Node<T>], id: Id) -> usize {
    id.map(|i| nodes[i].dims.iter().product()).unwrap_or(0)
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], id: Id, delta: &[T]) {
    let Some(id) = id else { return };
    match &mut grads[id] {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a = *a + *d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
    dims: Vec<Dims>,
}

impl<T: Real> Grads<T> {
    /// Gradient with respect to a tracked leaf; `None` when unreachable or untracked.
    pub fn get(&self, var: &Var<'_, T>) -> Option<Tensor<T>> {
        let id = var.id?;
        let g = self.grads.get(id)?.as_ref()?;
        Some(Tensor::from_parts(self.dims[id], g.clone()))
    }

    pub fn raw(&self, var: &Var<'_, T>) -> Option<&[T]> {
        self.grads.get(var.id?)?.as_deref()
    }
}

fn same_dims<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.dims(),
            rhs: b.dims(),
        });
    }
    Ok(())
}

impl<'t, T: Real> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn dims(&self) -> Dims {
        self.value.dims()
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    /// Copies the value out, detached from the tape.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_parts(self.value.dims(), self.value.data().to_vec())
    }

    fn derive(&self, tracked: bool, op: impl FnOnce() -> Op<T>, value: Tensor<T>) -> Var<'t, T> {
        let id = (tracked && self.tape.recording).then(|| self.tape.push(op(), value.dims()));
        self.tape.wrap(id, value)
    }

    fn zip_with(&self, other: &Var<'t, T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        Tensor::from_parts(
            self.dims(),
            self.value
                .data()
                .iter()
                .zip(other.value.data())
                .map(|(a, b)| f(*a, *b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_dims("add", &self.value, &other.value)?;
        let value = self.zip_with(other, |a, b| a + b);
        let (a, b) = (self.id, other.id);
        Ok(self.derive(a.is_some() || b.is_some(), || Op::Add(a, b), value))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_dims("sub", &self.value, &other.value)?;
        let value = self.zip_with(other, |a, b| a - b);
        let (a, b) = (self.id, other.id);
        Ok(self.derive(a.is_some() || b.is_some(), || Op::Sub(a, b), value))
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_dims("mul", &self.value, &other.value)?;
        let value = self.zip_with(other, |a, b| a * b);
        let (a, b) = (self.id, other.id);
        let (av, bv) = (Rc::clone(&self.value), Rc::clone(&other.value));
        Ok(self.derive(a.is_some() || b.is_some(), || Op::Mul { a, b, av, bv }, value))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        let value = self.value.map(|v| v * c);
        let a = self.id;
        self.derive(a.is_some(), || Op::Scale(a, c), value)
    }

    /// Adds a constant per channel (used for mean shifting).
    pub fn shift_channels(&self, offsets: &[T]) -> Result<Var<'t, T>> {
        let [_, c, h, w] = self.dims();
        if offsets.len() != c {
            return Err(Error::dims(&self.dims(), format!("{} channel offsets", offsets.len())));
        }
        let plane = h * w;
        let data = self
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| *v + offsets[(i / plane) % c])
            .collect();
        let value = Tensor::from_parts(self.dims(), data);
        let a = self.id;
        Ok(self.derive(a.is_some(), || Op::Shift(a), value))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let s = self.value.data().iter().copied().sum::<T>();
        let a = self.id;
        self.derive(a.is_some(), || Op::Sum(a), Tensor::from_parts([1, 1, 1, 1], vec![s]))
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = T::from_f64_lossy(self.value.numel() as f64);
        let s = self.value.data().iter().copied().sum::<T>() / n;
        let a = self.id;
        self.derive(a.is_some(), || Op::Mean(a), Tensor::from_parts([1, 1, 1, 1], vec![s]))
    }

    /// `mean |self - target|`; subgradient 0 where the residual is exactly 0.
    pub fn l1_loss(&self, target: &Tensor<T>) -> Result<Var<'t, T>> {
        same_dims("l1_loss", &self.value, target)?;
        let mut total = T::zero();
        let mut sign = Vec::with_capacity(target.numel());
        for (a, b) in self.value.data().iter().zip(target.data()) {
            let d = *a - *b;
            total = total + d.abs();
            sign.push(if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            });
        }
        let loss = total / T::from_f64_lossy(target.numel() as f64);
        let input = self.id;
        Ok(self.derive(
            input.is_some(),
            || Op::L1 { input, sign },
            Tensor::from_parts([1, 1, 1, 1], vec![loss]),
        ))
    }

    /// `mean (self - target)²`
    pub fn mse_loss(&self, target: &Tensor<T>) -> Result<Var<'t, T>> {
        same_dims("mse_loss", &self.value, target)?;
        let residual: Vec<T> = self
            .value
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| *a - *b)
            .collect();
        let loss = residual.iter().map(|r| *r * *r).sum::<T>() / T::from_f64_lossy(residual.len() as f64);
        let input = self.id;
        Ok(self.derive(
            input.is_some(),
            || Op::Mse { input, residual },
            Tensor::from_parts([1, 1, 1, 1], vec![loss]),
        ))
    }

    pub fn relu(&self) -> Var<'t, T> {
        let value = ops::relu(&self.value);
        let input = self.id;
        if input.is_some() && self.tape.recording {
            let output = Rc::new(value);
            let id = self.tape.push(
                Op::Relu {
                    input,
                    output: Rc::clone(&output),
                },
                output.dims(),
            );
            return Var {
                tape: self.tape,
                id: Some(id),
                value: output,
            };
        }
        self.tape.wrap(None, value)
    }

    pub fn conv2d(&self, spec: &ConvSpec, weight: &Var<'t, T>, bias: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
        if spec.bias != bias.is_some() {
            return Err(Error::Config(format!(
                "conv spec bias={} but bias buffer {}",
                spec.bias,
                if bias.is_some() { "given" } else { "missing" }
            )));
        }
        let value = ops::conv2d_forward(&self.value, spec, weight.value.data(), bias.map(|b| b.value.data()))?;
        let (x, w, b) = (self.id, weight.id, bias.and_then(|b| b.id));
        let tracked = x.is_some() || w.is_some() || b.is_some();
        let (xv, wv) = (Rc::clone(&self.value), Rc::clone(&weight.value));
        Ok(self.derive(
            tracked,
            || Op::Conv {
                x,
                w,
                b,
                spec: *spec,
                xv,
                wv,
            },
            value,
        ))
    }

    pub fn pool2d(&self, spec: &PoolSpec) -> Result<Var<'t, T>> {
        let out = ops::pool2d_forward(&self.value, spec)?;
        let input = self.id;
        let in_dims = self.dims();
        let argmax = out.argmax;
        Ok(self.derive(
            input.is_some(),
            || Op::Pool {
                input,
                spec: *spec,
                in_dims,
                argmax,
            },
            out.output,
        ))
    }

    pub fn upsample2(&self, mode: Upsampler) -> Result<Var<'t, T>> {
        let value = ops::upsample2_forward(&self.value, mode)?;
        let input = self.id;
        let in_dims = self.dims();
        Ok(self.derive(input.is_some(), || Op::Upsample2 { input, mode, in_dims }, value))
    }

    pub fn pixel_shuffle(&self, r: usize) -> Result<Var<'t, T>> {
        let value = ops::pixel_shuffle(&self.value, r)?;
        let a = self.id;
        Ok(self.derive(a.is_some(), || Op::Shuffle(a, r), value))
    }

    pub fn pixel_unshuffle(&self, r: usize) -> Result<Var<'t, T>> {
        let value = ops::pixel_unshuffle(&self.value, r)?;
        let a = self.id;
        Ok(self.derive(a.is_some(), || Op::Unshuffle(a, r), value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracked(t: Tensor<f64>) -> Tensor<f64> {
        t.with_grad()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(tracked(Tensor::randn([1, 2, 3, 3], 1).unwrap()));
        let loss = x.sum();
        let g = tape.backward(&loss).unwrap();
        assert!(g.get(&x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn square_gradient_is_twice_input() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(tracked(Tensor::randn([1, 2, 3, 3], 2).unwrap()));
        let loss = x.mul(&x).unwrap().sum();
        let g = tape.backward(&loss).unwrap().get(&x).unwrap();
        for (gv, xv) in g.data().iter().zip(x.value().data()) {
            assert_eq!(*gv, 2.0 * xv);
        }
    }

    #[test]
    fn add_routes_upstream_to_both_inputs() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(tracked(Tensor::randn([1, 1, 2, 2], 3).unwrap()));
        let b = tape.leaf(tracked(Tensor::randn([1, 1, 2, 2], 4).unwrap()));
        let loss = a.add(&b).unwrap().sum();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&a).unwrap().data(), &[1.0; 4]);
        assert_eq!(g.get(&b).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn add_with_zeros_is_identity() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::randn([1, 2, 3, 3], 5).unwrap();
        let z = Tensor::zeros_like(&x);
        let y = tape.constant(x.clone()).add(&tape.constant(z)).unwrap();
        assert_eq!(y.to_tensor(), x);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros([1, 1, 2, 2]).unwrap());
        let b = tape.constant(Tensor::zeros([1, 1, 2, 3]).unwrap());
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached_losses() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(tracked(Tensor::ones([1, 1, 2, 2]).unwrap()));
        assert!(matches!(tape.backward(&x), Err(Error::NonScalarLoss(_))));

        let c = tape.constant(Tensor::ones([1, 1, 2, 2]).unwrap()).sum();
        assert!(matches!(tape.backward(&c), Err(Error::DetachedGraph)));

        let other = Tape::<f64>::new();
        let y = other.leaf(tracked(Tensor::ones([1, 1, 1, 1]).unwrap()));
        assert!(matches!(tape.backward(&y), Err(Error::DetachedGraph)));

        let inf = Tape::<f64>::inference();
        let z = inf.leaf(tracked(Tensor::ones([1, 1, 2, 2]).unwrap())).sum();
        assert!(matches!(inf.backward(&z), Err(Error::DetachedGraph)));
    }

    #[test]
    fn shared_subexpression_sums_gradients() {
        // loss = sum(h + h) with h = relu(x) must equal the duplicated
        // construction sum(relu(x) + relu(x')) with x' a copy of x.
        let x0 = Tensor::<f64>::randn([1, 2, 3, 3], 6).unwrap();
        let tape = Tape::new();
        let x = tape.leaf(x0.clone().with_grad());
        let h = x.relu();
        let shared = tape.backward(&h.add(&h).unwrap().sum()).unwrap().get(&x).unwrap();

        let tape2 = Tape::new();
        let xa = tape2.leaf(x0.clone().with_grad());
        let xb = tape2.leaf(x0.with_grad());
        let loss = xa.relu().add(&xb.relu()).unwrap().sum();
        let g = tape2.backward(&loss).unwrap();
        let ga = g.get(&xa).unwrap();
        let gb = g.get(&xb).unwrap();
        for i in 0..shared.numel() {
            assert_eq!(shared.data()[i], ga.data()[i] + gb.data()[i]);
        }
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones([1, 1, 2, 2]).unwrap());
        let _y = x.relu().scale(2.0).sum();
        assert!(tape.is_empty());
    }
}
