//! Learnable parameters and the convolution layer that owns them.

use rand::Rng;

use crate::autodiff::{Grads, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::ConvSpec;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Flat, ordered list of every learnable buffer in a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor<T>) -> ParamId {
        tensor.set_requires_grad(true);
        self.params.push(Param {
            name: name.into(),
            tensor,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Sum of all buffer lengths.
    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Places a snapshot of every parameter on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.params.iter().map(|p| tape.param(&p.tensor)).collect(),
        }
    }

    /// Adds the gradients from a backward pass into each parameter's buffer.
    pub fn accumulate(&mut self, bound: &Bound<'_, T>, grads: &Grads<T>) -> Result<()> {
        if bound.vars.len() != self.params.len() {
            return Err(Error::Config("bound parameter list does not match store".into()));
        }
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.raw(v) {
                p.tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// Tape handles for every parameter, indexed like the store.
pub struct Bound<'t, T> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    pub fn var(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    /// Uniform init in `±1/sqrt(fan_in)` for weight and bias.
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        name: impl Into<String>,
        spec: ConvSpec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let fan_in = spec.in_per_group() * spec.kernel.0 * spec.kernel.1;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut sample = |n: usize| -> Vec<T> {
            (0..n)
                .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                .collect()
        };
        let weight = Tensor::from_parts(spec.weight_dims(), sample(spec.weight_len()));
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = spec.bias.then(|| {
            let b = Tensor::from_parts([spec.out_channels, 1, 1, 1], sample(spec.out_channels));
            store.add(format!("{name}.bias"), b)
        });
        Ok(Conv {
            name,
            spec,
            weight,
            bias,
        })
    }

    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(&self.spec, p.var(self.weight), self.bias.map(|b| p.var(b)))
    }

    /// Overwrites the weights (and zeroes the bias).
    pub fn set_weights<T: Real>(&self, store: &mut ParamStore<T>, weights: &[T]) -> Result<()> {
        let w = store.get_mut(self.weight);
        if weights.len() != w.numel() {
            return Err(Error::dims(&w.dims(), format!("{} weights given", weights.len())));
        }
        w.data_mut().copy_from_slice(weights);
        if let Some(b) = self.bias {
            store.get_mut(b).data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(())
    }

    pub fn zero<T: Real>(&self, store: &mut ParamStore<T>) {
        let n = self.spec.weight_len();
        self.set_weights(store, &vec![T::zero(); n])
            .expect("length matches spec");
    }

    /// Sets a 1×1 conv with equal in/out channels to the identity map.
    pub fn set_identity<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let s = self.spec;
        if s.kernel != (1, 1) || s.in_channels != s.out_channels || s.groups != 1 {
            return Err(Error::Config(format!("{} is not a square pointwise conv", self.name)));
        }
        let c = s.in_channels;
        let mut w = vec![T::zero(); c * c];
        for i in 0..c {
            w[i * c + i] = T::one();
        }
        self.set_weights(store, &w)
    }

    /// Sets a depthwise conv to a centre tap of one per channel.
    pub fn set_center_tap<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let s = self.spec;
        if s.in_per_group() != 1 || s.out_per_group() != 1 {
            return Err(Error::Config(format!("{} is not depthwise", self.name)));
        }
        let (kh, kw) = s.kernel;
        let mut w = vec![T::zero(); s.weight_len()];
        for c in 0..s.out_channels {
            w[c * kh * kw + (kh / 2) * kw + kw / 2] = T::one();
        }
        self.set_weights(store, &w)
    }
}
