use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor;

pub const ADAM_MAGIC: &[u8; 8] = b"HPUNADAM";

/// Adam moments for every buffer of a [`ParamStore`], in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn update(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Config(
                "optimizer state does not match the parameter list".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let step_size = T::from_f64_lossy(lr / c1);
        let c2 = T::from_f64_lossy(c2);
        let (b1, b2, eps) = (
            T::from_f64_lossy(b1),
            T::from_f64_lossy(b2),
            T::from_f64_lossy(self.eps),
        );
        let one = T::one();
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.tensor.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let w = p.tensor.data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                w[i] = w[i] - step_size * m[i] / ((v[i] / c2).sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }

    /// `magic, step u64, count u32, then m and v of each buffer as tensor dumps`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(ADAM_MAGIC);
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(self.m.len() as u32).to_le_bytes());
        for (m, v) in self.m.iter().zip(&self.v) {
            for x in [m, v] {
                let t = Tensor::new([x.len(), 1, 1, 1], x.clone()).expect("non-empty buffer");
                buf.extend_from_slice(&t.to_bytes());
            }
        }
        buf
    }

    /// Restores state saved by [`Adam::to_bytes`] for the same parameter list.
    pub fn load_state(&mut self, bytes: &[u8]) -> Result<()> {
        let corrupt = |r: &str| Error::CorruptHeader {
            what: "optimizer state".into(),
            reason: r.into(),
        };
        if bytes.len() < 20 || &bytes[..8] != ADAM_MAGIC {
            return Err(corrupt("bad magic or truncated header"));
        }
        let step = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let count = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
        if count != self.m.len() {
            return Err(corrupt("buffer count differs from the model"));
        }
        let mut rest = &bytes[20..];
        for i in 0..count {
            for slot in [&mut self.m[i], &mut self.v[i]] {
                let t = Tensor::<T>::read_from(&mut rest)?;
                if t.numel() != slot.len() {
                    return Err(corrupt("buffer length differs from the model"));
                }
                slot.copy_from_slice(t.data());
            }
        }
        self.step = step;
        Ok(())
    }
}
