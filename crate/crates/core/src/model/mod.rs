//! Network assembly.
//!
//! ```text
//!   x ─ −mean ─ head conv3x3 (3→C) ─┬─ body blocks ─ (+) ─ tail conv3x3 (C→3s²) ─ shuffle(s) ─ +mean
//!                                   └─────────────────┘
//! ```
//!
//! The body of an HPUN variant is `n_hpub` HPUBs followed by `n_pub_extra`
//! PUBs. Ablation bodies replace it with `n_hpub` copies of one block kind.

mod checkpoint;
mod cost;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use cost::{
    count_costs, count_multiadds, count_params, reconcile, CostReport, CostRow, ReconcileConfig, ReconcileReport,
    ReconcileRow, VariantCost, MULTIADD_TOLERANCE, PAPER_TARGETS, PARAM_TOLERANCE, REFERENCE_HR, SWEEP_CHANNELS,
    SWEEP_KERNELS,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::blocks::{BlockKind, BlockParams, BodyBlock, GroupMode, Resolution};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, ParamStore};
use crate::ops::ConvSpec;
use crate::real::Real;
use crate::tensor::Tensor;

/// DIV2K RGB channel means in `[0, 1]` units.
pub const DIV2K_MEAN_RGB: [f64; 3] = [0.4488, 0.4371, 0.4040];

/// Width, group mode and reduction kernel chosen by the parameter/Multi-Adds
/// reconciliation sweep (`hpun count --reconcile`).
pub const PRESET_CHANNELS: usize = 40;
pub const PRESET_GROUP_MODE: GroupMode = GroupMode::PerChannel;
pub const PRESET_PUD_KERNEL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    S,
    M,
    L,
    Custom,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::S => "hpun-s",
            Variant::M => "hpun-m",
            Variant::L => "hpun-l",
            Variant::Custom => "custom",
        }
    }

    /// `(n_hpub, n_pub_extra)` for the named variants.
    pub fn body_counts(self) -> Option<(usize, usize)> {
        match self {
            Variant::S => Some((7, 2)),
            Variant::M => Some((8, 0)),
            Variant::L => Some((12, 0)),
            Variant::Custom => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub scale: usize,
    pub n_hpub: usize,
    pub n_pub_extra: usize,
    /// Replaces the HPUB body with `n_hpub` blocks of this kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_unit: Option<BlockKind>,
    pub global_residual: bool,
    pub mean_shift: bool,
    pub mean_rgb: [f64; 3],
    pub block: BlockParams,
}

impl ModelSpec {
    pub fn preset(variant: Variant, scale: usize) -> Result<Self> {
        let (n_hpub, n_pub_extra) = variant
            .body_counts()
            .ok_or_else(|| Error::Config("custom has no preset".into()))?;
        let spec = ModelSpec {
            variant,
            scale,
            n_hpub,
            n_pub_extra,
            body_unit: None,
            global_residual: true,
            mean_shift: true,
            mean_rgb: DIV2K_MEAN_RGB,
            block: BlockParams {
                channels: PRESET_CHANNELS,
                pud_group_mode: PRESET_GROUP_MODE,
                pud_group_kernel: PRESET_PUD_KERNEL,
                ..BlockParams::default()
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Desk-scale network: 16 channels, two HPUBs.
    pub fn toy(scale: usize) -> Self {
        ModelSpec {
            variant: Variant::Custom,
            scale,
            n_hpub: 2,
            n_pub_extra: 0,
            body_unit: None,
            global_residual: true,
            mean_shift: true,
            mean_rgb: DIV2K_MEAN_RGB,
            block: BlockParams::with_channels(16),
        }
    }

    pub fn by_name(name: &str, scale: usize) -> Result<Self> {
        match name {
            "hpun-s" | "s" => Self::preset(Variant::S, scale),
            "hpun-m" | "m" => Self::preset(Variant::M, scale),
            "hpun-l" | "l" => Self::preset(Variant::L, scale),
            "toy" => {
                let s = Self::toy(scale);
                s.validate()?;
                Ok(s)
            }
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn channels(&self) -> usize {
        self.block.channels
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::Config(format!("scale must be 2, 3 or 4, got {}", self.scale)));
        }
        self.block.validate()?;
        if let Some((h, p)) = self.variant.body_counts() {
            if (self.n_hpub, self.n_pub_extra) != (h, p) || self.body_unit.is_some() {
                return Err(Error::Config(format!(
                    "{} requires {h} HPUBs and {p} extra PUBs, got {} and {}{}",
                    self.variant.name(),
                    self.n_hpub,
                    self.n_pub_extra,
                    if self.body_unit.is_some() {
                        " with a custom body"
                    } else {
                        ""
                    }
                )));
            }
        }
        if self.n_hpub + self.n_pub_extra == 0 {
            return Err(Error::Config("body must contain at least one block".into()));
        }
        Ok(())
    }

    pub fn body_layout(&self) -> Vec<BlockKind> {
        match self.body_unit {
            Some(kind) => vec![kind; self.n_hpub],
            None => std::iter::repeat_n(BlockKind::Hpub, self.n_hpub)
                .chain(std::iter::repeat_n(BlockKind::Pub, self.n_pub_extra))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// True when every PUD in the body needs even input dims.
    pub fn needs_even_input(&self) -> bool {
        self.body_layout().iter().any(|k| {
            !matches!(
                k,
                BlockKind::Uniform(
                    crate::blocks::UnitKind::Standard
                        | crate::blocks::UnitKind::Pointwise
                        | crate::blocks::UnitKind::Dsc
                        | crate::blocks::UnitKind::Srdsc
                )
            )
        })
    }
}

/// Per-layer entry used by counting and checkpoint manifests.
#[derive(Debug, Clone)]
pub struct LayerInfo {
    pub name: String,
    pub spec: ConvSpec,
    pub resolution: Resolution,
}

pub struct Model<T> {
    spec: ModelSpec,
    store: ParamStore<T>,
    head: Conv,
    body: Vec<BodyBlock>,
    tail: Conv,
}

/// Intermediate features of one forward pass.
pub struct Features<'t, T> {
    /// Head conv output.
    pub head: Var<'t, T>,
    /// Body output before the global residual add.
    pub body_pre_residual: Var<'t, T>,
    /// Body output after the global residual add (equal to the above when it is disabled).
    pub body: Var<'t, T>,
    pub sr: Var<'t, T>,
}

impl<T: Real> Model<T> {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = spec.channels();
        let bias = spec.block.bias;
        let head = Conv::init(&mut store, "head", ConvSpec::new(3, c, 3).with_bias(bias), &mut rng)?;
        let body = spec
            .body_layout()
            .into_iter()
            .enumerate()
            .map(|(i, kind)| BodyBlock::init(&mut store, &format!("body.{i}"), kind, &spec.block, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let s2 = spec.scale * spec.scale;
        let tail = Conv::init(
            &mut store,
            "tail",
            ConvSpec::new(c, 3 * s2, 3).with_bias(bias),
            &mut rng,
        )?;
        Ok(Model {
            spec: spec.clone(),
            store,
            head,
            body,
            tail,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn head(&self) -> &Conv {
        &self.head
    }

    pub fn tail(&self) -> &Conv {
        &self.tail
    }

    pub fn body(&self) -> &[BodyBlock] {
        &self.body
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = vec![LayerInfo {
            name: self.head.name.clone(),
            spec: self.head.spec,
            resolution: Resolution::Input,
        }];
        for block in &self.body {
            for (conv, res) in block.convs() {
                out.push(LayerInfo {
                    name: conv.name.clone(),
                    spec: conv.spec,
                    resolution: res,
                });
            }
        }
        out.push(LayerInfo {
            name: self.tail.name.clone(),
            spec: self.tail.spec,
            resolution: Resolution::Tail,
        });
        out
    }

    fn check_input(&self, dims: [usize; 4]) -> Result<()> {
        if dims[1] != 3 {
            return Err(Error::dims(&dims, "model input must have 3 channels"));
        }
        if self.spec.needs_even_input() && (!dims[2].is_multiple_of(2) || !dims[3].is_multiple_of(2)) {
            return Err(Error::dims(&dims, "model input needs even spatial dims (pad first)"));
        }
        Ok(())
    }

    pub fn forward_features<'t>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Features<'t, T>> {
        self.check_input(x.dims())?;
        let mean: Vec<T> = self.spec.mean_rgb.iter().map(|&m| T::from_f64_lossy(m)).collect();
        let neg: Vec<T> = mean.iter().map(|&m| -m).collect();
        let input = if self.spec.mean_shift {
            x.shift_channels(&neg)?
        } else {
            x.clone()
        };
        let head = self.head.forward(&input, p)?;
        let mut h = head.clone();
        for block in &self.body {
            h = block.forward(&h, p)?;
        }
        let body = if self.spec.global_residual {
            h.add(&head)?
        } else {
            h.clone()
        };
        let out = self.tail.forward(&body, p)?.pixel_shuffle(self.spec.scale)?;
        let sr = if self.spec.mean_shift {
            out.shift_channels(&mean)?
        } else {
            out
        };
        Ok(Features {
            head,
            body_pre_residual: h,
            body,
            sr,
        })
    }

    pub fn forward<'t>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.forward_features(x, p)?.sr)
    }

    /// Head output and body output (before or after the global residual add) for one input.
    pub fn feature_pair(&self, x: &Tensor<T>, pre_residual: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let tape = Tape::inference();
        let p = self.store.bind(&tape);
        let f = self.forward_features(&tape.constant(x.clone()), &p)?;
        let deep = if pre_residual { f.body_pre_residual } else { f.body };
        Ok((f.head.to_tensor(), deep.to_tensor()))
    }

    /// Forward pass without recording gradients.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::inference();
        let p = self.store.bind(&tape);
        let xv = tape.constant(x.clone());
        Ok(self.forward(&xv, &p)?.to_tensor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::UnitKind;

    #[test]
    fn variant_arithmetic_is_enforced() {
        let mut spec = ModelSpec::preset(Variant::M, 4).unwrap();
        assert_eq!((spec.n_hpub, spec.n_pub_extra), (8, 0));
        spec.n_hpub = 7;
        assert!(spec.validate().is_err());
        let s = ModelSpec::preset(Variant::S, 4).unwrap();
        assert_eq!((s.n_hpub, s.n_pub_extra), (7, 2));
        assert_eq!(ModelSpec::preset(Variant::L, 4).unwrap().n_hpub, 12);
        assert!(ModelSpec::preset(Variant::M, 5).is_err());
    }

    #[test]
    fn s_places_extra_pubs_last() {
        let layout = ModelSpec::preset(Variant::S, 4).unwrap().body_layout();
        assert_eq!(layout.len(), 9);
        assert!(layout[..7].iter().all(|k| *k == BlockKind::Hpub));
        assert!(layout[7..].iter().all(|k| *k == BlockKind::Pub));
    }

    #[test]
    fn spec_text_round_trips() {
        let mut spec = ModelSpec::toy(3);
        spec.body_unit = Some(BlockKind::Uniform(UnitKind::Srdsc));
        let back = ModelSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn forward_scales_output() {
        for s in [2, 3, 4] {
            let model = Model::<f32>::build(&ModelSpec::toy(s), 1).unwrap();
            let x = Tensor::rand_uniform([1, 3, 6, 8], 0.0, 1.0, 2).unwrap();
            assert_eq!(model.infer(&x).unwrap().dims(), [1, 3, 6 * s, 8 * s]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = Model::<f32>::build(&ModelSpec::toy(2), 1).unwrap();
        assert!(model.infer(&Tensor::zeros([1, 1, 4, 4]).unwrap()).is_err());
        assert!(model.infer(&Tensor::zeros([1, 3, 5, 4]).unwrap()).is_err());
    }
}
