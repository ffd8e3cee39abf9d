//! Building blocks: (self-residual) depthwise separable convolution, the
//! pixel-unshuffled downsampler, and the residual blocks assembled from them.
//!
//! Every block in this module is a [`ResidualBlock`]: `x + second(relu(first(x)))`.
//!
//! ```text
//! PUB   = x + SRDSC(relu(PUD(x)))
//! HPUB  = PUB(y),  y = x + conv3x3(relu(conv3x3(x)))
//!
//! PUD(x) = pointwise( up2( reduce( pool_s1( unshuffle2(x) ) ) ) + x )
//! ```
//!
//! The relu output inside a PUB feeds both the depthwise conv and the
//! self-residual sum; it is computed once.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, ParamStore};
use crate::ops::{ConvSpec, PoolKind, PoolSpec, Upsampler};
use crate::real::Real;

/// How the 4C → C reduction after pixel-unshuffle is grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// `groups = C`: each output channel sees the four sub-features of one input channel.
    PerChannel,
    /// `groups = 4` over all `4C` inputs.
    FourGroups,
}

/// First stage of the downsampling branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsampler {
    PixelUnshuffle,
    /// Depthwise conv with stride 2.
    StridedDepthwise,
    /// 2×2 max pool, then a depthwise conv at low resolution.
    MaxPool,
    /// 2×2 average pool, then a depthwise conv at low resolution.
    AvgPool,
}

/// Stride-1 pooling applied to the unshuffled sub-features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubPool {
    Max,
    Avg,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockParams {
    pub channels: usize,
    pub dsc_kernel: usize,
    pub pud_group_kernel: usize,
    pub pud_group_mode: GroupMode,
    pub conv_kernel: usize,
    pub pool_kernel: usize,
    pub downsampler: Downsampler,
    pub sub_pool: SubPool,
    pub upsampler: Upsampler,
    pub bias: bool,
}

impl Default for BlockParams {
    fn default() -> Self {
        BlockParams {
            channels: 64,
            dsc_kernel: 3,
            pud_group_kernel: 3,
            pud_group_mode: GroupMode::PerChannel,
            conv_kernel: 3,
            pool_kernel: 3,
            downsampler: Downsampler::PixelUnshuffle,
            sub_pool: SubPool::Max,
            upsampler: Upsampler::Bilinear,
            bias: true,
        }
    }
}

impl BlockParams {
    pub fn with_channels(channels: usize) -> Self {
        BlockParams {
            channels,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 4 {
            return Err(Error::Config(format!("channels {} < 4", self.channels)));
        }
        for (name, k) in [
            ("dsc_kernel", self.dsc_kernel),
            ("pud_group_kernel", self.pud_group_kernel),
            ("conv_kernel", self.conv_kernel),
            ("pool_kernel", self.pool_kernel),
        ] {
            if k % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd, got {k}")));
            }
        }
        if self.pud_group_mode == GroupMode::FourGroups && !self.channels.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "four-group reduction needs channels divisible by 4, got {}",
                self.channels
            )));
        }
        Ok(())
    }

    fn reduce_spec(&self) -> ConvSpec {
        let c = self.channels;
        let k = self.pud_group_kernel;
        let spec = match self.downsampler {
            Downsampler::PixelUnshuffle => {
                let groups = match self.pud_group_mode {
                    GroupMode::PerChannel => c,
                    GroupMode::FourGroups => 4,
                };
                ConvSpec::new(4 * c, c, k).with_groups(groups)
            }
            Downsampler::StridedDepthwise => ConvSpec::depthwise(c, k).with_stride(2),
            Downsampler::MaxPool | Downsampler::AvgPool => ConvSpec::depthwise(c, k),
        };
        spec.with_bias(self.bias)
    }
}

/// Spatial resolution a layer runs at, relative to the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Input,
    Half,
    /// Output of the pixel-shuffle tail conv (runs at input resolution).
    Tail,
}

/// Depthwise conv followed by pointwise conv, optionally adding the input
/// back before the pointwise step.
#[derive(Debug, Clone)]
pub struct Separable {
    pub depthwise: Conv,
    pub pointwise: Conv,
    pub self_residual: bool,
}

impl Separable {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        params: &BlockParams,
        self_residual: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let c = params.channels;
        Ok(Separable {
            depthwise: Conv::init(
                store,
                format!("{name}.dw"),
                ConvSpec::depthwise(c, params.dsc_kernel).with_bias(params.bias),
                rng,
            )?,
            pointwise: Conv::init(
                store,
                format!("{name}.pw"),
                ConvSpec::pointwise(c, c).with_bias(params.bias),
                rng,
            )?,
            self_residual,
        })
    }

    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let d = self.depthwise.forward(x, p)?;
        let mixed = if self.self_residual { d.add(x)? } else { d };
        self.pointwise.forward(&mixed, p)
    }
}

/// Pixel-unshuffled downsampler (and its alternative downsampling variants).
#[derive(Debug, Clone)]
pub struct Pud {
    pub reduce: Conv,
    pub pointwise: Conv,
    pub downsampler: Downsampler,
    pub sub_pool: Option<PoolSpec>,
    pub upsampler: Upsampler,
}

impl Pud {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        params: &BlockParams,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        params.validate()?;
        let sub_pool = match params.sub_pool {
            SubPool::Max => Some(PoolSpec::same(PoolKind::Max, params.pool_kernel)?),
            SubPool::Avg => Some(PoolSpec::same(PoolKind::Avg, params.pool_kernel)?),
            SubPool::None => None,
        };
        Ok(Pud {
            reduce: Conv::init(store, format!("{name}.reduce"), params.reduce_spec(), rng)?,
            pointwise: Conv::init(
                store,
                format!("{name}.pw"),
                ConvSpec::pointwise(params.channels, params.channels).with_bias(params.bias),
                rng,
            )?,
            downsampler: params.downsampler,
            sub_pool,
            upsampler: params.upsampler,
        })
    }

    /// Low-resolution branch output, before upsampling.
    pub fn low_branch<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let [_, _, h, w] = x.dims();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dims(&x.dims(), "downsampler needs even spatial dims"));
        }
        match self.downsampler {
            Downsampler::PixelUnshuffle => {
                let sub = x.pixel_unshuffle(2)?;
                let pooled = match &self.sub_pool {
                    Some(spec) => sub.pool2d(spec)?,
                    None => sub,
                };
                self.reduce.forward(&pooled, p)
            }
            Downsampler::StridedDepthwise => self.reduce.forward(x, p),
            Downsampler::MaxPool | Downsampler::AvgPool => {
                let kind = if self.downsampler == Downsampler::MaxPool {
                    PoolKind::Max
                } else {
                    PoolKind::Avg
                };
                let spec = PoolSpec {
                    kind,
                    kernel: 2,
                    stride: 2,
                    padding: 0,
                };
                self.reduce.forward(&x.pool2d(&spec)?, p)
            }
        }
    }

    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let low = self.low_branch(x, p)?;
        let up = low.upsample2(self.upsampler)?;
        self.pointwise.forward(&up.add(x)?, p)
    }
}

#[derive(Debug, Clone)]
pub enum Unit {
    Conv(Conv),
    Separable(Separable),
    Pud(Pud),
}

impl Unit {
    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        match self {
            Unit::Conv(c) => c.forward(x, p),
            Unit::Separable(s) => s.forward(x, p),
            Unit::Pud(d) => d.forward(x, p),
        }
    }

    pub fn convs(&self) -> Vec<(&Conv, Resolution)> {
        match self {
            Unit::Conv(c) => vec![(c, Resolution::Input)],
            Unit::Separable(s) => vec![(&s.depthwise, Resolution::Input), (&s.pointwise, Resolution::Input)],
            Unit::Pud(d) => vec![(&d.reduce, Resolution::Half), (&d.pointwise, Resolution::Input)],
        }
    }
}

/// The unit placed in each half of a residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Standard,
    Pointwise,
    Dsc,
    Srdsc,
    Pud,
}

impl UnitKind {
    pub fn init<T: Real>(
        self,
        store: &mut ParamStore<T>,
        name: &str,
        params: &BlockParams,
        rng: &mut impl Rng,
    ) -> Result<Unit> {
        let c = params.channels;
        Ok(match self {
            UnitKind::Standard => Unit::Conv(Conv::init(
                store,
                name,
                ConvSpec::new(c, c, params.conv_kernel).with_bias(params.bias),
                rng,
            )?),
            UnitKind::Pointwise => Unit::Conv(Conv::init(
                store,
                name,
                ConvSpec::pointwise(c, c).with_bias(params.bias),
                rng,
            )?),
            UnitKind::Dsc => Unit::Separable(Separable::init(store, name, params, false, rng)?),
            UnitKind::Srdsc => Unit::Separable(Separable::init(store, name, params, true, rng)?),
            UnitKind::Pud => Unit::Pud(Pud::init(store, name, params, rng)?),
        })
    }
}

/// `x + second(relu(first(x)))`
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub first: Unit,
    pub second: Unit,
}

impl ResidualBlock {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        params: &BlockParams,
        first: UnitKind,
        second: UnitKind,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        params.validate()?;
        Ok(ResidualBlock {
            first: first.init(store, &format!("{name}.a"), params, rng)?,
            second: second.init(store, &format!("{name}.b"), params, rng)?,
        })
    }

    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let h = self.first.forward(x, p)?.relu();
        self.second.forward(&h, p)?.add(x)
    }

    pub fn convs(&self) -> Vec<(&Conv, Resolution)> {
        let mut v = self.first.convs();
        v.extend(self.second.convs());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Hpub,
    Pub,
    /// A residual block with the same unit in both halves (ablation bodies).
    Uniform(UnitKind),
}

/// One named body block: a short chain of residual blocks.
#[derive(Debug, Clone)]
pub struct BodyBlock {
    pub name: String,
    pub kind: BlockKind,
    pub chain: Vec<ResidualBlock>,
}

impl BodyBlock {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        kind: BlockKind,
        params: &BlockParams,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let chain = match kind {
            BlockKind::Hpub => vec![
                ResidualBlock::init(
                    store,
                    &format!("{name}.conv"),
                    params,
                    UnitKind::Standard,
                    UnitKind::Standard,
                    rng,
                )?,
                pub_block(store, &format!("{name}.pub"), params, rng)?,
            ],
            BlockKind::Pub => vec![pub_block(store, name, params, rng)?],
            BlockKind::Uniform(unit) => {
                vec![ResidualBlock::init(store, name, params, unit, unit, rng)?]
            }
        };
        Ok(BodyBlock {
            name: name.to_string(),
            kind,
            chain,
        })
    }

    pub fn forward<'t, T: Real>(&self, x: &Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x.clone();
        for block in &self.chain {
            h = block.forward(&h, p)?;
        }
        Ok(h)
    }

    pub fn convs(&self) -> Vec<(&Conv, Resolution)> {
        self.chain.iter().flat_map(|b| b.convs()).collect()
    }
}

fn pub_block<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    params: &BlockParams,
    rng: &mut impl Rng,
) -> Result<ResidualBlock> {
    ResidualBlock::init(store, name, params, UnitKind::Pud, UnitKind::Srdsc, rng)
}

pub fn srdsc_forward<'t, T: Real>(x: &Var<'t, T>, block: &Separable, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
    if !block.self_residual {
        return Err(Error::Config("srdsc_forward on a plain separable conv".into()));
    }
    block.forward(x, p)
}

pub fn dsc_forward<'t, T: Real>(x: &Var<'t, T>, block: &Separable, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
    let d = block.depthwise.forward(x, p)?;
    block.pointwise.forward(&d, p)
}

pub fn pud_forward<'t, T: Real>(x: &Var<'t, T>, block: &Pud, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
    block.forward(x, p)
}

pub fn pub_forward<'t, T: Real>(x: &Var<'t, T>, block: &BodyBlock, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
    if block.kind != BlockKind::Pub {
        return Err(Error::Config(format!("{} is not a PUB", block.name)));
    }
    block.forward(x, p)
}

pub fn hpub_forward<'t, T: Real>(x: &Var<'t, T>, block: &BodyBlock, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
    if block.kind != BlockKind::Hpub {
        return Err(Error::Config(format!("{} is not an HPUB", block.name)));
    }
    block.forward(x, p)
}
