//! Toy-scale component comparisons: uniform bodies of one block type, and
//! PUB bodies with alternative pooling, downsampling and upsampling choices.

use serde::Serialize;

use crate::blocks::{BlockKind, BlockParams, Downsampler, SubPool, UnitKind};
use crate::error::{Error, Result};
use crate::imaging::{evaluate, Bicubic, EvalOptions, ModelUpscaler};
use crate::model::{count_params, Model, ModelSpec, Variant, DIV2K_MEAN_RGB};
use crate::ops::Upsampler;
use crate::train::{Dataset, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationVariant {
    pub name: String,
    pub body: BlockKind,
    pub downsampler: Downsampler,
    pub sub_pool: SubPool,
    pub upsampler: Upsampler,
}

impl AblationVariant {
    fn uniform(name: &str, unit: UnitKind) -> Self {
        Self::pub_with(name, Downsampler::PixelUnshuffle, SubPool::Max, Upsampler::Bilinear)
            .with_body(BlockKind::Uniform(unit))
    }

    fn pub_with(name: &str, downsampler: Downsampler, sub_pool: SubPool, upsampler: Upsampler) -> Self {
        AblationVariant {
            name: name.to_string(),
            body: BlockKind::Pub,
            downsampler,
            sub_pool,
            upsampler,
        }
    }

    fn with_body(mut self, body: BlockKind) -> Self {
        self.body = body;
        self
    }

    pub fn spec(&self, channels: usize, blocks: usize, scale: usize) -> ModelSpec {
        ModelSpec {
            variant: Variant::Custom,
            scale,
            n_hpub: blocks,
            n_pub_extra: 0,
            body_unit: Some(self.body),
            global_residual: true,
            mean_shift: true,
            mean_rgb: DIV2K_MEAN_RGB,
            block: BlockParams {
                downsampler: self.downsampler,
                sub_pool: self.sub_pool,
                upsampler: self.upsampler,
                ..BlockParams::with_channels(channels)
            },
        }
    }
}

/// Pointwise-only, DSC, self-residual DSC, PUD-only and PUB bodies.
pub fn component_variants() -> Vec<AblationVariant> {
    vec![
        AblationVariant::uniform("pointwise", UnitKind::Pointwise),
        AblationVariant::uniform("dsc", UnitKind::Dsc),
        AblationVariant::uniform("srdsc", UnitKind::Srdsc),
        AblationVariant::uniform("pud", UnitKind::Pud),
        AblationVariant::pub_with("pub", Downsampler::PixelUnshuffle, SubPool::Max, Upsampler::Bilinear),
    ]
}

/// PUB bodies with each stride-1 pooling choice and upsampler.
pub fn pooling_variants() -> Vec<AblationVariant> {
    let mut out = Vec::new();
    for (pn, pool) in [
        ("avgpool", SubPool::Avg),
        ("maxpool", SubPool::Max),
        ("nopool", SubPool::None),
    ] {
        for (un, up) in [("nearest", Upsampler::Nearest), ("bilinear", Upsampler::Bilinear)] {
            out.push(AblationVariant::pub_with(
                &format!("pub-{pn}-{un}"),
                Downsampler::PixelUnshuffle,
                pool,
                up,
            ));
        }
    }
    out
}

/// PUB bodies with each downsampler and upsampler.
pub fn downsampler_variants() -> Vec<AblationVariant> {
    let mut out = Vec::new();
    for (dn, down) in [
        ("unshuffle", Downsampler::PixelUnshuffle),
        ("strided", Downsampler::StridedDepthwise),
        ("max", Downsampler::MaxPool),
        ("avg", Downsampler::AvgPool),
    ] {
        for (un, up) in [("nearest", Upsampler::Nearest), ("bilinear", Upsampler::Bilinear)] {
            out.push(AblationVariant::pub_with(
                &format!("down-{dn}-{un}"),
                down,
                SubPool::Max,
                up,
            ));
        }
    }
    out
}

pub fn variant_by_name(name: &str) -> Result<AblationVariant> {
    component_variants()
        .into_iter()
        .chain(pooling_variants())
        .chain(downsampler_variants())
        .find(|v| v.name == name)
        .ok_or_else(|| Error::Config(format!("unknown ablation variant {name:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub channels: usize,
    pub blocks: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub params: u64,
    pub psnr_y: Vec<f64>,
    pub median_psnr_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub bicubic_psnr_y: f64,
    pub warnings: Vec<String>,
}

/// Minimum total steps below which results are flagged as unreliable.
pub const MIN_STEPS: usize = 100;

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains every variant once per seed under the same budget and reports the
/// Y-PSNR on `eval` (median over seeds).
pub fn run_ablation(
    train: &Dataset,
    eval: &Dataset,
    variants: &[AblationVariant],
    cfg: &AblationConfig,
) -> Result<AblationReport> {
    if cfg.seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config("ablation needs at least one seed and one variant".into()));
    }
    let mut warnings = Vec::new();
    let steps = cfg.train.iters_per_epoch * cfg.train.max_epochs;
    if steps < MIN_STEPS {
        warnings.push(format!(
            "budget of {steps} steps is below {MIN_STEPS}; orderings are unreliable"
        ));
    }
    let s = cfg.train.scale;
    let opts = EvalOptions {
        border: s,
        quantize: true,
    };
    let bicubic_psnr_y = evaluate(&Bicubic { scale: s }, &eval.pairs, opts)?.mean_psnr_y;
    let mut rows = Vec::new();
    for v in variants {
        let spec = v.spec(cfg.channels, cfg.blocks, s);
        let mut psnr_y = Vec::new();
        let mut params = 0;
        for &seed in &cfg.seeds {
            let model = Model::<f32>::build(&spec, seed)?;
            params = count_params(&model).total_params;
            let tcfg = TrainConfig {
                seed,
                val_interval: 0,
                ..cfg.train.clone()
            };
            let mut t = Trainer::new(model, tcfg)?;
            t.run(train, None)?;
            psnr_y.push(evaluate(&ModelUpscaler::new(&t.model), &eval.pairs, opts)?.mean_psnr_y);
        }
        rows.push(AblationRow {
            name: v.name.clone(),
            params,
            median_psnr_y: median(&psnr_y),
            psnr_y,
        });
    }
    Ok(AblationReport {
        rows,
        bicubic_psnr_y,
        warnings,
    })
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:>10} {:>12}  per-seed\n", "variant", "params", "median PSNR");
        for r in &self.rows {
            let seeds: Vec<String> = r.psnr_y.iter().map(|p| format!("{p:.3}")).collect();
            out.push_str(&format!(
                "{:<24} {:>10} {:>12.3}  {}\n",
                r.name,
                r.params,
                r.median_psnr_y,
                seeds.join(" ")
            ));
        }
        out.push_str(&format!("{:<24} {:>10} {:>12.3}\n", "bicubic", 0, self.bicubic_psnr_y));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_lists() {
        assert_eq!(component_variants().len(), 5);
        assert_eq!(pooling_variants().len(), 6);
        assert_eq!(downsampler_variants().len(), 8);
        assert_eq!(
            variant_by_name("srdsc").unwrap().body,
            BlockKind::Uniform(UnitKind::Srdsc)
        );
        assert!(variant_by_name("nope").is_err());
        for v in component_variants()
            .iter()
            .chain(&pooling_variants())
            .chain(&downsampler_variants())
        {
            Model::<f32>::build(&v.spec(8, 1, 2), 0).unwrap();
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
