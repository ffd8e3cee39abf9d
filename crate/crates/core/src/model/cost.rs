//! Parameter and multiply-add accounting.
//!
//! Multi-Adds count convolution multiply-accumulates only, for one image
//! whose super-resolved output has the given size. Pooling, interpolation,
//! shuffles and elementwise adds are not counted. Parameters count every
//! convolution weight and, unless stated otherwise, every bias. The fixed
//! mean-shift offsets are reported separately as the 24 parameters an
//! equivalent pair of frozen 1×1 convs would hold.

use serde::Serialize;

use super::{Model, ModelSpec, Variant};
use crate::blocks::{GroupMode, Resolution};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub params_no_bias: u64,
    pub mult_adds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_params_no_bias: u64,
    /// Parameters of the two frozen mean-shift layers when enabled, else 0.
    pub mean_shift_params: u64,
    pub total_mult_adds: u64,
    pub hr_resolution: (usize, usize),
    pub lr_resolution: (usize, usize),
}

/// Default reference output size for Multi-Adds.
pub const REFERENCE_HR: (usize, usize) = (1280, 720);

pub fn count_costs<T: Real>(model: &Model<T>, hr_resolution: (usize, usize)) -> Result<CostReport> {
    let s = model.spec().scale;
    let (hr_w, hr_h) = hr_resolution;
    if hr_w % s != 0 || hr_h % s != 0 {
        return Err(Error::Config(format!(
            "resolution {hr_w}x{hr_h} is not divisible by scale {s}"
        )));
    }
    let (lr_w, lr_h) = (hr_w / s, hr_h / s);
    let half_ok = lr_w % 2 == 0 && lr_h % 2 == 0;
    let mut rows = Vec::new();
    for layer in model.layers() {
        let (w, h) = match layer.resolution {
            Resolution::Input | Resolution::Tail => (lr_w, lr_h),
            Resolution::Half => {
                if !half_ok {
                    return Err(Error::Config(format!(
                        "LR size {lr_w}x{lr_h} must be even for half-resolution layers"
                    )));
                }
                (lr_w / 2, lr_h / 2)
            }
        };
        rows.push(CostRow {
            name: layer.name,
            params: layer.spec.param_count() as u64,
            params_no_bias: layer.spec.weight_len() as u64,
            mult_adds: layer.spec.mult_adds(h, w),
        });
    }
    Ok(CostReport {
        total_params: rows.iter().map(|r| r.params).sum(),
        total_params_no_bias: rows.iter().map(|r| r.params_no_bias).sum(),
        mean_shift_params: if model.spec().mean_shift { 24 } else { 0 },
        total_mult_adds: rows.iter().map(|r| r.mult_adds).sum(),
        rows,
        hr_resolution,
        lr_resolution: (lr_w, lr_h),
    })
}

pub fn count_params<T: Real>(model: &Model<T>) -> CostReport {
    let s = model.spec().scale;
    // smallest output size whose LR side is even, so every layer is countable
    count_costs(model, (2 * s, 2 * s)).expect("minimal resolution is always valid")
}

pub fn count_multiadds<T: Real>(model: &Model<T>, hr_resolution: (usize, usize)) -> Result<CostReport> {
    count_costs(model, hr_resolution)
}

/// Published ×4 totals: `(variant, params, Multi-Adds at 1280×720)`.
pub const PAPER_TARGETS: [(Variant, u64, u64); 3] = [
    (Variant::S, 246_000, 12_700_000_000),
    (Variant::M, 511_000, 27_700_000_000),
    (Variant::L, 734_000, 39_700_000_000),
];

pub const PARAM_TOLERANCE: f64 = 0.15;
pub const MULTIADD_TOLERANCE: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReconcileConfig {
    pub channels: usize,
    pub group_mode: GroupMode,
    pub pud_kernel: usize,
    pub count_bias: bool,
    pub count_mean_shift: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantCost {
    pub variant: Variant,
    pub params: u64,
    pub mult_adds: u64,
    pub params_dev: f64,
    pub mult_adds_dev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconcileRow {
    pub config: ReconcileConfig,
    pub variants: Vec<VariantCost>,
    /// `max(|params_dev| / 0.15, |mult_adds_dev| / 0.20)` over the three variants;
    /// ≤ 1 means every target is within tolerance.
    pub score: f64,
}

impl ReconcileRow {
    pub fn within_tolerance(&self) -> bool {
        self.score <= 1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconcileReport {
    pub rows: Vec<ReconcileRow>,
    pub best: ReconcileRow,
}

impl ReconcileReport {
    pub fn passes(&self) -> bool {
        self.best.within_tolerance()
    }
}

pub const SWEEP_CHANNELS: [usize; 5] = [32, 40, 48, 56, 64];
pub const SWEEP_KERNELS: [usize; 2] = [3, 5];

fn rel_dev(value: u64, target: u64) -> f64 {
    (value as f64 - target as f64) / target as f64
}

/// Sweeps width × reduction grouping × reduction kernel × counting convention
/// at ×4 and scores each configuration against the published totals.
pub fn reconcile() -> Result<ReconcileReport> {
    let mut rows = Vec::new();
    for &channels in &SWEEP_CHANNELS {
        for group_mode in [GroupMode::PerChannel, GroupMode::FourGroups] {
            for &pud_kernel in &SWEEP_KERNELS {
                let mut reports = Vec::new();
                for (variant, _, _) in PAPER_TARGETS {
                    let mut spec = ModelSpec::preset(variant, 4)?;
                    spec.block.channels = channels;
                    spec.block.pud_group_mode = group_mode;
                    spec.block.pud_group_kernel = pud_kernel;
                    let model = Model::<f32>::build(&spec, 0)?;
                    reports.push(count_costs(&model, REFERENCE_HR)?);
                }
                for count_bias in [true, false] {
                    for count_mean_shift in [false, true] {
                        let config = ReconcileConfig {
                            channels,
                            group_mode,
                            pud_kernel,
                            count_bias,
                            count_mean_shift,
                        };
                        let variants: Vec<VariantCost> = PAPER_TARGETS
                            .iter()
                            .zip(&reports)
                            .map(|(&(variant, tp, tm), r)| {
                                let mut params = if count_bias {
                                    r.total_params
                                } else {
                                    r.total_params_no_bias
                                };
                                if count_mean_shift {
                                    params += r.mean_shift_params;
                                }
                                VariantCost {
                                    variant,
                                    params,
                                    mult_adds: r.total_mult_adds,
                                    params_dev: rel_dev(params, tp),
                                    mult_adds_dev: rel_dev(r.total_mult_adds, tm),
                                }
                            })
                            .collect();
                        let score = variants
                            .iter()
                            .map(|v| {
                                (v.params_dev.abs() / PARAM_TOLERANCE).max(v.mult_adds_dev.abs() / MULTIADD_TOLERANCE)
                            })
                            .fold(0.0, f64::max);
                        rows.push(ReconcileRow {
                            config,
                            variants,
                            score,
                        });
                    }
                }
            }
        }
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .cloned()
        .expect("sweep grid is non-empty");
    Ok(ReconcileReport { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockParams;
    use crate::ops::ConvSpec;

    fn toy_model() -> Model<f32> {
        Model::build(&ModelSpec::toy(2), 0).unwrap()
    }

    #[test]
    fn totals_match_buffer_lengths() {
        let m = toy_model();
        let r = count_params(&m);
        assert_eq!(r.total_params as usize, m.params().total_len());
        assert_eq!(r.rows.iter().map(|r| r.params).sum::<u64>(), r.total_params);
    }

    #[test]
    fn hpub_is_conv_unit_plus_pub() {
        let c = 16;
        let p = BlockParams::with_channels(c);
        let conv = 2 * ConvSpec::new(c, c, 3).param_count();
        let pud = ConvSpec::new(4 * c, c, 3).with_groups(c).param_count() + ConvSpec::pointwise(c, c).param_count();
        let srdsc = ConvSpec::depthwise(c, 3).param_count() + ConvSpec::pointwise(c, c).param_count();
        let m = toy_model();
        let r = count_params(&m);
        let block0: u64 = r
            .rows
            .iter()
            .filter(|row| row.name.starts_with("body.0."))
            .map(|row| row.params)
            .sum();
        assert_eq!(block0 as usize, conv + pud + srdsc);
        assert_eq!(p.channels, c);
    }

    #[test]
    fn multiadds_scale_with_pixel_count() {
        let m = toy_model();
        let a = count_multiadds(&m, (64, 48)).unwrap();
        let b = count_multiadds(&m, (128, 96)).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(rb.mult_adds, 4 * ra.mult_adds, "{}", ra.name);
        }
        assert!(count_multiadds(&m, (63, 48)).is_err());
    }
}
