//! Gradient-check cases shared by the gradient suite and the acceptance run.

use hpun::blocks::{BlockKind, BlockParams, BodyBlock, Downsampler, Pud, Separable, SubPool, UnitKind};
use hpun::nn::ParamStore;
use hpun::ops::{ConvSpec, PoolKind, PoolSpec, Upsampler};
use hpun::{Model, ModelSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::oracle::{grad_check, GradReport};

pub type Case = (String, GradReport);

fn randn(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    Tensor::randn(dims, seed).unwrap()
}

/// Random values pushed at least 0.1 away from zero, for kinked ops.
fn away_from_zero(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    randn(dims, seed).map(|v| v + 0.1f64.copysign(v))
}

pub fn op_cases() -> Vec<Case> {
    let mut out = Vec::new();
    let d = [1, 2, 3, 3];
    let mut s = ParamStore::new();
    let a = s.add("a", randn(d, 1));
    let b = s.add("b", randn(d, 2));
    out.push(("add".into(), grad_check(&mut s, |p| p.var(a).add(p.var(b)))));
    out.push(("sub".into(), grad_check(&mut s, |p| p.var(a).sub(p.var(b)))));
    out.push(("mul".into(), grad_check(&mut s, |p| p.var(a).mul(p.var(b)))));
    out.push(("scale".into(), grad_check(&mut s, |p| Ok(p.var(a).scale(-1.7)))));
    out.push((
        "shift_channels".into(),
        grad_check(&mut s, |p| p.var(a).shift_channels(&[0.3, -0.2])),
    ));
    out.push(("sum".into(), grad_check(&mut s, |p| Ok(p.var(a).sum()))));
    out.push(("mean".into(), grad_check(&mut s, |p| Ok(p.var(a).mean()))));
    out.push((
        "shared_subexpression".into(),
        grad_check(&mut s, |p| {
            let x = p.var(a);
            x.mul(x)?.add(x)?.mul(p.var(b))
        }),
    ));

    let target = away_from_zero([2, 3, 4, 4], 3);
    let mut s = ParamStore::new();
    let x = s.add("x", randn([2, 3, 4, 4], 4).map(|v| v * 0.01));
    out.push(("l1_loss".into(), grad_check(&mut s, |p| p.var(x).l1_loss(&target))));
    out.push(("mse_loss".into(), grad_check(&mut s, |p| p.var(x).mse_loss(&target))));

    let mut s = ParamStore::new();
    let x = s.add("x", away_from_zero([2, 4, 5, 5], 5));
    out.push(("relu".into(), grad_check(&mut s, |p| Ok(p.var(x).relu()))));

    for (name, spec) in [
        ("conv3x3", ConvSpec::new(4, 6, 3)),
        ("conv1x1", ConvSpec::pointwise(4, 6)),
        ("conv5x5_nobias", ConvSpec::new(4, 4, 5).with_bias(false)),
        ("conv_groups4", ConvSpec::new(8, 4, 3).with_groups(4)),
        ("conv_depthwise", ConvSpec::depthwise(4, 3)),
        ("conv_depthwise_stride2", ConvSpec::depthwise(4, 3).with_stride(2)),
        (
            "conv_stride2_pad0",
            ConvSpec::new(4, 4, 3).with_stride(2).with_padding(0),
        ),
    ] {
        let mut s = ParamStore::new();
        let x = s.add("x", randn([2, spec.in_channels, 8, 8], 6));
        let w = s.add("w", randn(spec.weight_dims(), 7));
        let b = spec.bias.then(|| s.add("b", randn([spec.out_channels, 1, 1, 1], 8)));
        out.push((
            name.into(),
            grad_check(&mut s, |p| p.var(x).conv2d(&spec, p.var(w), b.map(|b| p.var(b)))),
        ));
    }

    for (name, spec) in [
        ("maxpool_s1", PoolSpec::same(PoolKind::Max, 3).unwrap()),
        ("avgpool_s1", PoolSpec::same(PoolKind::Avg, 3).unwrap()),
        (
            "maxpool_2x2",
            PoolSpec {
                kind: PoolKind::Max,
                kernel: 2,
                stride: 2,
                padding: 0,
            },
        ),
        (
            "avgpool_2x2",
            PoolSpec {
                kind: PoolKind::Avg,
                kernel: 2,
                stride: 2,
                padding: 0,
            },
        ),
    ] {
        let mut s = ParamStore::new();
        let x = s.add("x", randn([2, 3, 6, 6], 9));
        out.push((name.into(), grad_check(&mut s, |p| p.var(x).pool2d(&spec))));
    }

    for (name, mode) in [
        ("upsample_bilinear", Upsampler::Bilinear),
        ("upsample_nearest", Upsampler::Nearest),
    ] {
        let mut s = ParamStore::new();
        let x = s.add("x", randn([2, 3, 4, 5], 10));
        out.push((name.into(), grad_check(&mut s, |p| p.var(x).upsample2(mode))));
    }

    let mut s = ParamStore::new();
    let x = s.add("x", randn([2, 8, 6, 6], 11));
    out.push((
        "pixel_unshuffle".into(),
        grad_check(&mut s, |p| p.var(x).pixel_unshuffle(2)),
    ));
    out.push((
        "pixel_shuffle".into(),
        grad_check(&mut s, |p| p.var(x).pixel_shuffle(2)),
    ));
    out
}

fn params(c: usize) -> BlockParams {
    BlockParams::with_channels(c)
}

pub fn block_cases() -> Vec<Case> {
    let mut out = Vec::new();
    let c = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(21);

    for (name, sr) in [("dsc", false), ("srdsc", true)] {
        let mut s = ParamStore::new();
        let sep = Separable::init(&mut s, name, &params(c), sr, &mut rng).unwrap();
        let x = s.add("x", randn([2, c, 8, 8], 22));
        out.push((name.into(), grad_check(&mut s, |p| sep.forward(p.var(x), p))));
    }

    for (down, sub, up) in [
        (Downsampler::PixelUnshuffle, SubPool::Max, Upsampler::Bilinear),
        (Downsampler::PixelUnshuffle, SubPool::Avg, Upsampler::Nearest),
        (Downsampler::PixelUnshuffle, SubPool::None, Upsampler::Bilinear),
        (Downsampler::StridedDepthwise, SubPool::Max, Upsampler::Bilinear),
        (Downsampler::MaxPool, SubPool::Max, Upsampler::Nearest),
        (Downsampler::AvgPool, SubPool::Max, Upsampler::Bilinear),
    ] {
        let bp = BlockParams {
            downsampler: down,
            sub_pool: sub,
            upsampler: up,
            ..params(c)
        };
        let mut s = ParamStore::new();
        let pud = Pud::init(&mut s, "pud", &bp, &mut rng).unwrap();
        let x = s.add("x", randn([2, c, 8, 8], 23));
        out.push((
            format!("pud_{down:?}_{sub:?}_{up:?}").to_lowercase(),
            grad_check(&mut s, |p| pud.forward(p.var(x), p)),
        ));
    }

    for (name, kind) in [
        ("pub", BlockKind::Pub),
        ("hpub", BlockKind::Hpub),
        ("uniform_pointwise", BlockKind::Uniform(UnitKind::Pointwise)),
        ("uniform_standard", BlockKind::Uniform(UnitKind::Standard)),
        ("uniform_pud", BlockKind::Uniform(UnitKind::Pud)),
    ] {
        let mut s = ParamStore::new();
        let block = BodyBlock::init(&mut s, name, kind, &params(c), &mut rng).unwrap();
        let x = s.add("x", randn([2, c, 8, 8], 24));
        out.push((name.into(), grad_check(&mut s, |p| block.forward(p.var(x), p))));
    }
    out
}

/// Toy network (16 channels, two HPUBs, x2), input and every parameter.
pub fn model_case() -> Case {
    let model = Model::<f64>::build(&ModelSpec::toy(2), 5).unwrap();
    let mut s = model.params().clone();
    let x = s.add("x", Tensor::rand_uniform([2, 3, 8, 8], 0.0, 1.0, 25).unwrap());
    ("toy_hpun".into(), grad_check(&mut s, |p| model.forward(p.var(x), p)))
}
