//! Independent reference implementations used by the integration suites.

use hpun::autodiff::Tape;
use hpun::nn::{Bound, ParamStore};
use hpun::ops::ConvSpec;
use hpun::{Result, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
/// One-sided slopes that disagree by more than this (relative) mark a kink
/// inside the stencil (ReLU crossing or max-pool argmax switch).
pub const KINK_GAP: f64 = 1e-2;

#[derive(Debug)]
pub struct GradReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
    /// Elements excluded because the stencil straddled a kink.
    pub kinks: usize,
}

fn projected<'t>(y: &Var<'t, f64>) -> Var<'t, f64> {
    let r = Tensor::<f64>::randn(y.dims(), 0xfeed).unwrap();
    y.mul(&y.tape().constant(r)).unwrap().sum()
}

fn eval<F>(store: &ParamStore<f64>, f: &F) -> f64
where
    F: for<'t> Fn(&Bound<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::inference();
    let p = store.bind(&tape);
    projected(&f(&p).unwrap()).value().data()[0]
}

/// Central differences over every element of every tensor in `store`,
/// against the tape gradient of `sum(f(..) * r)` for a fixed random `r`.
pub fn grad_check<F>(store: &mut ParamStore<f64>, f: F) -> GradReport
where
    F: for<'t> Fn(&Bound<'t, f64>) -> Result<Var<'t, f64>>,
{
    store.zero_grad();
    {
        let tape = Tape::new();
        let p = store.bind(&tape);
        let loss = projected(&f(&p).unwrap());
        let grads = tape.backward(&loss).unwrap();
        store.accumulate(&p, &grads).unwrap();
    }
    let analytic: Vec<Vec<f64>> = store
        .iter()
        .map(|p| {
            p.tensor
                .grad()
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.tensor.numel()])
        })
        .collect();
    let mut report = GradReport {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
        kinks: 0,
    };
    let centre = eval(store, &f);
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let orig = store.iter().nth(i).unwrap().tensor.data()[j];
            let set = |store: &mut ParamStore<f64>, v: f64| {
                store.iter_mut().nth(i).unwrap().tensor.data_mut()[j] = v;
            };
            set(store, orig + FD_STEP);
            let up = eval(store, &f);
            set(store, orig - FD_STEP);
            let down = eval(store, &f);
            set(store, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let (fwd, bwd) = ((up - centre) / FD_STEP, (centre - down) / FD_STEP);
            if (fwd - bwd).abs() > KINK_GAP * fwd.abs().max(bwd.abs()).max(REL_FLOOR) {
                report.kinks += 1;
                continue;
            }
            let rel = (a[j] - numeric).abs() / a[j].abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel {
                report.max_rel = rel;
                let name = &store.iter().nth(i).unwrap().name;
                report.worst = format!("{name}[{j}] analytic {} numeric {numeric}", a[j]);
            }
        }
    }
    report
}

pub const CONV_GRID_CHANNELS: usize = 8;

/// Every kernel, group and padding combination at both strides, plus
/// non-square channel counts through both kernel paths.
pub fn conv_grid() -> Vec<ConvSpec> {
    let mut specs = Vec::new();
    for k in [1, 3, 5] {
        for groups in [1, 4, CONV_GRID_CHANNELS] {
            for pad in [0, 1, 2] {
                for stride in [1, 2] {
                    specs.push(
                        ConvSpec::new(CONV_GRID_CHANNELS, CONV_GRID_CHANNELS, k)
                            .with_groups(groups)
                            .with_padding(pad)
                            .with_stride(stride),
                    );
                }
            }
        }
    }
    specs.push(ConvSpec::new(3, 12, 3));
    specs.push(ConvSpec::new(4 * CONV_GRID_CHANNELS, CONV_GRID_CHANNELS, 3).with_groups(CONV_GRID_CHANNELS));
    specs.push(ConvSpec::new(4 * CONV_GRID_CHANNELS, CONV_GRID_CHANNELS, 5).with_groups(4));
    specs.push(ConvSpec::pointwise(CONV_GRID_CHANNELS, 3 * CONV_GRID_CHANNELS).with_bias(false));
    specs
}

/// Textbook nested-loop grouped convolution with zero padding.
pub fn naive_conv(x: &Tensor<f64>, s: &ConvSpec, w: &[f64], b: Option<&[f64]>) -> Tensor<f64> {
    let [n, _, h, wd] = x.dims();
    let (kh, kw) = s.kernel;
    let oh = (h + 2 * s.padding - kh) / s.stride + 1;
    let ow = (wd + 2 * s.padding - kw) / s.stride + 1;
    let cin_g = s.in_channels / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut out = Tensor::zeros([n, s.out_channels, oh, ow]).unwrap();
    for bi in 0..n {
        for oc in 0..s.out_channels {
            let g = oc / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b[oc]);
                    for icg in 0..cin_g {
                        let ic = g * cin_g + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                                let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wv = w[((oc * cin_g + icg) * kh + ky) * kw + kx];
                                acc += wv * x.at(bi, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    let o = out.offset(bi, oc, oy, ox);
                    out.data_mut()[o] = acc;
                }
            }
        }
    }
    out
}

/// Input and weight gradients of [`naive_conv`] for upstream gradient `g`.
pub fn naive_conv_grads(x: &Tensor<f64>, s: &ConvSpec, w: &[f64], g: &Tensor<f64>) -> (Tensor<f64>, Vec<f64>) {
    let [n, _, h, wd] = x.dims();
    let [_, _, oh, ow] = g.dims();
    let (kh, kw) = s.kernel;
    let cin_g = s.in_channels / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut dx = Tensor::zeros_like(x);
    let mut dw = vec![0.0; w.len()];
    for bi in 0..n {
        for oc in 0..s.out_channels {
            let grp = oc / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = g.at(bi, oc, oy, ox);
                    for icg in 0..cin_g {
                        let ic = grp * cin_g + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                                let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wi = ((oc * cin_g + icg) * kh + ky) * kw + kx;
                                let xi = x.offset(bi, ic, iy as usize, ix as usize);
                                dw[wi] += go * x.data()[xi];
                                dx.data_mut()[xi] += go * w[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}

fn keys_cubic(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        1.5 * t.powi(3) - 2.5 * t * t + 1.0
    } else if t <= 2.0 {
        -0.5 * t.powi(3) + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// One-dimensional imresize by direct summation over every input sample:
/// 1-based output centres, symmetric reflection, antialiased kernel when
/// shrinking, weights normalized per output sample.
pub fn imresize_1d(input: &[f64], scale: f64) -> Vec<f64> {
    let n = input.len() as isize;
    let out_len = (input.len() as f64 * scale).round() as usize;
    let (kscale, support) = if scale < 1.0 { (scale, 2.0 / scale) } else { (1.0, 2.0) };
    let reflect = |k: isize| -> usize {
        let period = 2 * n;
        let m = (k - 1).rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };
    (1..=out_len)
        .map(|i| {
            let u = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let lo = (u - support).floor() as isize - 1;
            let hi = (u + support).ceil() as isize + 1;
            let (mut acc, mut norm) = (0.0, 0.0);
            for k in lo..=hi {
                let wgt = kscale * keys_cubic(kscale * (u - k as f64));
                acc += wgt * input[reflect(k)];
                norm += wgt;
            }
            acc / norm
        })
        .collect()
}
