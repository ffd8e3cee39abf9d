//! Grouped 2-D convolution.
//!
//! Groups whose output width is one channel (depthwise, and the per-channel
//! pixel-unshuffle reduction) run a direct sliding-window kernel; all other
//! groups go through im2col and GEMM. Both paths produce identical results
//! up to floating-point reassociation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{matmul, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" zero padding, one group, with bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding: kernel / 2,
            groups: 1,
            bias: true,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        ConvSpec::new(channels, channels, kernel).with_groups(channels)
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec::new(in_channels, out_channels, 1)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("conv {self:?}: {msg}")));
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return bad("channels and groups must be positive".into());
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return bad("kernel and stride must be positive".into());
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return bad(format!(
                "groups {} must divide in {} and out {}",
                self.groups, self.in_channels, self.out_channels
            ));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// `[out, in/groups, k_h, k_w]`
    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_per_group(), self.kernel.0, self.kernel.1]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_dims().iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.bias { self.out_channels } else { 0 }
    }

    /// Multiply-accumulates to produce an `out_h × out_w` output map.
    pub fn mult_adds(&self, out_h: usize, out_w: usize) -> u64 {
        (self.weight_len() as u64) * (out_h as u64) * (out_w as u64)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < kh || pw < kw {
            return Err(Error::dims(
                &[h, w],
                format!("padded input smaller than kernel {kh}x{kw}"),
            ));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    fn direct_path(&self) -> bool {
        self.out_per_group() == 1
    }

    fn is_plain_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == 1 && self.padding == 0
    }
}

struct Geometry {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

fn check_inputs<T: Real>(x: &Tensor<T>, spec: &ConvSpec, weight: &[T], bias: Option<&[T]>) -> Result<Geometry> {
    spec.validate()?;
    let [_, c, h, w] = x.dims();
    if c != spec.in_channels {
        return Err(Error::dims(
            &x.dims(),
            format!("conv expects {} input channels", spec.in_channels),
        ));
    }
    if weight.len() != spec.weight_len() {
        return Err(Error::dims(
            &spec.weight_dims(),
            format!("weight buffer holds {} elements", weight.len()),
        ));
    }
    match bias {
        Some(b) if b.len() != spec.out_channels => {
            return Err(Error::dims(
                &[spec.out_channels],
                format!("bias buffer holds {} elements", b.len()),
            ))
        }
        _ => {}
    }
    let (out_h, out_w) = spec.output_hw(h, w)?;
    Ok(Geometry {
        in_h: h,
        in_w: w,
        out_h,
        out_w,
    })
}

/// Range of output columns `o` for which `o*stride + k - pad` lands in `[0, n)`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= n_in - 1
    let hi = if n_in + pad < k + 1 {
        0
    } else {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    };
    (lo.min(hi), hi)
}

fn im2col<T: Real>(x: &[T], spec: &ConvSpec, geo: &Geometry, first_channel: usize, col: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let plane = geo.in_h * geo.in_w;
    let n = geo.out_h * geo.out_w;
    for ic in 0..spec.in_per_group() {
        let xc = &x[(first_channel + ic) * plane..][..plane];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(geo.out_h, geo.in_h, ky, s, p);
            for kx in 0..kw {
                let (ox_lo, ox_hi) = valid_range(geo.out_w, geo.in_w, kx, s, p);
                let row = &mut col[((ic * kh + ky) * kw + kx) * n..][..n];
                row.iter_mut().for_each(|v| *v = T::zero());
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let dst = &mut row[oy * geo.out_w..][..geo.out_w];
                    for ox in ox_lo..ox_hi {
                        dst[ox] = xc[iy * geo.in_w + ox * s + kx - p];
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], spec: &ConvSpec, geo: &Geometry, first_channel: usize, gx: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let plane = geo.in_h * geo.in_w;
    let n = geo.out_h * geo.out_w;
    for ic in 0..spec.in_per_group() {
        let gc = &mut gx[(first_channel + ic) * plane..][..plane];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(geo.out_h, geo.in_h, ky, s, p);
            for kx in 0..kw {
                let (ox_lo, ox_hi) = valid_range(geo.out_w, geo.in_w, kx, s, p);
                let row = &col[((ic * kh + ky) * kw + kx) * n..][..n];
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let src = &row[oy * geo.out_w..][..geo.out_w];
                    for ox in ox_lo..ox_hi {
                        let i = iy * geo.in_w + ox * s + kx - p;
                        gc[i] = gc[i] + src[ox];
                    }
                }
            }
        }
    }
}

/// Direct kernel for a group with a single output channel.
fn direct_forward<T: Real>(x: &[T], spec: &ConvSpec, geo: &Geometry, weight: &[T], oc: usize, out: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let plane = geo.in_h * geo.in_w;
    let cin_g = spec.in_per_group();
    let first = oc * cin_g;
    for ic in 0..cin_g {
        let xc = &x[(first + ic) * plane..][..plane];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(geo.out_h, geo.in_h, ky, s, p);
            for kx in 0..kw {
                let wv = weight[((oc * cin_g + ic) * kh + ky) * kw + kx];
                let (ox_lo, ox_hi) = valid_range(geo.out_w, geo.in_w, kx, s, p);
                for oy in oy_lo..oy_hi {
                    let src = &xc[(oy * s + ky - p) * geo.in_w..];
                    let dst = &mut out[oy * geo.out_w..][..geo.out_w];
                    for ox in ox_lo..ox_hi {
                        dst[ox] = dst[ox] + wv * src[ox * s + kx - p];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn direct_backward<T: Real>(
    x: &[T],
    spec: &ConvSpec,
    geo: &Geometry,
    weight: &[T],
    oc: usize,
    gy: &[T],
    gx: &mut [T],
    gw: &mut [T],
) {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let plane = geo.in_h * geo.in_w;
    let cin_g = spec.in_per_group();
    let first = oc * cin_g;
    for ic in 0..cin_g {
        let xc = &x[(first + ic) * plane..][..plane];
        let gxc = &mut gx[(first + ic) * plane..][..plane];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(geo.out_h, geo.in_h, ky, s, p);
            for kx in 0..kw {
                let wi = ((oc * cin_g + ic) * kh + ky) * kw + kx;
                let wv = weight[wi];
                let (ox_lo, ox_hi) = valid_range(geo.out_w, geo.in_w, kx, s, p);
                let mut acc = T::zero();
                for oy in oy_lo..oy_hi {
                    let row = (oy * s + ky - p) * geo.in_w;
                    let g = &gy[oy * geo.out_w..][..geo.out_w];
                    for ox in ox_lo..ox_hi {
                        let i = row + ox * s + kx - p;
                        acc = acc + g[ox] * xc[i];
                        gxc[i] = gxc[i] + wv * g[ox];
                    }
                }
                gw[wi] = gw[wi] + acc;
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(x: &Tensor<T>, spec: &ConvSpec, weight: &[T], bias: Option<&[T]>) -> Result<Tensor<T>> {
    let geo = check_inputs(x, spec, weight, bias)?;
    let [batch, cin, _, _] = x.dims();
    let n = geo.out_h * geo.out_w;
    let in_len = cin * geo.in_h * geo.in_w;
    let out_len = spec.out_channels * n;
    let kdim = spec.in_per_group() * spec.kernel.0 * spec.kernel.1;
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let mut out = vec![T::zero(); batch * out_len];

    out.par_chunks_mut(out_len)
        .zip(x.data().par_chunks(in_len))
        .for_each(|(ob, xb)| {
            if spec.direct_path() {
                for oc in 0..spec.out_channels {
                    direct_forward(xb, spec, &geo, weight, oc, &mut ob[oc * n..][..n]);
                }
            } else if spec.is_plain_pointwise() {
                for g in 0..spec.groups {
                    matmul(
                        cout_g,
                        kdim,
                        n,
                        &weight[g * cout_g * kdim..][..cout_g * kdim],
                        false,
                        &xb[g * cin_g * n..][..cin_g * n],
                        false,
                        &mut ob[g * cout_g * n..][..cout_g * n],
                        false,
                    );
                }
            } else {
                let mut col = vec![T::zero(); kdim * n];
                for g in 0..spec.groups {
                    im2col(xb, spec, &geo, g * cin_g, &mut col);
                    matmul(
                        cout_g,
                        kdim,
                        n,
                        &weight[g * cout_g * kdim..][..cout_g * kdim],
                        false,
                        &col,
                        false,
                        &mut ob[g * cout_g * n..][..cout_g * n],
                        false,
                    );
                }
            }
            if let Some(b) = bias {
                for (oc, chunk) in ob.chunks_mut(n).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = *v + b[oc]);
                }
            }
        });

    Ok(Tensor::from_parts(
        [batch, spec.out_channels, geo.out_h, geo.out_w],
        out,
    ))
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &[T],
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let geo = check_inputs(x, spec, weight, None)?;
    let [batch, cin, _, _] = x.dims();
    let expected = [batch, spec.out_channels, geo.out_h, geo.out_w];
    if grad_out.dims() != expected {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            lhs: expected,
            rhs: grad_out.dims(),
        });
    }
    let n = geo.out_h * geo.out_w;
    let in_len = cin * geo.in_h * geo.in_w;
    let out_len = spec.out_channels * n;
    let kdim = spec.in_per_group() * spec.kernel.0 * spec.kernel.1;
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let mut gx = vec![T::zero(); batch * in_len];

    // Per-item weight gradients are reduced in batch order afterwards so the
    // result does not depend on how rayon schedules the items.
    let partial: Vec<Vec<T>> = gx
        .par_chunks_mut(in_len)
        .zip(x.data().par_chunks(in_len))
        .zip(grad_out.data().par_chunks(out_len))
        .map(|((gxb, xb), gyb)| {
            let mut gw = vec![T::zero(); weight.len()];
            if spec.direct_path() {
                for oc in 0..spec.out_channels {
                    direct_backward(xb, spec, &geo, weight, oc, &gyb[oc * n..][..n], gxb, &mut gw);
                }
            } else if spec.is_plain_pointwise() {
                for g in 0..spec.groups {
                    let w_g = &weight[g * cout_g * kdim..][..cout_g * kdim];
                    let gy_g = &gyb[g * cout_g * n..][..cout_g * n];
                    matmul(
                        cout_g,
                        n,
                        kdim,
                        gy_g,
                        false,
                        &xb[g * cin_g * n..][..cin_g * n],
                        true,
                        &mut gw[g * cout_g * kdim..][..cout_g * kdim],
                        false,
                    );
                    matmul(
                        kdim,
                        cout_g,
                        n,
                        w_g,
                        true,
                        gy_g,
                        false,
                        &mut gxb[g * cin_g * n..][..cin_g * n],
                        false,
                    );
                }
            } else {
                let mut col = vec![T::zero(); kdim * n];
                for g in 0..spec.groups {
                    let w_g = &weight[g * cout_g * kdim..][..cout_g * kdim];
                    let gy_g = &gyb[g * cout_g * n..][..cout_g * n];
                    im2col(xb, spec, &geo, g * cin_g, &mut col);
                    matmul(
                        cout_g,
                        n,
                        kdim,
                        gy_g,
                        false,
                        &col,
                        true,
                        &mut gw[g * cout_g * kdim..][..cout_g * kdim],
                        false,
                    );
                    matmul(kdim, cout_g, n, w_g, true, gy_g, false, &mut col, false);
                    col2im(&col, spec, &geo, g * cin_g, gxb);
                }
            }
            gw
        })
        .collect();

    let mut gw = vec![T::zero(); weight.len()];
    for part in &partial {
        for (acc, v) in gw.iter_mut().zip(part) {
            *acc = *acc + *v;
        }
    }

    let gb = spec.bias.then(|| {
        let mut gb = vec![T::zero(); spec.out_channels];
        for gyb in grad_out.data().chunks(out_len) {
            for (oc, chunk) in gyb.chunks(n).enumerate() {
                gb[oc] = gb[oc] + chunk.iter().copied().sum::<T>();
            }
        }
        gb
    });

    Ok(ConvGrads {
        input: Tensor::from_parts(x.dims(), gx),
        weight: gw,
        bias: gb,
    })
}
