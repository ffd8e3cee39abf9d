mod common;

use common::oracle::{conv_grid as grid, naive_conv, naive_conv_grads, CONV_GRID_CHANNELS as C};
use hpun::ops::{conv2d_backward, conv2d_forward, ConvSpec};
use hpun::Tensor;

const TOL: f64 = 1e-12;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn forward_matches_direct_loops() {
    for (i, spec) in grid().into_iter().enumerate() {
        let x = Tensor::<f64>::randn([2, spec.in_channels, 9, 7], i as u64).unwrap();
        let w = Tensor::<f64>::randn(spec.weight_dims(), 100 + i as u64).unwrap();
        let b: Vec<f64> = (0..spec.out_channels).map(|c| c as f64 * 0.1 - 0.3).collect();
        let bias = spec.bias.then_some(b.as_slice());
        let got = conv2d_forward(&x, &spec, w.data(), bias).unwrap();
        let want = naive_conv(&x, &spec, w.data(), bias);
        assert_eq!(got.dims(), want.dims(), "{spec:?}");
        let e = rel(got.data(), want.data());
        assert!(e <= TOL, "{spec:?}: {e:e}");
    }
}

#[test]
fn backward_matches_direct_loops() {
    for (i, spec) in grid().into_iter().enumerate() {
        let x = Tensor::<f64>::randn([2, spec.in_channels, 9, 7], i as u64).unwrap();
        let w = Tensor::<f64>::randn(spec.weight_dims(), 200 + i as u64).unwrap();
        let y = naive_conv(&x, &spec, w.data(), None);
        let g = Tensor::<f64>::randn(y.dims(), 300 + i as u64).unwrap();
        let got = conv2d_backward(&x, &spec, w.data(), &g).unwrap();
        let (dx, dw) = naive_conv_grads(&x, &spec, w.data(), &g);
        assert!(rel(got.input.data(), dx.data()) <= TOL, "{spec:?} input");
        assert!(rel(&got.weight, &dw) <= TOL, "{spec:?} weight");
        if spec.bias {
            let db = got.bias.expect("bias gradient");
            let [_, oc, oh, ow] = g.dims();
            for c in 0..oc {
                let s: f64 = (0..2)
                    .flat_map(|b| (0..oh * ow).map(move |p| (b, p)))
                    .map(|(b, p)| g.at(b, c, p / ow, p % ow))
                    .sum();
                assert!((db[c] - s).abs() <= TOL * s.abs().max(1.0), "{spec:?} bias");
            }
        }
    }
}

#[test]
fn mismatched_weights_are_rejected() {
    let spec = ConvSpec::new(C, C, 3);
    let x = Tensor::<f64>::zeros([1, C, 4, 4]).unwrap();
    assert!(conv2d_forward(&x, &spec, &[0.0; 3], None).is_err());
    let bad = Tensor::<f64>::zeros([1, C + 1, 4, 4]).unwrap();
    assert!(conv2d_forward(&bad, &spec, &vec![0.0; spec.weight_len()], None).is_err());
}
