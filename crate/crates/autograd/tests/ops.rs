use std::f64::consts::PI;

use autograd::gradcheck::{gradcheck, GradCheckOptions};
use autograd::{Binder, Graph, Params, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed random projection so every output element matters to the scalar.
fn project<'g>(b: &Binder<'g>, y: Var<'g>) -> Var<'g> {
    let shape = y.shape();
    let r = Tensor::from_fn(&shape, |i| ((i * 7919 % 97) as f64 / 97.0) - 0.45);
    y.mul(b.graph().constant(r)).sum()
}

fn check(params: &Params, f: impl for<'g> Fn(&Binder<'g>) -> Var<'g>) {
    let report = gradcheck(params, f, GradCheckOptions::default());
    assert!(report.checked() > 0);
    assert!(
        report.max_rel_error() < 1e-5,
        "worst entry {:?}",
        report.worst()
    );
}

fn params_of(entries: &[(&str, Tensor)]) -> Params {
    let mut p = Params::new();
    for (n, t) in entries {
        p.insert(*n, t.clone());
    }
    p
}

#[test]
fn elementwise_gradients() {
    let mut r = rng(1);
    let p = params_of(&[
        ("a", Tensor::randn(&[2, 3, 4], 1.0, &mut r)),
        ("b", Tensor::randn(&[2, 3, 4], 1.0, &mut r)),
        ("v", Tensor::randn(&[3], 1.0, &mut r)),
    ]);
    check(&p, |b| {
        let (x, y, v) = (b.get("a"), b.get("b"), b.get("v"));
        let z = x.mul(y).add(x.gelu()).sub(y.sigmoid().scale(0.3)).add_scalar(0.1);
        let z = z.mul_axis(v, 1).add_axis(v, 1).exp().scale(0.1);
        project(b, z.add(x.square().add_scalar(1.0).sqrt()))
    });
}

#[test]
fn normalization_gradients() {
    let mut r = rng(2);
    let p = params_of(&[("x", Tensor::randn(&[2, 5, 3], 1.0, &mut r))]);
    for axis in 0..3 {
        check(&p, move |b| {
            let x = b.get("x");
            let a = x.layer_norm(axis, 1e-5);
            let c = x.l2_normalize(axis, 1e-12);
            let d = x.softmax(axis);
            let e = x.log_softmax(axis);
            project(b, a.add(c).add(d).add(e))
        });
    }
}

#[test]
fn reductions_and_shape_gradients() {
    let mut r = rng(3);
    let p = params_of(&[("x", Tensor::randn(&[2, 3, 4, 6], 1.0, &mut r))]);
    check(&p, |b| {
        let x = b.get("x");
        let a = x.permute(&[0, 2, 3, 1]).reshape(&[2, 24, 3]).sum_axis(1);
        let s = x.slice(3, 1, 3).mean_axis(2);
        let c = Var::concat(&[x.slice(1, 0, 1), x.flip(3), x.roll(2, 1)], 1);
        let d = x.pad_reflect2d(2, 3).upsample_nearest2x().crop2d(5, 7);
        let e = x.resize_bilinear(3, 9);
        project(b, a)
            .add(project(b, s))
            .add(project(b, c))
            .add(project(b, d))
            .add(project(b, e))
            .add(x.mean())
    });
}

#[test]
fn matmul_gradients() {
    let mut r = rng(4);
    let p = params_of(&[
        ("x", Tensor::randn(&[2, 3, 4], 1.0, &mut r)),
        ("w", Tensor::randn(&[4, 5], 1.0, &mut r)),
        ("a", Tensor::randn(&[2, 3, 4], 1.0, &mut r)),
        ("c", Tensor::randn(&[2, 4, 3], 1.0, &mut r)),
    ]);
    check(&p, |b| {
        let y = b.get("x").matmul(b.get("w"));
        let (a, c) = (b.get("a"), b.get("c"));
        let nn = a.bmm(c, false, false);
        let tn = c.bmm(c, true, false);
        let nt = a.bmm(a, false, true);
        let tt = c.bmm(a, true, true);
        project(b, y)
            .add(project(b, nn))
            .add(project(b, tn))
            .add(project(b, nt))
            .add(project(b, tt))
    });
}

#[test]
fn bmm_matches_naive_product() {
    let mut r = rng(5);
    let a = Tensor::randn(&[3, 2, 4], 1.0, &mut r);
    let c = Tensor::randn(&[3, 4, 5], 1.0, &mut r);
    let g = Graph::new();
    let y = g.constant(a.clone()).bmm(g.constant(c.clone()), false, false).value();
    for bi in 0..3 {
        for i in 0..2 {
            for j in 0..5 {
                let want: f64 = (0..4).map(|k| a.at(&[bi, i, k]) * c.at(&[bi, k, j])).sum();
                assert!((y.at(&[bi, i, j]) - want).abs() < 1e-12);
            }
        }
    }
}

fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut y = Tensor::zeros(&[b, co, ho, wo]);
    for bi in 0..b {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.at(&[bi, c, iy as usize, ix as usize]) * w.at(&[o, c, ky, kx]);
                                }
                            }
                        }
                    }
                    y.set(&[bi, o, oy, ox], acc);
                }
            }
        }
    }
    y
}

#[test]
fn conv2d_matches_direct_summation() {
    let mut r = rng(6);
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (5, 1, 2), (7, 1, 3)] {
        let x = Tensor::randn(&[2, 3, 6, 8], 1.0, &mut r);
        let w = Tensor::randn(&[4, 3, k, k], 1.0, &mut r);
        let g = Graph::new();
        let y = g.constant(x.clone()).conv2d(g.constant(w.clone()), stride, pad).value();
        let want = naive_conv(&x, &w, stride, pad);
        assert_eq!(y.shape(), want.shape());
        assert!(y.max_abs_diff(&want) < 1e-12, "k={k} s={stride}");
    }
}

#[test]
fn depthwise_matches_direct_summation() {
    let mut r = rng(7);
    let x = Tensor::randn(&[2, 3, 5, 7], 1.0, &mut r);
    let w = Tensor::randn(&[3, 1, 5, 5], 1.0, &mut r);
    let g = Graph::new();
    let y = g.constant(x.clone()).depthwise_conv2d(g.constant(w.clone())).value();
    for c in 0..3 {
        let xc = g.constant(x.clone()).slice(1, c, 1).value();
        let wc = Tensor::new(&[1, 1, 5, 5], w.data()[c * 25..(c + 1) * 25].to_vec());
        let want = naive_conv(&xc, &wc, 1, 2);
        let got = g.constant(y.as_ref().clone()).slice(1, c, 1).value();
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
}

#[test]
fn conv_gradients() {
    let mut r = rng(8);
    let p = params_of(&[
        ("x", Tensor::randn(&[2, 3, 6, 5], 1.0, &mut r)),
        ("w3", Tensor::randn(&[2, 3, 3, 3], 0.5, &mut r)),
        ("w1", Tensor::randn(&[4, 3, 1, 1], 0.5, &mut r)),
        ("dw", Tensor::randn(&[3, 1, 3, 3], 0.5, &mut r)),
    ]);
    check(&p, |b| {
        let x = b.get("x");
        let a = x.conv2d(b.get("w3"), 1, 1);
        let s = x.conv2d(b.get("w3"), 2, 1);
        let c = x.conv2d(b.get("w1"), 1, 0);
        let d = x.depthwise_conv2d(b.get("dw"));
        project(b, a).add(project(b, s)).add(project(b, c)).add(project(b, d))
    });
}

/// Textbook complex DFT along both axes with explicit twiddle sums.
fn dft_matrix_transform(x: &[(f64, f64)], h: usize, w: usize, sign: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = (0.0, 0.0);
            for y in 0..h {
                for xx in 0..w {
                    let ang = sign * 2.0 * PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                    let (c, s) = (ang.cos(), ang.sin());
                    let (re, im) = x[y * w + xx];
                    acc.0 += re * c - im * s;
                    acc.1 += re * s + im * c;
                }
            }
            let norm = ((h * w) as f64).sqrt();
            out[u * w + v] = (acc.0 / norm, acc.1 / norm);
        }
    }
    out
}

#[test]
fn fft2_matches_dft_matrix_and_inverts() {
    let mut r = rng(9);
    let (h, w) = (4, 6);
    let x = Tensor::randn(&[1, 2, h, w], 1.0, &mut r);
    let g = Graph::new();
    let spec = g.constant(x.clone()).fft2();
    let sv = spec.value();
    for c in 0..2 {
        let plane: Vec<(f64, f64)> = (0..h * w).map(|i| (x.data()[c * h * w + i], 0.0)).collect();
        let want = dft_matrix_transform(&plane, h, w, -1.0);
        for (i, (re, im)) in want.iter().enumerate() {
            assert!((sv.data()[c * h * w + i] - re).abs() < 1e-12);
            assert!((sv.data()[(2 + c) * h * w + i] - im).abs() < 1e-12);
        }
    }
    let back = spec.ifft2_real().value();
    assert!(back.max_abs_diff(&x) < 1e-12);
}

#[test]
fn spectral_gradients() {
    let mut r = rng(10);
    let p = params_of(&[
        ("x", Tensor::randn(&[2, 2, 4, 6], 1.0, &mut r)),
        ("gate", Tensor::randn(&[2, 4, 4, 6], 1.0, &mut r)),
    ]);
    check(&p, |b| {
        let spec = b.get("x").fft2();
        let gated = spec.mul(b.get("gate").sigmoid());
        project(b, gated.ifft2_real()).add(project(b, spec))
    });
}

#[test]
fn haar_hand_values_and_reconstruction() {
    let (a, bb, c, d) = (1.0, 2.0, 3.0, 5.0);
    let x = Tensor::new(&[1, 1, 2, 2], vec![a, bb, c, d]);
    let g = Graph::new();
    let y = g.constant(x.clone()).dwt2().value();
    let want = [
        (a + bb + c + d) / 2.0,
        (a + bb - c - d) / 2.0,
        (a - bb + c - d) / 2.0,
        (a - bb - c + d) / 2.0,
    ];
    for (got, want) in y.data().iter().zip(want) {
        assert!((got - want).abs() < 1e-15);
    }
    let back = g.constant(y.as_ref().clone()).idwt2().value();
    assert!(back.max_abs_diff(&x) < 1e-15);
}

#[test]
fn wavelet_and_vlad_gradients() {
    let mut r = rng(11);
    let p = params_of(&[
        ("x", Tensor::randn(&[2, 3, 4, 6], 1.0, &mut r)),
        ("a", Tensor::randn(&[2, 5, 3], 1.0, &mut r)),
        ("f", Tensor::randn(&[2, 5, 4], 1.0, &mut r)),
        ("c", Tensor::randn(&[3, 4], 1.0, &mut r)),
    ]);
    check(&p, |b| {
        let x = b.get("x");
        let bands = x.dwt2();
        let back = bands.scale(0.7).idwt2();
        let v = b.get("a").softmax(2).residual_aggregate(b.get("f"), b.get("c"));
        project(b, bands).add(project(b, back)).add(project(b, v))
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn haar_round_trip(seed in 0u64..1000, hh in 1usize..5, hw in 1usize..5, c in 1usize..3) {
        let mut r = rng(seed);
        let x = Tensor::randn(&[1, c, 2 * hh, 2 * hw], 3.0, &mut r);
        let g = Graph::new();
        let back = g.constant(x.clone()).dwt2().idwt2().value();
        prop_assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..1000, n in 1usize..9) {
        let mut r = rng(seed);
        let g = Graph::new();
        let y = g.constant(Tensor::randn(&[3, n], 10.0, &mut r)).softmax(1).value();
        for row in y.data().chunks(n) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn frozen_inputs_record_no_backward() {
    let g = Graph::new();
    let x = g.constant(Tensor::full(&[2], 1.0));
    let y = x.square().sum();
    assert!(!y.requires_grad());
    assert!(g.backward(y).get(x).is_none());
}

#[test]
fn gradient_accumulates_over_reuse() {
    let g = Graph::new();
    let x = g.variable(Tensor::new(&[1], vec![3.0]));
    let y = x.mul(x).add(x);
    let grads = g.backward(y);
    assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
}

#[test]
fn kernels_wider_than_the_input() {
    let mut r = rng(17);
    let x = Tensor::randn(&[1, 2, 2, 3], 1.0, &mut r);
    let w = Tensor::randn(&[2, 1, 7, 7], 1.0, &mut r);
    let g = Graph::new();
    let y = g.constant(x.clone()).depthwise_conv2d(g.constant(w.clone())).value();
    for c in 0..2 {
        let xc = g.constant(x.clone()).slice(1, c, 1).value();
        let wc = Tensor::new(&[1, 1, 7, 7], w.data()[c * 49..(c + 1) * 49].to_vec());
        let want = naive_conv(&xc, &wc, 1, 3);
        let got = g.constant(y.as_ref().clone()).slice(1, c, 1).value();
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
    let p = params_of(&[
        ("x", x),
        ("dw", w),
        ("w5", Tensor::randn(&[2, 2, 5, 5], 0.5, &mut r)),
    ]);
    check(&p, |b| {
        let x = b.get("x");
        let d = x.depthwise_conv2d(b.get("dw"));
        let c = x.conv2d(b.get("w5"), 1, 2);
        project(b, d).add(project(b, c))
    });
}
