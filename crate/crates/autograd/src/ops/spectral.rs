//! Orthonormal 2-D discrete Fourier transforms over the last two axes.
//!
//! The spectrum of a `[B, C, H, W]` tensor is stored as `[B, 2C, H, W]`:
//! real parts in channels `0..C`, imaginary parts in `C..2C`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::graph::Var;
use crate::tensor::Tensor;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place unitary 2-D transform of an `h x w` row-major plane.
fn transform_plane(buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row_fft = plan(w, inverse);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = plan(h, inverse);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    let s = 1.0 / ((h * w) as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Real `[B, C, H, W]` to split spectrum `[B, 2C, H, W]`.
fn forward_real(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let plane = h * w;
    let mut out = Tensor::zeros(&[b, 2 * c, h, w]);
    let mut buf = vec![Complex::new(0.0, 0.0); plane];
    for bi in 0..b {
        for ci in 0..c {
            let src = &x.data()[(bi * c + ci) * plane..][..plane];
            for (d, &v) in buf.iter_mut().zip(src) {
                *d = Complex::new(v, 0.0);
            }
            transform_plane(&mut buf, h, w, false);
            let od = out.data_mut();
            let re = (bi * 2 * c + ci) * plane;
            let im = (bi * 2 * c + c + ci) * plane;
            for (k, v) in buf.iter().enumerate() {
                od[re + k] = v.re;
                od[im + k] = v.im;
            }
        }
    }
    out
}

/// Split spectrum `[B, 2C, H, W]` to the real part of its inverse, `[B, C, H, W]`.
fn inverse_real(y: &Tensor) -> Tensor {
    let s = y.shape();
    assert!(s[1] % 2 == 0, "spectrum must have an even channel count");
    let (b, c, h, w) = (s[0], s[1] / 2, s[2], s[3]);
    let plane = h * w;
    let mut out = Tensor::zeros(&[b, c, h, w]);
    let mut buf = vec![Complex::new(0.0, 0.0); plane];
    for bi in 0..b {
        for ci in 0..c {
            let re = &y.data()[(bi * 2 * c + ci) * plane..][..plane];
            let im = &y.data()[(bi * 2 * c + c + ci) * plane..][..plane];
            for ((d, &r), &i) in buf.iter_mut().zip(re).zip(im) {
                *d = Complex::new(r, i);
            }
            transform_plane(&mut buf, h, w, true);
            let od = &mut out.data_mut()[(bi * c + ci) * plane..][..plane];
            for (d, v) in od.iter_mut().zip(&buf) {
                *d = v.re;
            }
        }
    }
    out
}

impl<'g> Var<'g> {
    /// Unitary 2-D DFT of a real `[B, C, H, W]` input; returns the
    /// channel-concatenated `[real, imaginary]` spectrum.
    pub fn fft2(self) -> Var<'g> {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "fft2 input must be [B, C, H, W]");
        let y = forward_real(&x);
        self.graph()
            .op(y, &[self], |g, _| vec![Some(inverse_real(g))])
    }

    /// Real part of the unitary inverse 2-D DFT of a split spectrum.
    pub fn ifft2_real(self) -> Var<'g> {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "ifft2 input must be [B, 2C, H, W]");
        let y = inverse_real(&x);
        self.graph()
            .op(y, &[self], |g, _| vec![Some(forward_real(g))])
    }
}
