//! 2-D convolutions over `[B, C, H, W]` tensors with zero padding.

use crate::graph::Var;
use crate::ops::linalg::gemm;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(cin: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel larger than padded input");
        Self {
            cin,
            h,
            w,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Range of output columns whose tap `kx` lands inside the input.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        valid_range(self.w, self.wo, kx, self.stride, self.pad)
    }

    fn valid_rows(&self, ky: usize) -> (usize, usize) {
        valid_range(self.h, self.ho, ky, self.stride, self.pad)
    }
}

fn valid_range(n: usize, out: usize, tap: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + tap - pad in [0, n)
    let lo = pad.saturating_sub(tap).div_ceil(stride);
    let hi_excl = if n + pad > tap {
        ((n + pad - tap - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi_excl), hi_excl)
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let plane = g.ho * g.wo;
    cols.iter_mut().for_each(|v| *v = 0.0);
    for ci in 0..g.cin {
        let xc = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (y0, y1) = g.valid_rows(ky);
            for kx in 0..g.k {
                let (x0, x1) = g.valid_cols(kx);
                if x1 <= x0 {
                    continue;
                }
                let row = &mut cols[((ci * g.k + ky) * g.k + kx) * plane..][..plane];
                for oy in y0..y1 {
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &xc[iy * g.w..(iy + 1) * g.w];
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let ix0 = x0 + kx - g.pad;
                        dst[x0..x1].copy_from_slice(&src[ix0..ix0 + (x1 - x0)]);
                    } else {
                        for ox in x0..x1 {
                            dst[ox] = src[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    let plane = g.ho * g.wo;
    for ci in 0..g.cin {
        let xc = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (y0, y1) = g.valid_rows(ky);
            for kx in 0..g.k {
                let (x0, x1) = g.valid_cols(kx);
                if x1 <= x0 {
                    continue;
                }
                let row = &cols[((ci * g.k + ky) * g.k + kx) * plane..][..plane];
                for oy in y0..y1 {
                    let iy = oy * g.stride + ky - g.pad;
                    let dst = &mut xc[iy * g.w..(iy + 1) * g.w];
                    let src = &row[oy * g.wo..(oy + 1) * g.wo];
                    for ox in x0..x1 {
                        dst[ox * g.stride + kx - g.pad] += src[ox];
                    }
                }
            }
        }
    }
}

impl<'g> Var<'g> {
    /// Dense convolution; `weight` is `[Cout, Cin, k, k]`, no bias.
    pub fn conv2d(self, weight: Var<'g>, stride: usize, pad: usize) -> Var<'g> {
        self.same_graph(&weight);
        let x = self.value();
        let wv = weight.value();
        let (xs, ws) = (x.shape().to_vec(), wv.shape().to_vec());
        assert_eq!(xs.len(), 4, "conv2d input must be [B, C, H, W]");
        assert_eq!(ws.len(), 4, "conv2d weight must be [Cout, Cin, k, k]");
        assert_eq!(ws[2], ws[3], "square kernels only");
        assert_eq!(ws[1], xs[1], "conv2d channel mismatch: weight {ws:?}, input {xs:?}");
        let (batch, cout) = (xs[0], ws[0]);
        let geo = Geometry::new(xs[1], xs[2], xs[3], ws[2], stride, pad);
        let ckk = geo.cin * geo.k * geo.k;
        let plane = geo.ho * geo.wo;
        let in_plane = geo.cin * geo.h * geo.w;
        let mut y = vec![0.0; batch * cout * plane];
        let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![0.0; ckk * plane] };
        for b in 0..batch {
            let xb = &x.data()[b * in_plane..(b + 1) * in_plane];
            let src: &[f64] = if geo.is_pointwise() {
                xb
            } else {
                im2col(xb, &geo, &mut cols);
                &cols
            };
            gemm(cout, ckk, plane, wv.data(), false, src, false, &mut y[b * cout * plane..(b + 1) * cout * plane], false);
        }
        let out_shape = [batch, cout, geo.ho, geo.wo];
        self.graph()
            .op(Tensor::new(&out_shape, y), &[self, weight], move |g, needs| {
                let mut gx = needs[0].then(|| Tensor::zeros(&xs));
                let mut gw = needs[1].then(|| Tensor::zeros(&ws));
                let mut cols = vec![0.0; ckk * plane];
                let mut dcols = vec![0.0; ckk * plane];
                for b in 0..batch {
                    let gb = &g.data()[b * cout * plane..(b + 1) * cout * plane];
                    let xb = &x.data()[b * in_plane..(b + 1) * in_plane];
                    if let Some(gw) = gw.as_mut() {
                        let src: &[f64] = if geo.is_pointwise() {
                            xb
                        } else {
                            im2col(xb, &geo, &mut cols);
                            &cols
                        };
                        gemm(cout, plane, ckk, gb, false, src, true, gw.data_mut(), true);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx.data_mut()[b * in_plane..(b + 1) * in_plane];
                        if geo.is_pointwise() {
                            gemm(ckk, cout, plane, wv.data(), true, gb, false, dst, true);
                        } else {
                            gemm(ckk, cout, plane, wv.data(), true, gb, false, &mut dcols, false);
                            col2im(&dcols, &geo, dst);
                        }
                    }
                }
                vec![gx, gw]
            })
    }

    /// Per-channel "same" convolution with an odd `[C, 1, k, k]` kernel.
    pub fn depthwise_conv2d(self, weight: Var<'g>) -> Var<'g> {
        self.same_graph(&weight);
        let x = self.value();
        let wv = weight.value();
        let (xs, ws) = (x.shape().to_vec(), wv.shape().to_vec());
        assert_eq!(xs.len(), 4, "depthwise input must be [B, C, H, W]");
        assert_eq!(ws.len(), 4);
        assert_eq!(ws[0], xs[1], "depthwise channel mismatch");
        assert_eq!(ws[1], 1);
        let k = ws[2];
        assert!(k % 2 == 1 && ws[3] == k, "depthwise kernel must be odd and square");
        let (batch, ch, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let geo = Geometry::new(1, h, w, k, 1, k / 2);
        let mut y = vec![0.0; x.len()];
        for b in 0..batch {
            for c in 0..ch {
                let off = (b * ch + c) * h * w;
                let xc = &x.data()[off..off + h * w];
                let yc = &mut y[off..off + h * w];
                let kc = &wv.data()[c * k * k..(c + 1) * k * k];
                for ky in 0..k {
                    let (y0, y1) = geo.valid_rows(ky);
                    for kx in 0..k {
                        let coef = kc[ky * k + kx];
                        let (x0, x1) = geo.valid_cols(kx);
                        if x1 <= x0 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy + ky - geo.pad;
                            let src = &xc[iy * w + x0 + kx - geo.pad..][..x1 - x0];
                            let dst = &mut yc[oy * w + x0..oy * w + x1];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += coef * s;
                            }
                        }
                    }
                }
            }
        }
        self.graph()
            .op(Tensor::new(&xs, y), &[self, weight], move |g, needs| {
                let mut gx = needs[0].then(|| Tensor::zeros(&xs));
                let mut gw = needs[1].then(|| Tensor::zeros(&ws));
                for b in 0..batch {
                    for c in 0..ch {
                        let off = (b * ch + c) * h * w;
                        let xc = &x.data()[off..off + h * w];
                        let gc = &g.data()[off..off + h * w];
                        let kc = &wv.data()[c * k * k..(c + 1) * k * k];
                        for ky in 0..k {
                            let (y0, y1) = geo.valid_rows(ky);
                            for kx in 0..k {
                                let (x0, x1) = geo.valid_cols(kx);
                                if x1 <= x0 {
                                    continue;
                                }
                                let mut acc = 0.0;
                                for oy in y0..y1 {
                                    let iy = oy + ky - geo.pad;
                                    let src_off = iy * w + x0 + kx - geo.pad;
                                    let gs = &gc[oy * w + x0..oy * w + x1];
                                    if gw.is_some() {
                                        acc += gs
                                            .iter()
                                            .zip(&xc[src_off..src_off + (x1 - x0)])
                                            .map(|(g, x)| g * x)
                                            .sum::<f64>();
                                    }
                                    if let Some(gx) = gx.as_mut() {
                                        let coef = kc[ky * k + kx];
                                        let dst = &mut gx.data_mut()[off + src_off..off + src_off + (x1 - x0)];
                                        for (d, s) in dst.iter_mut().zip(gs) {
                                            *d += coef * s;
                                        }
                                    }
                                }
                                if let Some(gw) = gw.as_mut() {
                                    gw.data_mut()[c * k * k + ky * k + kx] += acc;
                                }
                            }
                        }
                    }
                }
                vec![gx, gw]
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for n in 1..9 {
            for k in [1, 3, 5] {
                for stride in [1, 2] {
                    for pad in 0..=k / 2 {
                        if n + 2 * pad < k {
                            continue;
                        }
                        let out = (n + 2 * pad - k) / stride + 1;
                        for tap in 0..k {
                            let (lo, hi) = valid_range(n, out, tap, stride, pad);
                            let brute: Vec<usize> = (0..out)
                                .filter(|&o| {
                                    let i = (o * stride + tap) as isize - pad as isize;
                                    i >= 0 && (i as usize) < n
                                })
                                .collect();
                            let got: Vec<usize> = (lo..hi).collect();
                            assert_eq!(got, brute, "n={n} k={k} s={stride} p={pad} tap={tap}");
                        }
                    }
                }
            }
        }
    }
}
