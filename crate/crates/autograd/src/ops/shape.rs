//! Shape manipulation: reshape, permute, slicing, concatenation, padding,
//! resampling.

use std::rc::Rc;

use crate::graph::Var;
use crate::tensor::{axis_split, strides, Tensor};

impl<'g> Var<'g> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let y = x.as_ref().clone().reshaped(shape);
        self.graph().op(y, &[self], move |g, _| {
            vec![Some(g.clone().reshaped(&in_shape))]
        })
    }

    /// `out[i] = x[index[i]]`; the backward pass scatter-adds.
    pub(crate) fn gather(self, out_shape: &[usize], index: Rc<Vec<usize>>) -> Var<'g> {
        let x = self.value();
        let xd = x.data();
        let y = Tensor::new(out_shape, index.iter().map(|&i| xd[i]).collect());
        let in_shape = x.shape().to_vec();
        self.graph().op(y, &[self], move |g, _| {
            let mut gx = Tensor::zeros(&in_shape);
            let gxd = gx.data_mut();
            for (&i, &gv) in index.iter().zip(g.data()) {
                gxd[i] += gv;
            }
            vec![Some(gx)]
        })
    }

    /// Reorders axes: output axis `k` is input axis `perm[k]`.
    pub fn permute(self, perm: &[usize]) -> Var<'g> {
        let shape = self.shape();
        assert_eq!(perm.len(), shape.len(), "permutation rank mismatch");
        let in_strides = strides(&shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let n: usize = shape.iter().product();
        let mut index = Vec::with_capacity(n);
        let mut counter = vec![0usize; shape.len()];
        for _ in 0..n {
            index.push(
                counter
                    .iter()
                    .zip(perm)
                    .map(|(&c, &p)| c * in_strides[p])
                    .sum(),
            );
            for k in (0..counter.len()).rev() {
                counter[k] += 1;
                if counter[k] < out_shape[k] {
                    break;
                }
                counter[k] = 0;
            }
        }
        self.gather(&out_shape, Rc::new(index))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let x = self.value();
        let (outer, n, inner) = axis_split(x.shape(), axis);
        assert!(start + len <= n, "slice {start}+{len} exceeds extent {n}");
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = len;
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            y.extend_from_slice(&x.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let in_shape = x.shape().to_vec();
        self.graph()
            .op(Tensor::new(&out_shape, y), &[self], move |g, _| {
                let mut gx = Tensor::zeros(&in_shape);
                let gxd = gx.data_mut();
                for o in 0..outer {
                    gxd[(o * n + start) * inner..(o * n + start + len) * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            })
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!parts.is_empty(), "concat of nothing");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let first = values[0].shape().to_vec();
        let (outer, _, inner) = axis_split(&first, axis);
        let extents: Vec<usize> = values
            .iter()
            .map(|v| {
                let s = v.shape();
                assert_eq!(s.len(), first.len(), "concat rank mismatch");
                for (k, (&a, &b)) in s.iter().zip(&first).enumerate() {
                    assert!(k == axis || a == b, "concat extent mismatch {s:?} vs {first:?}");
                }
                s[axis]
            })
            .collect();
        let total: usize = extents.iter().sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut y = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &e) in values.iter().zip(&extents) {
                y.extend_from_slice(&v.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        parts[0]
            .graph()
            .op(Tensor::new(&out_shape, y), parts, move |g, needs| {
                let mut offset = 0;
                shapes
                    .iter()
                    .zip(&extents)
                    .zip(needs)
                    .map(|((shape, &e), &need)| {
                        let start = offset;
                        offset += e;
                        need.then(|| {
                            let mut part = Vec::with_capacity(outer * e * inner);
                            for o in 0..outer {
                                part.extend_from_slice(
                                    &g.data()[(o * total + start) * inner..(o * total + start + e) * inner],
                                );
                            }
                            Tensor::new(shape, part)
                        })
                    })
                    .collect()
            })
    }

    /// Reflect-pads the last two axes by `pad_h` rows at the bottom and
    /// `pad_w` columns at the right (edge sample not repeated).
    pub fn pad_reflect2d(self, pad_h: usize, pad_w: usize) -> Var<'g> {
        let shape = self.shape();
        let r = shape.len();
        let (h, w) = (shape[r - 2], shape[r - 1]);
        assert!(pad_h < h.max(2) && pad_w < w.max(2), "reflect pad exceeds extent");
        let (ho, wo) = (h + pad_h, w + pad_w);
        let lead: usize = shape[..r - 2].iter().product();
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
        let mut index = Vec::with_capacity(lead * ho * wo);
        for l in 0..lead {
            for y in 0..ho {
                let sy = reflect(y, h);
                for x in 0..wo {
                    index.push((l * h + sy) * w + reflect(x, w));
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[r - 2] = ho;
        out_shape[r - 1] = wo;
        self.gather(&out_shape, Rc::new(index))
    }

    /// Keeps the top-left `h` x `w` block of the last two axes.
    pub fn crop2d(self, h: usize, w: usize) -> Var<'g> {
        let r = self.shape().len();
        self.slice(r - 2, 0, h).slice(r - 1, 0, w)
    }

    /// Reverses `axis`.
    pub fn flip(self, axis: usize) -> Var<'g> {
        let shape = self.shape();
        let (outer, n, inner) = axis_split(&shape, axis);
        let mut index = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    index.push((o * n + (n - 1 - j)) * inner + i);
                }
            }
        }
        self.gather(&shape, Rc::new(index))
    }

    /// Circular shift: `out[j] = x[(j - shift) mod n]` along `axis`.
    pub fn roll(self, axis: usize, shift: isize) -> Var<'g> {
        let shape = self.shape();
        let (outer, n, inner) = axis_split(&shape, axis);
        let mut index = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            for j in 0..n {
                let src = (j as isize - shift).rem_euclid(n as isize) as usize;
                for i in 0..inner {
                    index.push((o * n + src) * inner + i);
                }
            }
        }
        self.gather(&shape, Rc::new(index))
    }

    /// Nearest-neighbour 2x upsampling of the last two axes.
    pub fn upsample_nearest2x(self) -> Var<'g> {
        let shape = self.shape();
        let r = shape.len();
        let (h, w) = (shape[r - 2], shape[r - 1]);
        let lead: usize = shape[..r - 2].iter().product();
        let mut index = Vec::with_capacity(lead * 4 * h * w);
        for l in 0..lead {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    index.push((l * h + y / 2) * w + x / 2);
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[r - 2] = 2 * h;
        out_shape[r - 1] = 2 * w;
        self.gather(&out_shape, Rc::new(index))
    }

    /// Applies the constant matrix `m` (`[out, in]`) along `axis`.
    pub fn linear_map_axis(self, m: Rc<Tensor>, axis: usize) -> Var<'g> {
        let x = self.value();
        let (outer, n, inner) = axis_split(x.shape(), axis);
        assert_eq!(m.ndim(), 2);
        let (mo, mi) = (m.shape()[0], m.shape()[1]);
        assert_eq!(mi, n, "map input extent {mi} does not match axis extent {n}");
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = mo;
        let apply = move |src: &[f64], mat: &Tensor, transpose: bool, rows: usize, cols: usize| {
            // rows/cols describe the source lane length and the destination lane length.
            let md = mat.data();
            let mut dst = vec![0.0; outer * cols * inner];
            for o in 0..outer {
                for r in 0..rows {
                    let s = &src[(o * rows + r) * inner..(o * rows + r + 1) * inner];
                    for c in 0..cols {
                        let coef = if transpose { md[r * cols + c] } else { md[c * rows + r] };
                        if coef == 0.0 {
                            continue;
                        }
                        let d = &mut dst[(o * cols + c) * inner..(o * cols + c + 1) * inner];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += coef * sv;
                        }
                    }
                }
            }
            dst
        };
        let y = apply(x.data(), &m, false, n, mo);
        let in_shape = x.shape().to_vec();
        self.graph()
            .op(Tensor::new(&out_shape, y), &[self], move |g, _| {
                vec![Some(Tensor::new(&in_shape, apply(g.data(), &m, true, mo, n)))]
            })
    }

    /// Bilinear resize of the last two axes (half-pixel centres, edge clamped).
    pub fn resize_bilinear(self, h: usize, w: usize) -> Var<'g> {
        let shape = self.shape();
        let r = shape.len();
        let my = Rc::new(bilinear_matrix(shape[r - 2], h));
        let mx = Rc::new(bilinear_matrix(shape[r - 1], w));
        self.linear_map_axis(my, r - 2).linear_map_axis(mx, r - 1)
    }
}

/// Interpolation matrix `[dst, src]` for 1-D linear resampling with
/// half-pixel centres.
pub fn bilinear_matrix(src: usize, dst: usize) -> Tensor {
    let mut m = Tensor::zeros(&[dst, src]);
    let scale = src as f64 / dst as f64;
    for d in 0..dst {
        let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(src - 1);
        let t = pos - i0 as f64;
        let md = m.data_mut();
        md[d * src + i0] += 1.0 - t;
        md[d * src + i1] += t;
    }
    m
}
