//! Normalizations along one axis: layer norm, L2 normalization and softmax.

use crate::graph::Var;
use crate::tensor::{axis_split, Tensor};

/// Applies `f` to every lane along `axis`. A lane is gathered into a
/// contiguous buffer, transformed in place, and scattered back.
fn map_lanes(x: &Tensor, axis: usize, mut f: impl FnMut(&mut [f64])) -> Tensor {
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let mut out = x.clone();
    let od = out.data_mut();
    let mut lane = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for j in 0..n {
                lane[j] = od[(o * n + j) * inner + i];
            }
            f(&mut lane);
            for j in 0..n {
                od[(o * n + j) * inner + i] = lane[j];
            }
        }
    }
    out
}

/// Like [`map_lanes`] over two aligned tensors; the result is written into
/// the first lane buffer.
fn map_lanes2(
    a: &Tensor,
    b: &Tensor,
    axis: usize,
    mut f: impl FnMut(&mut [f64], &[f64]),
) -> Tensor {
    assert_eq!(a.shape(), b.shape());
    let (outer, n, inner) = axis_split(a.shape(), axis);
    let mut out = a.clone();
    let od = out.data_mut();
    let bd = b.data();
    let mut la = vec![0.0; n];
    let mut lb = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for j in 0..n {
                la[j] = od[(o * n + j) * inner + i];
                lb[j] = bd[(o * n + j) * inner + i];
            }
            f(&mut la, &lb);
            for j in 0..n {
                od[(o * n + j) * inner + i] = la[j];
            }
        }
    }
    out
}

fn lane_norm_stats(lane: &[f64], eps: f64) -> (f64, f64) {
    let n = lane.len() as f64;
    let mean = lane.iter().sum::<f64>() / n;
    let var = lane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, (var + eps).sqrt())
}

impl<'g> Var<'g> {
    /// Standardizes every lane along `axis` to zero mean and unit variance
    /// (no affine part).
    pub fn layer_norm(self, axis: usize, eps: f64) -> Var<'g> {
        let x = self.value();
        let y = map_lanes(&x, axis, |lane| {
            let (mean, std) = lane_norm_stats(lane, eps);
            lane.iter_mut().for_each(|v| *v = (*v - mean) / std);
        });
        let y_saved = std::rc::Rc::new(y.clone());
        self.graph().op(y, &[self], move |g, _| {
            // Lane statistics are recomputed from the input; `y` carries the
            // normalized values.
            let mut std_per_lane = Vec::new();
            map_lanes(&x, axis, |lane| {
                std_per_lane.push(lane_norm_stats(lane, eps).1);
            });
            let mut k = 0;
            let gy = map_lanes2(g, &y_saved, axis, |gl, yl| {
                let n = gl.len() as f64;
                let std = std_per_lane[k];
                k += 1;
                let mg = gl.iter().sum::<f64>() / n;
                let mgy = gl.iter().zip(yl).map(|(g, y)| g * y).sum::<f64>() / n;
                for (gv, &yv) in gl.iter_mut().zip(yl) {
                    *gv = (*gv - mg - yv * mgy) / std;
                }
            });
            vec![Some(gy)]
        })
    }

    /// `x / sqrt(sum(x^2) + eps)` along `axis`.
    pub fn l2_normalize(self, axis: usize, eps: f64) -> Var<'g> {
        let x = self.value();
        let y = map_lanes(&x, axis, |lane| {
            let s = (lane.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            lane.iter_mut().for_each(|v| *v /= s);
        });
        let y_saved = std::rc::Rc::new(y.clone());
        self.graph().op(y, &[self], move |g, _| {
            let mut norms = Vec::new();
            map_lanes(&x, axis, |lane| {
                norms.push((lane.iter().map(|v| v * v).sum::<f64>() + eps).sqrt());
            });
            let mut k = 0;
            let gx = map_lanes2(g, &y_saved, axis, |gl, yl| {
                let s = norms[k];
                k += 1;
                let dot = gl.iter().zip(yl).map(|(g, y)| g * y).sum::<f64>();
                for (gv, &yv) in gl.iter_mut().zip(yl) {
                    *gv = (*gv - yv * dot) / s;
                }
            });
            vec![Some(gx)]
        })
    }

    pub fn softmax(self, axis: usize) -> Var<'g> {
        let x = self.value();
        let y = map_lanes(&x, axis, softmax_lane);
        let y_saved = std::rc::Rc::new(y.clone());
        self.graph().op(y, &[self], move |g, _| {
            let gx = map_lanes2(g, &y_saved, axis, |gl, yl| {
                let dot = gl.iter().zip(yl).map(|(g, y)| g * y).sum::<f64>();
                for (gv, &yv) in gl.iter_mut().zip(yl) {
                    *gv = yv * (*gv - dot);
                }
            });
            vec![Some(gx)]
        })
    }

    pub fn log_softmax(self, axis: usize) -> Var<'g> {
        let x = self.value();
        let y = map_lanes(&x, axis, |lane| {
            let m = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + lane.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lane.iter_mut().for_each(|v| *v -= lse);
        });
        let y_saved = std::rc::Rc::new(y.clone());
        self.graph().op(y, &[self], move |g, _| {
            let gx = map_lanes2(g, &y_saved, axis, |gl, yl| {
                let total = gl.iter().sum::<f64>();
                for (gv, &yv) in gl.iter_mut().zip(yl) {
                    *gv -= yv.exp() * total;
                }
            });
            vec![Some(gx)]
        })
    }
}

pub(crate) fn softmax_lane(lane: &mut [f64]) {
    let m = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in lane.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    lane.iter_mut().for_each(|v| *v /= total);
}
