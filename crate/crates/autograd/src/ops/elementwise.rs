use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::graph::Var;
use crate::tensor::{axis_split, Tensor};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Scalar helpers shared with non-differentiable code paths.
pub mod scalar {
    pub fn sigmoid(x: f64) -> f64 {
        super::sigmoid(x)
    }

    pub fn gelu(x: f64) -> f64 {
        super::gelu(x)
    }
}

impl<'g> Var<'g> {
    fn unary(
        self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'g> {
        let x = self.value();
        let y = x.map(f);
        let out = std::rc::Rc::new(y.clone());
        self.graph().op(y, &[self], move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(out.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape(), data))]
        })
    }

    pub fn add(self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let y = self.value().zip_map(&other.value(), |a, b| a + b);
        self.graph()
            .op(y, &[self, other], |g, _| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let y = self.value().zip_map(&other.value(), |a, b| a - b);
        self.graph().op(y, &[self, other], |g, _| {
            vec![Some(g.clone()), Some(g.scaled(-1.0))]
        })
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        let y = a.zip_map(&b, |a, b| a * b);
        self.graph().op(y, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| g.zip_map(&b, |g, b| g * b)),
                needs[1].then(|| g.zip_map(&a, |g, a| g * a)),
            ]
        })
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let y = self.value().scaled(c);
        self.graph().op(y, &[self], move |g, _| vec![Some(g.scaled(c))])
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        let y = self.value().map(|v| v + c);
        self.graph().op(y, &[self], |g, _| vec![Some(g.clone())])
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn gelu(self) -> Var<'g> {
        self.unary(gelu, |x, _| gelu_grad(x))
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    /// `|x|` with subgradient 0 at the kink.
    pub fn abs(self) -> Var<'g> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `max(0, x)` with subgradient 0 at the kink.
    pub fn relu(self) -> Var<'g> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Adds `v` (length `shape[axis]`) broadcast along every other axis.
    pub fn add_axis(self, v: Var<'g>, axis: usize) -> Var<'g> {
        self.broadcast_axis(v, axis, false)
    }

    /// Multiplies by `v` (length `shape[axis]`) broadcast along every other axis.
    pub fn mul_axis(self, v: Var<'g>, axis: usize) -> Var<'g> {
        self.broadcast_axis(v, axis, true)
    }

    fn broadcast_axis(self, v: Var<'g>, axis: usize, multiply: bool) -> Var<'g> {
        self.same_graph(&v);
        let x = self.value();
        let vv = v.value();
        let (outer, n, inner) = axis_split(x.shape(), axis);
        assert_eq!(vv.len(), n, "broadcast vector length mismatch on axis {axis}");
        let mut y = x.as_ref().clone();
        {
            let yd = y.data_mut();
            for o in 0..outer {
                for j in 0..n {
                    let c = vv.data()[j];
                    let row = &mut yd[(o * n + j) * inner..(o * n + j + 1) * inner];
                    if multiply {
                        row.iter_mut().for_each(|e| *e *= c);
                    } else {
                        row.iter_mut().for_each(|e| *e += c);
                    }
                }
            }
        }
        self.graph().op(y, &[self, v], move |g, needs| {
            let gd = g.data();
            let gx = needs[0].then(|| {
                if multiply {
                    let mut out = g.clone();
                    let od = out.data_mut();
                    for o in 0..outer {
                        for j in 0..n {
                            let c = vv.data()[j];
                            od[(o * n + j) * inner..(o * n + j + 1) * inner]
                                .iter_mut()
                                .for_each(|e| *e *= c);
                        }
                    }
                    out
                } else {
                    g.clone()
                }
            });
            let gv = needs[1].then(|| {
                let mut acc = vec![0.0; n];
                for o in 0..outer {
                    for (j, a) in acc.iter_mut().enumerate() {
                        let base = (o * n + j) * inner;
                        let gs = &gd[base..base + inner];
                        *a += if multiply {
                            gs.iter().zip(&x.data()[base..base + inner]).map(|(g, x)| g * x).sum::<f64>()
                        } else {
                            gs.iter().sum::<f64>()
                        };
                    }
                }
                Tensor::new(vv.shape(), acc)
            });
            vec![gx, gv]
        })
    }
}
