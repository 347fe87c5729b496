use crate::graph::Var;
use crate::tensor::{axis_split, Tensor};

impl<'g> Var<'g> {
    pub fn sum(self) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.graph().op(Tensor::scalar(x.sum()), &[self], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(self, axis: usize) -> Var<'g> {
        let x = self.value();
        let (outer, n, inner) = axis_split(x.shape(), axis);
        let mut out_shape = x.shape().to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut y = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &x.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, s) in y[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let in_shape = x.shape().to_vec();
        self.graph()
            .op(Tensor::new(&out_shape, y), &[self], move |g, _| {
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let gs = &g.data()[o * inner..(o + 1) * inner];
                    for j in 0..n {
                        gx[(o * n + j) * inner..(o * n + j + 1) * inner].copy_from_slice(gs);
                    }
                }
                vec![Some(Tensor::new(&in_shape, gx))]
            })
    }

    pub fn mean_axis(self, axis: usize) -> Var<'g> {
        let n = self.value().shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }
}
