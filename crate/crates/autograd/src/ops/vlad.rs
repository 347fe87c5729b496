use crate::graph::Var;
use crate::tensor::Tensor;

impl<'g> Var<'g> {
    /// Soft-assigned residual accumulation.
    ///
    /// `self` holds assignments `[B, N, K]`, `features` is `[B, N, C]` and
    /// `centers` is `[K, C]`. Returns `[B, K, C]` with
    /// `out[b, k] = sum_n a[b, n, k] * (x[b, n] - c[k])`.
    pub fn residual_aggregate(self, features: Var<'g>, centers: Var<'g>) -> Var<'g> {
        self.same_graph(&features);
        self.same_graph(&centers);
        let a = self.value();
        let x = features.value();
        let c = centers.value();
        let (b, n, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        assert_eq!(x.shape()[..2], [b, n], "assignment/feature mismatch");
        let ch = x.shape()[2];
        assert_eq!(c.shape(), [k, ch], "centers must be [K, C]");
        let (ad, xd, cd) = (a.data(), x.data(), c.data());
        let mut y = vec![0.0; b * k * ch];
        for bi in 0..b {
            for ni in 0..n {
                let xr = &xd[(bi * n + ni) * ch..][..ch];
                for ki in 0..k {
                    let w = ad[(bi * n + ni) * k + ki];
                    let cr = &cd[ki * ch..][..ch];
                    let yr = &mut y[(bi * k + ki) * ch..][..ch];
                    for j in 0..ch {
                        yr[j] += w * (xr[j] - cr[j]);
                    }
                }
            }
        }
        self.graph().op(
            Tensor::new(&[b, k, ch], y),
            &[self, features, centers],
            move |g, needs| {
                let (ad, xd, cd, gd) = (a.data(), x.data(), c.data(), g.data());
                let mut ga = needs[0].then(|| vec![0.0; b * n * k]);
                let mut gx = needs[1].then(|| vec![0.0; b * n * ch]);
                let mut gc = needs[2].then(|| vec![0.0; k * ch]);
                for bi in 0..b {
                    for ni in 0..n {
                        let xr = &xd[(bi * n + ni) * ch..][..ch];
                        for ki in 0..k {
                            let w = ad[(bi * n + ni) * k + ki];
                            let cr = &cd[ki * ch..][..ch];
                            let gr = &gd[(bi * k + ki) * ch..][..ch];
                            if let Some(ga) = ga.as_mut() {
                                ga[(bi * n + ni) * k + ki] +=
                                    (0..ch).map(|j| gr[j] * (xr[j] - cr[j])).sum::<f64>();
                            }
                            if let Some(gx) = gx.as_mut() {
                                let dst = &mut gx[(bi * n + ni) * ch..][..ch];
                                for j in 0..ch {
                                    dst[j] += w * gr[j];
                                }
                            }
                            if let Some(gc) = gc.as_mut() {
                                let dst = &mut gc[ki * ch..][..ch];
                                for j in 0..ch {
                                    dst[j] -= w * gr[j];
                                }
                            }
                        }
                    }
                }
                vec![
                    ga.map(|d| Tensor::new(&[b, n, k], d)),
                    gx.map(|d| Tensor::new(&[b, n, ch], d)),
                    gc.map(|d| Tensor::new(&[k, ch], d)),
                ]
            },
        )
    }
}
