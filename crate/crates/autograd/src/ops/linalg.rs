use crate::graph::Var;
use crate::tensor::Tensor;

/// `c (+)= op(a) * op(b)` for row-major storage, where `op` optionally
/// transposes. `m x k` times `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices were length-checked above against the strides used.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'g> Var<'g> {
    /// `[..., k] x [k, n] -> [..., n]`.
    pub fn matmul(self, w: Var<'g>) -> Var<'g> {
        self.same_graph(&w);
        let x = self.value();
        let wv = w.value();
        assert_eq!(wv.ndim(), 2, "matmul weight must be 2-D");
        let (k, n) = (wv.shape()[0], wv.shape()[1]);
        let xs = x.shape().to_vec();
        assert_eq!(*xs.last().unwrap(), k, "matmul inner dimension mismatch");
        let m = x.len() / k;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = n;
        let mut y = vec![0.0; m * n];
        gemm(m, k, n, x.data(), false, wv.data(), false, &mut y, false);
        self.graph()
            .op(Tensor::new(&out_shape, y), &[self, w], move |g, needs| {
                let gx = needs[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, wv.data(), true, &mut d, false);
                    Tensor::new(&xs, d)
                });
                let gw = needs[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, x.data(), true, g.data(), false, &mut d, false);
                    Tensor::new(&[k, n], d)
                });
                vec![gx, gw]
            })
    }

    /// Batched product of `[B, m, k]` and `[B, k, n]`; the flags transpose
    /// the stored last two axes of either operand first.
    pub fn bmm(self, other: Var<'g>, a_t: bool, b_t: bool) -> Var<'g> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        assert_eq!(a.ndim(), 3);
        assert_eq!(b.ndim(), 3);
        let batch = a.shape()[0];
        assert_eq!(b.shape()[0], batch, "bmm batch mismatch");
        let (m, k) = if a_t {
            (a.shape()[2], a.shape()[1])
        } else {
            (a.shape()[1], a.shape()[2])
        };
        let (kb, n) = if b_t {
            (b.shape()[2], b.shape()[1])
        } else {
            (b.shape()[1], b.shape()[2])
        };
        assert_eq!(k, kb, "bmm inner dimension mismatch");
        let mut y = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                a_t,
                &b.data()[i * k * n..(i + 1) * k * n],
                b_t,
                &mut y[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let (ash, bsh) = (a.shape().to_vec(), b.shape().to_vec());
        self.graph()
            .op(Tensor::new(&[batch, m, n], y), &[self, other], move |g, needs| {
                let gd = g.data();
                // dA = g * op(B)^T, laid out like the stored A.
                let ga = needs[0].then(|| {
                    let mut d = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let bi = &b.data()[i * k * n..(i + 1) * k * n];
                        let di = &mut d[i * m * k..(i + 1) * m * k];
                        if a_t {
                            // stored A is k x m: dA_s = op(B) * g^T
                            gemm(k, n, m, bi, b_t, gi, true, di, false);
                        } else {
                            gemm(m, n, k, gi, false, bi, !b_t, di, false);
                        }
                    }
                    Tensor::new(&ash, d)
                });
                let gb = needs[1].then(|| {
                    let mut d = vec![0.0; batch * k * n];
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let ai = &a.data()[i * m * k..(i + 1) * m * k];
                        let di = &mut d[i * k * n..(i + 1) * k * n];
                        if b_t {
                            // stored B is n x k: dB_s = g^T * op(A)
                            gemm(n, m, k, gi, true, ai, a_t, di, false);
                        } else {
                            gemm(k, m, n, ai, !a_t, gi, false, di, false);
                        }
                    }
                    Tensor::new(&bsh, d)
                });
                vec![ga, gb]
            })
    }
}
