//! Single-level orthonormal 2-D Haar transform.
//!
//! For a 2x2 block `[[a, b], [c, d]]` (rows top to bottom):
//!
//! * `LL = (a + b + c + d) / 2`
//! * `LH = (a + b - c - d) / 2` (low-pass along width, high-pass along height)
//! * `HL = (a - b + c - d) / 2` (high-pass along width)
//! * `HH = (a - b - c + d) / 2`
//!
//! Sub-bands are stacked band-major along channels: `[LL, LH, HL, HH]`,
//! each holding all `C` input channels. The transform is orthogonal, so its
//! inverse is its transpose.

use crate::graph::Var;
use crate::tensor::Tensor;

pub const BANDS: [&str; 4] = ["LL", "LH", "HL", "HH"];

const SIGNS: [[f64; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0],
];

pub fn haar_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "Haar transform needs even extents, got {h}x{w}");
    let (hh, hw) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, 4 * c, hh, hw]);
    let xd = x.data();
    let od = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let src = &xd[(bi * c + ci) * h * w..][..h * w];
            for y in 0..hh {
                for xx in 0..hw {
                    let p = [
                        src[2 * y * w + 2 * xx],
                        src[2 * y * w + 2 * xx + 1],
                        src[(2 * y + 1) * w + 2 * xx],
                        src[(2 * y + 1) * w + 2 * xx + 1],
                    ];
                    for (band, signs) in SIGNS.iter().enumerate() {
                        let v: f64 = signs.iter().zip(&p).map(|(s, v)| s * v).sum();
                        od[((bi * 4 * c + band * c + ci) * hh + y) * hw + xx] = 0.5 * v;
                    }
                }
            }
        }
    }
    out
}

pub fn haar_inverse(y: &Tensor) -> Tensor {
    let s = y.shape();
    assert!(s[1] % 4 == 0, "inverse Haar needs 4 stacked bands");
    let (b, c, hh, hw) = (s[0], s[1] / 4, s[2], s[3]);
    let (h, w) = (2 * hh, 2 * hw);
    let mut out = Tensor::zeros(&[b, c, h, w]);
    let yd = y.data();
    let od = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let dst = &mut od[(bi * c + ci) * h * w..][..h * w];
            for r in 0..hh {
                for col in 0..hw {
                    let coef: [f64; 4] = std::array::from_fn(|band| {
                        yd[((bi * 4 * c + band * c + ci) * hh + r) * hw + col]
                    });
                    let pos = [
                        2 * r * w + 2 * col,
                        2 * r * w + 2 * col + 1,
                        (2 * r + 1) * w + 2 * col,
                        (2 * r + 1) * w + 2 * col + 1,
                    ];
                    for (k, &p) in pos.iter().enumerate() {
                        let v: f64 = (0..4).map(|band| SIGNS[band][k] * coef[band]).sum();
                        dst[p] = 0.5 * v;
                    }
                }
            }
        }
    }
    out
}

impl<'g> Var<'g> {
    /// `[B, C, H, W] -> [B, 4C, H/2, W/2]` (bands LL, LH, HL, HH).
    pub fn dwt2(self) -> Var<'g> {
        let y = haar_forward(&self.value());
        self.graph().op(y, &[self], |g, _| vec![Some(haar_inverse(g))])
    }

    /// `[B, 4C, h, w] -> [B, C, 2h, 2w]`.
    pub fn idwt2(self) -> Var<'g> {
        let y = haar_inverse(&self.value());
        self.graph().op(y, &[self], |g, _| vec![Some(haar_forward(g))])
    }
}
