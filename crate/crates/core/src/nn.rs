//! Parameter initialisation and small layer helpers shared by both networks.
//!
//! Parameters live in a flat [`Params`] map under dotted names; layers look
//! them up through a [`Binder`] by prefix.

use autograd::{Binder, Params, Tensor, Var};
use rand::Rng;

pub const LN_EPS: f64 = 1e-5;

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Registers parameters with fan-in scaled Gaussian weights and zero biases.
pub struct Init<'a, R: Rng> {
    pub params: &'a mut Params,
    pub rng: &'a mut R,
}

impl<'a, R: Rng> Init<'a, R> {
    pub fn new(params: &'a mut Params, rng: &'a mut R) -> Self {
        Self { params, rng }
    }

    pub fn tensor(&mut self, name: String, t: Tensor) {
        self.params.insert(name, t);
    }

    pub fn zeros(&mut self, name: String, shape: &[usize]) {
        self.params.insert(name, Tensor::zeros(shape));
    }

    pub fn ones(&mut self, name: String, shape: &[usize]) {
        self.params.insert(name, Tensor::full(shape, 1.0));
    }

    pub fn normal(&mut self, name: String, shape: &[usize], std: f64) {
        let t = Tensor::randn(shape, std, &mut *self.rng);
        self.params.insert(name, t);
    }

    /// `[cout, cin, k, k]` weight as `prefix.w`, optional `[cout]` bias as
    /// `prefix.b`.
    pub fn conv(&mut self, prefix: &str, cout: usize, cin: usize, k: usize, bias: bool) {
        let std = (1.0 / (cin * k * k) as f64).sqrt();
        self.normal(join(prefix, "w"), &[cout, cin, k, k], std);
        if bias {
            self.zeros(join(prefix, "b"), &[cout]);
        }
    }

    /// Depthwise `[c, 1, k, k]` weight plus bias.
    pub fn depthwise(&mut self, prefix: &str, c: usize, k: usize) {
        let std = (1.0 / (k * k) as f64).sqrt();
        self.normal(join(prefix, "w"), &[c, 1, k, k], std);
        self.zeros(join(prefix, "b"), &[c]);
    }

    /// `[fin, fout]` weight (applied as `x W`), optional `[fout]` bias.
    pub fn linear(&mut self, prefix: &str, fin: usize, fout: usize, bias: bool) {
        let std = (1.0 / fin as f64).sqrt();
        self.normal(join(prefix, "w"), &[fin, fout], std);
        if bias {
            self.zeros(join(prefix, "b"), &[fout]);
        }
    }

    pub fn layer_norm(&mut self, prefix: &str, c: usize) {
        self.ones(join(prefix, "g"), &[c]);
        self.zeros(join(prefix, "b"), &[c]);
    }

    /// Pointwise expand (`ratio * c`), GELU, pointwise project back.
    pub fn ffn(&mut self, prefix: &str, c: usize, ratio: usize) {
        self.conv(&join(prefix, "fc1"), ratio * c, c, 1, true);
        self.conv(&join(prefix, "fc2"), c, ratio * c, 1, true);
    }
}

/// Convolution with "same" padding for odd kernels at stride 1; bias is
/// applied when `prefix.b` exists.
pub fn conv<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str, stride: usize) -> Var<'g> {
    let w = b.get(&join(prefix, "w"));
    let k = w.shape()[2];
    let y = x.conv2d(w, stride, k / 2);
    let bias = join(prefix, "b");
    if b.params().contains(&bias) {
        y.add_axis(b.get(&bias), 1)
    } else {
        y
    }
}

pub fn depthwise<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    x.depthwise_conv2d(b.get(&join(prefix, "w")))
        .add_axis(b.get(&join(prefix, "b")), 1)
}

/// `x W + b` over the last axis.
pub fn linear<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let y = x.matmul(b.get(&join(prefix, "w")));
    let bias = join(prefix, "b");
    if b.params().contains(&bias) {
        let last = y.shape().len() - 1;
        y.add_axis(b.get(&bias), last)
    } else {
        y
    }
}

/// Affine layer norm over `axis`.
pub fn layer_norm<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str, axis: usize) -> Var<'g> {
    x.layer_norm(axis, LN_EPS)
        .mul_axis(b.get(&join(prefix, "g")), axis)
        .add_axis(b.get(&join(prefix, "b")), axis)
}

pub fn ffn<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let h = conv(b, x, &join(prefix, "fc1"), 1).gelu();
    conv(b, h, &join(prefix, "fc2"), 1)
}

/// Rounds `n` up to a multiple of `m`.
pub fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

/// Reflect-pads the bottom/right of `[B, C, H, W]` to multiples of
/// `(mh, mw)`. Returns the padded tensor and the original size.
pub fn pad_to_multiple<'g>(x: Var<'g>, mh: usize, mw: usize) -> (Var<'g>, (usize, usize)) {
    let s = x.shape();
    let (h, w) = (s[2], s[3]);
    let (ph, pw) = (round_up(h, mh) - h, round_up(w, mw) - w);
    if ph == 0 && pw == 0 {
        (x, (h, w))
    } else {
        (x.pad_reflect2d(ph, pw), (h, w))
    }
}

/// `[B, C, H, W]` to `[B * nh * nw, wh * ww, C]` token windows.
pub fn window_partition<'g>(x: Var<'g>, wh: usize, ww: usize) -> Var<'g> {
    let s = x.shape();
    let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(h % wh == 0 && w % ww == 0, "window {wh}x{ww} does not tile {h}x{w}");
    let (nh, nw) = (h / wh, w / ww);
    x.reshape(&[bsz, c, nh, wh, nw, ww])
        .permute(&[0, 2, 4, 3, 5, 1])
        .reshape(&[bsz * nh * nw, wh * ww, c])
}

/// Inverse of [`window_partition`].
pub fn window_merge<'g>(t: Var<'g>, bsz: usize, h: usize, w: usize, wh: usize, ww: usize) -> Var<'g> {
    let c = t.shape()[2];
    let (nh, nw) = (h / wh, w / ww);
    t.reshape(&[bsz, nh, nw, wh, ww, c])
        .permute(&[0, 5, 1, 3, 2, 4])
        .reshape(&[bsz, c, h, w])
}

/// Multi-head self-attention over token groups `[G, T, C]` with bias-free
/// projections `prefix.{q,k,v,o}` (`[C, C]`). Returns the output and the
/// attention probabilities `[G * heads, T, T]`.
pub fn self_attention<'g>(
    b: &Binder<'g>,
    tokens: Var<'g>,
    prefix: &str,
    heads: usize,
) -> (Var<'g>, Var<'g>) {
    let s = tokens.shape();
    let (g, t, c) = (s[0], s[1], s[2]);
    assert!(c % heads == 0, "{c} channels not divisible by {heads} heads");
    let dh = c / heads;
    let split = |v: Var<'g>| {
        v.reshape(&[g, t, heads, dh])
            .permute(&[0, 2, 1, 3])
            .reshape(&[g * heads, t, dh])
    };
    let q = split(tokens.matmul(b.get(&join(prefix, "q"))));
    let k = split(tokens.matmul(b.get(&join(prefix, "k"))));
    let v = split(tokens.matmul(b.get(&join(prefix, "v"))));
    let attn = q.bmm(k, false, true).scale(1.0 / (dh as f64).sqrt()).softmax(2);
    let out = attn
        .bmm(v, false, false)
        .reshape(&[g, heads, t, dh])
        .permute(&[0, 2, 1, 3])
        .reshape(&[g, t, c]);
    (out.matmul(b.get(&join(prefix, "o"))), attn)
}

pub fn init_attention<R: Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize) {
    for name in ["q", "k", "v", "o"] {
        init.normal(join(prefix, name), &[c, c], (1.0 / c as f64).sqrt());
    }
}
