//! Restoration network: a three-stage convolutional U-Net whose blocks mix
//! features in the frequency domain (gated spectra) and the spatial domain
//! (depthwise/pointwise convolutions), with a learned multi-scale prior
//! injected at the bottleneck.

use autograd::{Binder, Params, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, join, Init};

pub const STAGES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdrConfig {
    pub base_channels: usize,
    /// Depthwise kernel size per encoder stage, shallow to deep.
    pub kernel_sizes: Vec<usize>,
    /// Side lengths of the semantic parameter maps.
    pub sag_scales: Vec<usize>,
    /// Parameter maps per scale.
    pub sag_params: usize,
    pub ffn_ratio: usize,
    pub enable_ddm: bool,
    pub enable_sag: bool,
}

impl Default for LdrConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            kernel_sizes: vec![3, 5, 7],
            sag_scales: vec![1, 2, 4],
            sag_params: 4,
            ffn_ratio: 2,
            enable_ddm: true,
            enable_sag: true,
        }
    }
}

impl LdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::config("ldr.base_channels must be positive"));
        }
        if self.kernel_sizes.len() != STAGES {
            return Err(Error::config(format!("ldr.kernel_sizes needs {STAGES} entries")));
        }
        if self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::config("ldr.kernel_sizes must be odd"));
        }
        if self.enable_sag && (self.sag_scales.is_empty() || self.sag_scales.contains(&0)) {
            return Err(Error::config("ldr.sag_scales must be non-empty and positive"));
        }
        if self.enable_sag && self.sag_params == 0 {
            return Err(Error::config("ldr.sag_params must be positive"));
        }
        if self.ffn_ratio == 0 {
            return Err(Error::config("ldr.ffn_ratio must be positive"));
        }
        Ok(())
    }

    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }
}

// ---- blocks -------------------------------------------------------------

/// Gate bias at init; sigmoid(-4) ~ 0.018 keeps the spectrum branch small.
pub const GATE_BIAS_INIT: f64 = -4.0;

pub fn init_fmx<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize) {
    init.conv(&join(prefix, "gate"), 2 * c, 2 * c, 1, true);
    init.params.set(&join(prefix, "gate.b"), autograd::Tensor::full(&[2 * c], GATE_BIAS_INIT));
}

/// Gated spectrum without the residual: `IFFT(FFT(x) * sigmoid(conv(FFT(x))))`.
pub fn fmx_branch<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let spec = x.fft2();
    let gate = nn::conv(b, spec, &join(prefix, "gate"), 1).sigmoid();
    spec.mul(gate).ifft2_real()
}

pub fn fmx<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    x.add(fmx_branch(b, x, prefix))
}

pub fn init_smx<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize, k: usize) {
    for layer in ["l1", "l2"] {
        let p = join(prefix, layer);
        init.depthwise(&join(&p, "dw"), c, k);
        // Zero pointwise weights make each layer start as the identity.
        init.zeros(join(&p, "pw.w"), &[c, c, 1, 1]);
        init.zeros(join(&p, "pw.b"), &[c]);
    }
}

/// Two residual layers `x + GELU(pw(GELU(dw(x))))`.
pub fn smx<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let mut h = x;
    for layer in ["l1", "l2"] {
        let p = join(prefix, layer);
        let y = nn::depthwise(b, h, &join(&p, "dw")).gelu();
        h = h.add(nn::conv(b, y, &join(&p, "pw"), 1).gelu());
    }
    h
}

pub fn init_ddm<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize, k: usize, ffn_ratio: usize) {
    init.layer_norm(&join(prefix, "ln1"), c);
    init_fmx(init, &join(prefix, "fmx1"), c);
    init_smx(init, &join(prefix, "smx1"), c, k);
    init_fmx(init, &join(prefix, "fmx2"), c);
    init_smx(init, &join(prefix, "smx2"), c, k);
    init.layer_norm(&join(prefix, "ln2"), c);
    init.ffn(&join(prefix, "ffn"), c, ffn_ratio);
    init.params.set(&join(prefix, "ffn.fc2.w"), autograd::Tensor::zeros(&[c, ffn_ratio * c, 1, 1]));
}

/// Dual-domain mixer. Each step adds exactly one residual:
/// `F1 = F0 + fmx'(LN F0)`, `F2 = smx(F1)`, `F3 = fmx(F2)`, `F4 = smx(F3)`,
/// `out = F4 + FFN(LN F4)`, where `fmx'` is the gated branch alone and the
/// mixers carry their own skip connections.
pub fn ddm<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let f1 = x.add(fmx_branch(b, nn::layer_norm(b, x, &join(prefix, "ln1"), 1), &join(prefix, "fmx1")));
    let f2 = smx(b, f1, &join(prefix, "smx1"));
    let f3 = fmx(b, f2, &join(prefix, "fmx2"));
    let f4 = smx(b, f3, &join(prefix, "smx2"));
    let n = nn::layer_norm(b, f4, &join(prefix, "ln2"), 1);
    f4.add(nn::ffn(b, n, &join(prefix, "ffn")))
}

pub fn init_sag<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize, scales: &[usize], n: usize) {
    for &s in scales {
        let p = join(prefix, &format!("s{s}"));
        init.normal(join(&p, "maps"), &[n, c * s * s], 0.1);
        init.linear(&join(&p, "fc"), c, n, true);
    }
    init.conv(&join(prefix, "conv"), c, c, 3, true);
}

/// Semantic-aware generator. Returns the generated map `[B, C, H, W]` and
/// the per-scale mixing weights (`[B, N]` each, rows sum to one).
pub fn sag<'g>(
    b: &Binder<'g>,
    x: Var<'g>,
    prefix: &str,
    scales: &[usize],
) -> Result<(Var<'g>, Vec<Var<'g>>)> {
    let s = x.shape();
    let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);
    if let Some(&bad) = scales.iter().find(|&&sc| sc > h || sc > w) {
        return Err(Error::config(format!("SAG scale {bad} exceeds feature size {h}x{w}")));
    }
    let e = x.mean_axis(3).mean_axis(2);
    let mut acc: Option<Var<'g>> = None;
    let mut weights = Vec::with_capacity(scales.len());
    for &sc in scales {
        let p = join(prefix, &format!("s{sc}"));
        let wts = nn::linear(b, e, &join(&p, "fc")).softmax(1);
        let map = wts
            .matmul(b.get(&join(&p, "maps")))
            .reshape(&[bsz, c, sc, sc])
            .resize_bilinear(h, w);
        acc = Some(match acc {
            Some(a) => a.add(map),
            None => map,
        });
        weights.push(wts);
    }
    let sum = acc.ok_or_else(|| Error::config("SAG needs at least one scale"))?;
    Ok((nn::conv(b, sum, &join(prefix, "conv"), 1), weights))
}

// ---- network ------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LdrNet {
    pub config: LdrConfig,
    pub params: Params,
}

/// Intermediate tensors exposed for inspection.
pub struct LdrTrace<'g> {
    pub output: Var<'g>,
    pub bottleneck: Var<'g>,
}

impl LdrNet {
    pub fn new(config: LdrConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut init = Init::new(&mut params, &mut rng);
        let c = config.base_channels;
        init.conv("in", c, 2, 3, true);
        for k in 0..STAGES {
            let ck = config.channels(k);
            if config.enable_ddm {
                init_ddm(&mut init, &format!("enc{k}.ddm"), ck, config.kernel_sizes[k], config.ffn_ratio);
            }
            init.conv(&format!("enc{k}.down"), 2 * ck, ck, 3, true);
        }
        let cd = config.channels(STAGES);
        if config.enable_ddm {
            init_ddm(&mut init, "mid.ddm", cd, config.kernel_sizes[STAGES - 1], config.ffn_ratio);
        }
        if config.enable_sag {
            init_sag(&mut init, "sag", cd, &config.sag_scales, config.sag_params);
        }
        for k in (0..STAGES).rev() {
            let ck = config.channels(k);
            init.conv(&format!("dec{k}.up"), ck, 2 * ck, 3, true);
            init.conv(&format!("dec{k}.fuse"), ck, 2 * ck, 1, true);
            if config.enable_ddm {
                init_ddm(&mut init, &format!("dec{k}.ddm"), ck, config.kernel_sizes[k], config.ffn_ratio);
            }
        }
        init.conv("out", 2, c, 3, true);
        Ok(Self { config, params })
    }

    /// Restores a `[B, 2, H, W]` batch; output has the input's shape.
    pub fn forward<'g>(&self, b: &Binder<'g>, x: Var<'g>) -> Result<Var<'g>> {
        Ok(self.trace(b, x)?.output)
    }

    pub fn trace<'g>(&self, b: &Binder<'g>, x: Var<'g>) -> Result<LdrTrace<'g>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != 2 {
            return Err(Error::input(format!("LDR input must be [B, 2, H, W], got {shape:?}")));
        }
        let factor = 1 << STAGES;
        let (x, (h, w)) = nn::pad_to_multiple(x, factor, factor);
        let cfg = &self.config;
        let mut f = nn::conv(b, x, "in", 1);
        let mut skips = Vec::with_capacity(STAGES);
        for k in 0..STAGES {
            if cfg.enable_ddm {
                f = ddm(b, f, &format!("enc{k}.ddm"));
            }
            skips.push(f);
            f = nn::conv(b, f, &format!("enc{k}.down"), 2);
        }
        if cfg.enable_ddm {
            f = ddm(b, f, "mid.ddm");
        }
        let bottleneck = f;
        if cfg.enable_sag {
            let (g, _) = sag(b, f, "sag", &cfg.sag_scales)?;
            f = f.add(g);
        }
        for k in (0..STAGES).rev() {
            let up = nn::conv(b, f.upsample_nearest2x(), &format!("dec{k}.up"), 1);
            let cat = Var::concat(&[up, skips[k]], 1);
            f = nn::conv(b, cat, &format!("dec{k}.fuse"), 1);
            if cfg.enable_ddm {
                f = ddm(b, f, &format!("dec{k}.ddm"));
            }
        }
        let out = nn::conv(b, f, "out", 1);
        let out = if out.shape()[2] != h || out.shape()[3] != w {
            out.crop2d(h, w)
        } else {
            out
        };
        Ok(LdrTrace {
            output: out,
            bottleneck,
        })
    }
}

#[cfg(test)]
mod tests {
    use autograd::gradcheck::{gradcheck, GradCheckOptions};
    use autograd::{Graph, Tensor};

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn block_params(f: impl FnOnce(&mut Init<'_, ChaCha8Rng>)) -> Params {
        let mut params = Params::new();
        let mut r = rng(3);
        f(&mut Init::new(&mut params, &mut r));
        params
    }

    /// Jitters every parameter so no gradient path is trivially zero.
    fn jittered(mut params: Params) -> Params {
        let mut r = rng(99);
        for (_, t) in params.iter_mut() {
            let noise = Tensor::randn(t.shape(), 0.3, &mut r);
            t.add_assign(&noise);
        }
        params
    }

    fn eval<F>(params: &Params, x: &Tensor, f: F) -> Tensor
    where
        F: for<'g> Fn(&Binder<'g>, Var<'g>) -> Var<'g>,
    {
        let g = Graph::new();
        let b = Binder::new(&g, params, false);
        f(&b, g.constant(x.clone())).value().as_ref().clone()
    }

    #[test]
    fn fmx_open_gate_doubles_and_closed_gate_passes() {
        let mut params = block_params(|i| init_fmx(i, "f", 4));
        let x = Tensor::randn(&[1, 4, 8, 8], 1.0, &mut rng(5));
        params.get_mut("f.gate.w").unwrap().data_mut().fill(0.0);
        params.get_mut("f.gate.b").unwrap().data_mut().fill(1e3);
        let y = eval(&params, &x, |b, x| fmx(b, x, "f"));
        assert!(y.max_abs_diff(&x.scaled(2.0)) < 1e-12);
        params.get_mut("f.gate.b").unwrap().data_mut().fill(-1e3);
        let y = eval(&params, &x, |b, x| fmx(b, x, "f"));
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn fmx_matches_dft_matrix_oracle() {
        let params = block_params(|i| init_fmx(i, "f", 4));
        let (c, h, w) = (4, 8, 8);
        let x = Tensor::randn(&[1, c, h, w], 1.0, &mut rng(6));
        let y = eval(&params, &x, |b, x| fmx(b, x, "f"));

        // Naive unitary DFT per channel.
        let tau = std::f64::consts::TAU;
        let norm = 1.0 / ((h * w) as f64).sqrt();
        let mut re = vec![0.0; c * h * w];
        let mut im = vec![0.0; c * h * w];
        for ch in 0..c {
            for u in 0..h {
                for v in 0..w {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for m in 0..h {
                        for n in 0..w {
                            let a = -tau * ((u * m) as f64 / h as f64 + (v * n) as f64 / w as f64);
                            let xv = x.at(&[0, ch, m, n]);
                            sr += xv * a.cos();
                            si += xv * a.sin();
                        }
                    }
                    re[(ch * h + u) * w + v] = sr * norm;
                    im[(ch * h + u) * w + v] = si * norm;
                }
            }
        }
        // Gate: 1x1 conv over [re; im] channels, then sigmoid.
        let gw = params.get("f.gate.w").unwrap();
        let gb = params.get("f.gate.b").unwrap();
        let spec = |k: usize, p: usize| if k < c { re[k * h * w + p] } else { im[(k - c) * h * w + p] };
        let mut gre = vec![0.0; c * h * w];
        let mut gim = vec![0.0; c * h * w];
        for o in 0..2 * c {
            for p in 0..h * w {
                let mut z = gb.data()[o];
                for k in 0..2 * c {
                    z += gw.data()[o * 2 * c + k] * spec(k, p);
                }
                let gated = spec(o, p) / (1.0 + (-z).exp());
                if o < c {
                    gre[o * h * w + p] = gated;
                } else {
                    gim[(o - c) * h * w + p] = gated;
                }
            }
        }
        for ch in 0..c {
            for m in 0..h {
                for n in 0..w {
                    let mut s = 0.0;
                    for u in 0..h {
                        for v in 0..w {
                            let a = tau * ((u * m) as f64 / h as f64 + (v * n) as f64 / w as f64);
                            let k = (ch * h + u) * w + v;
                            s += gre[k] * a.cos() - gim[k] * a.sin();
                        }
                    }
                    let want = x.at(&[0, ch, m, n]) + s * norm;
                    assert!((y.at(&[0, ch, m, n]) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn smx_zero_weights_is_identity_and_keeps_shape() {
        let mut params = block_params(|i| init_smx(i, "s", 3, 3));
        let x = Tensor::randn(&[2, 3, 5, 7], 1.0, &mut rng(7));
        assert_eq!(eval(&params, &x, |b, x| smx(b, x, "s")).shape(), x.shape());
        params.zero_all();
        assert_eq!(eval(&params, &x, |b, x| smx(b, x, "s")), x);
    }

    #[test]
    fn smx_depthwise_gradient() {
        let params = jittered(block_params(|i| init_smx(i, "s", 3, 3)));
        let x = Tensor::randn(&[1, 3, 6, 6], 1.0, &mut rng(8));
        let report = gradcheck(&params, |b| smx(b, b.graph().constant(x.clone()), "s").sum(), GradCheckOptions::default());
        let dw: Vec<_> = report.entries.iter().filter(|e| e.name == "s.l1.dw.w").collect();
        assert_eq!(dw.len(), 27);
        assert!(dw.iter().any(|e| e.analytic.abs() > 1e-3));
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    fn zero_ddm(params: &mut Params) {
        params.zero_all();
        for (name, t) in params.iter_mut() {
            if name.ends_with("gate.b") {
                t.data_mut().fill(-1e3);
            }
        }
    }

    #[test]
    fn ddm_zero_weights_is_identity() {
        let mut params = block_params(|i| init_ddm(i, "d", 4, 3, 2));
        let x = Tensor::randn(&[1, 4, 4, 8], 1.0, &mut rng(9));
        assert_eq!(eval(&params, &x, |b, x| ddm(b, x, "d")).shape(), x.shape());
        zero_ddm(&mut params);
        let y = eval(&params, &x, |b, x| ddm(b, x, "d"));
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn ddm_gradient() {
        let params = jittered(block_params(|i| init_ddm(i, "d", 2, 3, 2)));
        let x = Tensor::randn(&[1, 2, 4, 8], 1.0, &mut rng(10));
        let wts = Tensor::randn(&[1, 2, 4, 8], 1.0, &mut rng(11));
        let report = gradcheck(
            &params,
            |b| {
                let g = b.graph();
                ddm(b, g.constant(x.clone()), "d").mul(g.constant(wts.clone())).sum()
            },
            GradCheckOptions::default(),
        );
        assert_eq!(report.checked(), params.num_scalars());
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn sag_zero_parameters_give_bias_map() {
        let mut params = block_params(|i| init_sag(i, "g", 3, &[1, 2, 4], 4));
        for s in [1, 2, 4] {
            params.get_mut(&format!("g.s{s}.maps")).unwrap().data_mut().fill(0.0);
        }
        params.set("g.conv.b", Tensor::new(&[3], vec![0.5, -1.0, 2.0]));
        for seed in [1, 2] {
            let x = Tensor::randn(&[2, 3, 4, 8], 1.0, &mut rng(seed));
            let y = eval(&params, &x, |b, x| sag(b, x, "g", &[1, 2, 4]).unwrap().0);
            for bi in 0..2 {
                for (c, want) in [0.5, -1.0, 2.0].into_iter().enumerate() {
                    for p in 0..32 {
                        assert_eq!(y.data()[(bi * 3 + c) * 32 + p], want);
                    }
                }
            }
        }
    }

    #[test]
    fn sag_weights_are_distributions() {
        let params = block_params(|i| init_sag(i, "g", 3, &[1, 2, 4], 4));
        let g = Graph::new();
        let b = Binder::new(&g, &params, false);
        let x = g.constant(Tensor::randn(&[3, 3, 4, 4], 5.0, &mut rng(12)));
        let (_, weights) = sag(&b, x, "g", &[1, 2, 4]).unwrap();
        for w in weights {
            for row in w.value().data().chunks(4) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sag_rejects_oversized_scale() {
        let params = block_params(|i| init_sag(i, "g", 3, &[4], 2));
        let g = Graph::new();
        let b = Binder::new(&g, &params, false);
        let x = g.constant(Tensor::zeros(&[1, 3, 2, 8]));
        assert!(matches!(sag(&b, x, "g", &[4]), Err(Error::Config(_))));
    }

    #[test]
    fn sag_hand_computation() {
        // C = 1, one scale of side 1, N = 2, 2x2 input.
        let mut params = Params::new();
        params.insert("g.s1.maps", Tensor::new(&[2, 1], vec![3.0, -1.0]));
        params.insert("g.s1.fc.w", Tensor::new(&[1, 2], vec![1.0, -1.0]));
        params.insert("g.s1.fc.b", Tensor::new(&[2], vec![0.0, 0.5]));
        let mut k = vec![0.0; 9];
        k[4] = 2.0;
        k[5] = 1.0;
        params.insert("g.conv.w", Tensor::new(&[1, 1, 3, 3], k));
        params.insert("g.conv.b", Tensor::new(&[1], vec![0.25]));
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]);
        let y = eval(&params, &x, |b, x| sag(b, x, "g", &[1]).unwrap().0);
        // e = 3; logits (3, -2.5); weights softmax; map value m everywhere.
        let (l0, l1): (f64, f64) = (3.0, -3.0 + 0.5);
        let w0 = l0.exp() / (l0.exp() + l1.exp());
        let m = 3.0 * w0 - (1.0 - w0);
        // Centre tap 2, right neighbour 1 (zero padded at the right edge).
        let want = [3.0 * m + 0.25, 2.0 * m + 0.25, 3.0 * m + 0.25, 2.0 * m + 0.25];
        for (got, want) in y.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn sag_gradient() {
        let params = block_params(|i| init_sag(i, "g", 2, &[1, 2], 3));
        let x = Tensor::randn(&[2, 2, 4, 4], 1.0, &mut rng(13));
        let report = gradcheck(
            &params,
            |b| sag(b, b.graph().constant(x.clone()), "g", &[1, 2]).unwrap().0.square().sum(),
            GradCheckOptions::default(),
        );
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    fn tiny_config() -> LdrConfig {
        // A 16x32 input has a 2x4 bottleneck, too small for 4x4 maps.
        LdrConfig {
            base_channels: 2,
            sag_scales: vec![1, 2],
            ..LdrConfig::default()
        }
    }

    #[test]
    fn network_shapes() {
        let net = LdrNet::new(tiny_config(), 0).unwrap();
        let g = Graph::new();
        let b = Binder::new(&g, &net.params, false);
        for (h, w) in [(16, 32), (13, 30)] {
            let x = g.constant(Tensor::randn(&[2, 2, h, w], 1.0, &mut rng(1)));
            let t = net.trace(&b, x).unwrap();
            assert_eq!(t.output.shape(), vec![2, 2, h, w]);
            let (ph, pw) = (nn::round_up(h, 8), nn::round_up(w, 8));
            assert_eq!(t.bottleneck.shape(), vec![2, 16, ph / 8, pw / 8]);
        }
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut net = LdrNet::new(tiny_config(), 0).unwrap();
        net.params.zero_all();
        net.params.set("out.b", Tensor::new(&[2], vec![0.3, -0.7]));
        let x = Tensor::randn(&[1, 2, 16, 32], 1.0, &mut rng(2));
        let y = eval(&net.params, &x, |b, x| net.forward(b, x).unwrap());
        for (k, v) in y.data().iter().enumerate() {
            assert_eq!(*v, if k < 512 { 0.3 } else { -0.7 });
        }
    }

    #[test]
    fn deterministic() {
        let a = LdrNet::new(tiny_config(), 4).unwrap();
        let b = LdrNet::new(tiny_config(), 4).unwrap();
        assert_eq!(a.params, b.params);
        let x = Tensor::randn(&[1, 2, 16, 32], 1.0, &mut rng(3));
        let ya = eval(&a.params, &x, |bd, x| a.forward(bd, x).unwrap());
        let yb = eval(&b.params, &x, |bd, x| b.forward(bd, x).unwrap());
        assert_eq!(ya, yb);
    }

    #[test]
    fn ablation_toggles_drop_parameters() {
        let full = LdrNet::new(tiny_config(), 0).unwrap();
        let bare = LdrNet::new(
            LdrConfig {
                enable_ddm: false,
                enable_sag: false,
                ..tiny_config()
            },
            0,
        )
        .unwrap();
        assert!(bare.params.len() < full.params.len());
        assert!(bare.params.names().all(|n| !n.contains("ddm") && !n.starts_with("sag")));
        let x = Tensor::randn(&[1, 2, 16, 32], 1.0, &mut rng(3));
        assert_eq!(eval(&bare.params, &x, |b, x| bare.forward(b, x).unwrap()).shape(), x.shape());
    }

    #[test]
    fn oversized_sag_scale_is_config_error() {
        let net = LdrNet::new(LdrConfig { base_channels: 2, ..LdrConfig::default() }, 0).unwrap();
        let g = Graph::new();
        let b = Binder::new(&g, &net.params, false);
        let x = g.constant(Tensor::zeros(&[1, 2, 16, 32]));
        assert!(matches!(net.forward(&b, x), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_even_kernels() {
        let cfg = LdrConfig {
            kernel_sizes: vec![3, 4, 7],
            ..LdrConfig::default()
        };
        assert!(matches!(LdrNet::new(cfg, 0), Err(Error::Config(_))));
    }
}
