//! Descriptor network: convolutional stem and row-window transformer block,
//! a Haar pyramid of three scales, wavelet-band window attention per scale,
//! and NetVLAD pooling fused into one unit-norm global descriptor.

use autograd::{Binder, Params, Var, BANDS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, join, Init};

pub const LEVELS: usize = 3;

/// Added under the square root of every L2 norm; guards all-zero vectors.
const NORM_EPS: f64 = 1e-20;

/// Window shape (rows, cols) per Haar sub-band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandWindows {
    pub ll: [usize; 2],
    pub lh: [usize; 2],
    pub hl: [usize; 2],
    pub hh: [usize; 2],
}

impl Default for BandWindows {
    fn default() -> Self {
        Self {
            ll: [8, 8],
            lh: [4, 16],
            hl: [16, 4],
            hh: [4, 4],
        }
    }
}

impl BandWindows {
    /// Windows in band order LL, LH, HL, HH.
    pub fn ordered(&self) -> [[usize; 2]; 4] {
        [self.ll, self.lh, self.hl, self.hh]
    }

    pub fn widest(&self) -> usize {
        self.ordered().iter().map(|w| w[1]).max().unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LprConfig {
    pub channels: usize,
    pub heads: usize,
    pub descriptor_dim: usize,
    pub clusters: usize,
    pub ffn_ratio: usize,
    pub windows: BandWindows,
}

impl Default for LprConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            heads: 4,
            descriptor_dim: 256,
            clusters: 32,
            ffn_ratio: 2,
            windows: BandWindows::default(),
        }
    }
}

impl LprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::config("lpr.channels must be a positive multiple of lpr.heads"));
        }
        if self.clusters < 2 {
            return Err(Error::config("lpr.clusters must be at least 2"));
        }
        if self.descriptor_dim == 0 || self.ffn_ratio == 0 {
            return Err(Error::config("lpr.descriptor_dim and lpr.ffn_ratio must be positive"));
        }
        if self.windows.ordered().iter().flatten().any(|&s| s == 0) {
            return Err(Error::config("lpr.windows entries must be positive"));
        }
        Ok(())
    }
}

// ---- wavelet bands ------------------------------------------------------

/// The four Haar sub-bands of a feature map, each `[B, C, H/2, W/2]`.
pub struct WaveletBands<'g> {
    pub ll: Var<'g>,
    pub lh: Var<'g>,
    pub hl: Var<'g>,
    pub hh: Var<'g>,
}

impl<'g> WaveletBands<'g> {
    pub fn as_array(&self) -> [Var<'g>; 4] {
        [self.ll, self.lh, self.hl, self.hh]
    }
}

pub fn dwt2<'g>(x: Var<'g>) -> Result<WaveletBands<'g>> {
    let s = x.shape();
    if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
        return Err(Error::input(format!("dwt2 needs even [B, C, H, W], got {s:?}")));
    }
    let c = s[1];
    let y = x.dwt2();
    let band = |i: usize| y.slice(1, i * c, c);
    Ok(WaveletBands {
        ll: band(0),
        lh: band(1),
        hl: band(2),
        hh: band(3),
    })
}

pub fn idwt2<'g>(bands: &WaveletBands<'g>) -> Var<'g> {
    Var::concat(&bands.as_array(), 1).idwt2()
}

// ---- blocks -------------------------------------------------------------

/// Window attention over `x` with windows of `win`, clamped to the map and
/// reflect-padded to a whole number of windows.
fn windowed_attention<'g>(
    b: &Binder<'g>,
    x: Var<'g>,
    prefix: &str,
    win: [usize; 2],
    heads: usize,
) -> (Var<'g>, Var<'g>) {
    let s = x.shape();
    let (bsz, h, w) = (s[0], s[2], s[3]);
    let (wh, ww) = (win[0].min(h), win[1].min(w));
    let (xp, _) = nn::pad_to_multiple(x, wh, ww);
    let (hp, wp) = (xp.shape()[2], xp.shape()[3]);
    let tokens = nn::window_partition(xp, wh, ww);
    let (out, attn) = nn::self_attention(b, tokens, prefix, heads);
    let merged = nn::window_merge(out, bsz, hp, wp, wh, ww);
    let merged = if (hp, wp) != (h, w) { merged.crop2d(h, w) } else { merged };
    (merged, attn)
}

pub fn init_fgwa<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize) {
    for band in BANDS {
        nn::init_attention(init, &join(prefix, &band.to_lowercase()), c);
    }
}

/// Frequency-guided window attention. Each sub-band is refined residually by
/// attention inside its own window shape; the refined bands are recombined
/// and added to the input. Also returns every attention matrix.
pub fn fgwa<'g>(
    b: &Binder<'g>,
    x: Var<'g>,
    prefix: &str,
    windows: &BandWindows,
    heads: usize,
) -> Result<(Var<'g>, Vec<Var<'g>>)> {
    let bands = dwt2(x)?;
    let mut refined = Vec::with_capacity(4);
    let mut attns = Vec::with_capacity(4);
    for ((band, win), name) in bands.as_array().into_iter().zip(windows.ordered()).zip(BANDS) {
        let (y, a) = windowed_attention(b, band, &join(prefix, &name.to_lowercase()), win, heads);
        refined.push(band.add(y));
        attns.push(a);
    }
    let out = idwt2(&WaveletBands {
        ll: refined[0],
        lh: refined[1],
        hl: refined[2],
        hh: refined[3],
    });
    Ok((out.add(x), attns))
}

pub fn init_mft<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize, ffn_ratio: usize) {
    init_fgwa(init, &join(prefix, "fgwa"), c);
    init.layer_norm(&join(prefix, "ln"), c);
    init.ffn(&join(prefix, "ffn"), c, ffn_ratio);
}

/// [`fgwa`] followed by a pre-norm residual FFN.
pub fn mft<'g>(
    b: &Binder<'g>,
    x: Var<'g>,
    prefix: &str,
    windows: &BandWindows,
    heads: usize,
) -> Result<(Var<'g>, Vec<Var<'g>>)> {
    let (y, attns) = fgwa(b, x, &join(prefix, "fgwa"), windows, heads)?;
    let n = nn::layer_norm(b, y, &join(prefix, "ln"), 1);
    Ok((y.add(nn::ffn(b, n, &join(prefix, "ffn"))), attns))
}

pub fn init_netvlad<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, c: usize, k: usize) {
    init.linear(&join(prefix, "assign"), c, k, true);
    init.normal(join(prefix, "centers"), &[k, c], 0.5);
}

/// Soft-assignment VLAD pooling of `[B, C, H, W]` into `[B, K * C]`.
pub fn netvlad<'g>(b: &Binder<'g>, x: Var<'g>, prefix: &str) -> Var<'g> {
    let s = x.shape();
    let (bsz, c) = (s[0], s[1]);
    let tokens = x.permute(&[0, 2, 3, 1]).reshape(&[bsz, s[2] * s[3], c]);
    netvlad_tokens(b, tokens, prefix)
}

/// NetVLAD over explicit token sets `[B, N, C]`.
pub fn netvlad_tokens<'g>(b: &Binder<'g>, tokens: Var<'g>, prefix: &str) -> Var<'g> {
    let s = tokens.shape();
    let (bsz, c) = (s[0], s[2]);
    let assign = nn::linear(b, tokens, &join(prefix, "assign")).softmax(2);
    let vlad = assign.residual_aggregate(tokens, b.get(&join(prefix, "centers")));
    let k = vlad.shape()[1];
    vlad.l2_normalize(2, NORM_EPS)
        .reshape(&[bsz, k * c])
        .l2_normalize(1, NORM_EPS)
}

pub fn init_wpn<R: rand::Rng>(init: &mut Init<'_, R>, prefix: &str, cfg: &LprConfig) {
    let (c, k, d) = (cfg.channels, cfg.clusters, cfg.descriptor_dim);
    for l in 0..LEVELS {
        init_mft(init, &join(prefix, &format!("l{l}.mft")), c, cfg.ffn_ratio);
        init_netvlad(init, &join(prefix, &format!("l{l}.vlad")), c, k);
    }
    init.linear(&join(prefix, "proj"), LEVELS * k * c, d, true);
    init.layer_norm(&join(prefix, "ln"), d);
    init.linear(&join(prefix, "gate"), d, d, true);
}

/// Wavelet-pyramid NetVLAD: per-level MFT and NetVLAD, concatenation,
/// projection, layer norm, context gating and L2 normalisation to `[B, D]`.
pub fn wpn<'g>(
    b: &Binder<'g>,
    levels: &[Var<'g>],
    prefix: &str,
    cfg: &LprConfig,
) -> Result<(Var<'g>, Vec<Var<'g>>)> {
    if levels.len() != LEVELS {
        return Err(Error::config(format!("WPN needs {LEVELS} levels, got {}", levels.len())));
    }
    let mut vlads = Vec::with_capacity(LEVELS);
    let mut attns = Vec::new();
    for (l, &f) in levels.iter().enumerate() {
        let (m, a) = mft(b, f, &join(prefix, &format!("l{l}.mft")), &cfg.windows, cfg.heads)?;
        attns.extend(a);
        vlads.push(netvlad(b, m, &join(prefix, &format!("l{l}.vlad"))));
    }
    let v = Var::concat(&vlads, 1);
    let x = nn::layer_norm(b, nn::linear(b, v, &join(prefix, "proj")), &join(prefix, "ln"), 1);
    let gated = x.mul(nn::linear(b, x, &join(prefix, "gate")).sigmoid());
    Ok((gated.l2_normalize(1, NORM_EPS), attns))
}

// ---- network ------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LprNet {
    pub config: LprConfig,
    pub params: Params,
}

pub struct LprTrace<'g> {
    pub descriptor: Var<'g>,
    pub levels: Vec<Var<'g>>,
    pub attentions: Vec<Var<'g>>,
}

impl LprNet {
    pub fn new(config: LprConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut init = Init::new(&mut params, &mut rng);
        let c = config.channels;
        init.conv("stem", c, 2, 3, true);
        init.layer_norm("enc.ln1", c);
        nn::init_attention(&mut init, "enc.attn", c);
        init.layer_norm("enc.ln2", c);
        init.ffn("enc.ffn", c, config.ffn_ratio);
        init_wpn(&mut init, "wpn", &config);
        Ok(Self { config, params })
    }

    /// Descriptors `[B, D]` for a `[B, 2, H, W]` batch.
    pub fn forward<'g>(&self, b: &Binder<'g>, x: Var<'g>) -> Result<Var<'g>> {
        Ok(self.trace(b, x)?.descriptor)
    }

    pub fn trace<'g>(&self, b: &Binder<'g>, x: Var<'g>) -> Result<LprTrace<'g>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != 2 {
            return Err(Error::input(format!("LPR input must be [B, 2, H, W], got {shape:?}")));
        }
        // Two pyramid steps plus one DWT inside the coarsest MFT.
        let (x, _) = nn::pad_to_multiple(x, 8, 8);
        let f = nn::conv(b, x, "stem", 1);
        let (f, stem_attn) = self.encoder(b, f);
        let l1 = f;
        let l2 = dwt2(l1)?.ll;
        let l3 = dwt2(l2)?.ll;
        let levels = vec![l1, l2, l3];
        let (descriptor, mut attentions) = wpn(b, &levels, "wpn", &self.config)?;
        attentions.insert(0, stem_attn);
        Ok(LprTrace {
            descriptor,
            levels,
            attentions,
        })
    }

    /// Pre-norm transformer block attending within each image row.
    fn encoder<'g>(&self, b: &Binder<'g>, x: Var<'g>) -> (Var<'g>, Var<'g>) {
        let w = x.shape()[3];
        let n = nn::layer_norm(b, x, "enc.ln1", 1);
        let (a, attn) = windowed_attention(b, n, "enc.attn", [1, w], self.config.heads);
        let x = x.add(a);
        let n = nn::layer_norm(b, x, "enc.ln2", 1);
        (x.add(nn::ffn(b, n, "enc.ffn")), attn)
    }
}
