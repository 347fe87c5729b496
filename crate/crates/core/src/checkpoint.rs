//! Network checkpoints and parameter hashing.
//!
//! File layout: the magic line `RLCKPT1\n`, a little-endian `u64` header
//! length, a JSON header (network kind, config, tensor names and shapes),
//! then every tensor's `f64` values little-endian in header order.

use std::path::Path;

use autograd::{Params, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;
use crate::ldr::{LdrConfig, LdrNet};
use crate::lpr::{LprConfig, LprNet};

const MAGIC: &[u8] = b"RLCKPT1\n";

/// SHA-256 over names, shapes and exact bit patterns, as lowercase hex.
pub fn param_hash(params: &Params) -> String {
    let mut h = Sha256::new();
    for (name, t) in params.iter() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

fn encode(kind: &str, config: serde_json::Value, params: &Params) -> Vec<u8> {
    let header = Header {
        kind: kind.to_string(),
        config,
        tensors: params
            .iter()
            .map(|(n, t)| TensorMeta { name: n.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(path: &Path, bytes: &[u8], kind: &str) -> Result<(serde_json::Value, Params)> {
    let bad = |m: String| Error::data(path, m);
    if !bytes.starts_with(MAGIC) || bytes.len() < MAGIC.len() + 8 {
        return Err(bad("not a checkpoint file".into()));
    }
    let mut len = [0u8; 8];
    len.copy_from_slice(&bytes[MAGIC.len()..MAGIC.len() + 8]);
    let hlen = u64::from_le_bytes(len) as usize;
    let start = MAGIC.len() + 8;
    let body = bytes
        .get(start..start.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.kind != kind {
        return Err(bad(format!("expected a {kind} checkpoint, found {}", header.kind)));
    }
    let mut data = &bytes[start + hlen..];
    let mut params = Params::new();
    for meta in header.tensors {
        let n: usize = meta.shape.iter().product();
        if data.len() < n * 8 {
            return Err(bad(format!("truncated data for {}", meta.name)));
        }
        let values = data[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[n * 8..];
        params.insert(meta.name, Tensor::new(&meta.shape, values));
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes", data.len())));
    }
    Ok((header.config, params))
}

/// Checks that `loaded` has exactly the names and shapes of `fresh`.
fn check_layout(path: &Path, fresh: &Params, loaded: &Params) -> Result<()> {
    let a: Vec<_> = fresh.iter().map(|(n, t)| (n, t.shape())).collect();
    let b: Vec<_> = loaded.iter().map(|(n, t)| (n, t.shape())).collect();
    if a != b {
        return Err(Error::data(path, "parameter layout does not match the stored config"));
    }
    Ok(())
}

pub fn save_ldr(path: &Path, net: &LdrNet) -> Result<()> {
    let cfg = serde_json::to_value(&net.config).expect("config serializes");
    io::write_bytes(path, &encode("ldr", cfg, &net.params))
}

pub fn load_ldr(path: &Path) -> Result<LdrNet> {
    let (cfg, params) = decode(path, &io::read_bytes(path)?, "ldr")?;
    let config: LdrConfig = serde_json::from_value(cfg).map_err(|e| Error::data(path, e.to_string()))?;
    let fresh = LdrNet::new(config.clone(), 0)?;
    check_layout(path, &fresh.params, &params)?;
    Ok(LdrNet { config, params })
}

pub fn save_lpr(path: &Path, net: &LprNet) -> Result<()> {
    let cfg = serde_json::to_value(&net.config).expect("config serializes");
    io::write_bytes(path, &encode("lpr", cfg, &net.params))
}

pub fn load_lpr(path: &Path) -> Result<LprNet> {
    let (cfg, params) = decode(path, &io::read_bytes(path)?, "lpr")?;
    let config: LprConfig = serde_json::from_value(cfg).map_err(|e| Error::data(path, e.to_string()))?;
    let fresh = LprNet::new(config.clone(), 0)?;
    check_layout(path, &fresh.params, &params)?;
    Ok(LprNet { config, params })
}
