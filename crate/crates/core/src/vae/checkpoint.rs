//! Model checkpoint file:
//!
//! ```text
//! BVAE1\n
//! latent_dim=<d>;layers=<H>x<W>x<C>|<encoder layers>|<decoder layers>\n
//! <encoder params as f64 LE><decoder params as f64 LE>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Architecture, VaeParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"BVAE1\n";

pub fn write_checkpoint<W: Write>(params: &VaeParams, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    writeln!(w, "{}", params.arch())?;
    let mut buf = Vec::with_capacity(8 * (params.encoder.len() + params.decoder.len()));
    for v in params.encoder.iter().chain(&params.decoder) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Parses a checkpoint; `origin` is only used in error messages.
pub fn read_checkpoint<R: Read>(r: R, origin: &Path) -> Result<VaeParams> {
    let fmt = |reason: String| Error::format(origin, reason);
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| fmt("truncated magic".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(fmt("bad magic, expected BVAE1".into()));
    }
    let mut header = String::new();
    r.read_line(&mut header).map_err(|e| Error::io(origin, e))?;
    let header = header
        .strip_suffix('\n')
        .ok_or_else(|| fmt("header line not terminated".into()))?;
    let (latent, layers) = header
        .split_once(';')
        .ok_or_else(|| fmt(format!("malformed header `{header}`")))?;
    let latent_dim: usize = latent
        .strip_prefix("latent_dim=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| fmt(format!("bad latent_dim field `{latent}`")))?;
    let descriptor = layers
        .strip_prefix("layers=")
        .ok_or_else(|| fmt(format!("bad layers field `{layers}`")))?;
    let arch = Architecture::from_descriptor(latent_dim, descriptor).map_err(|e| fmt(e.to_string()))?;

    let (ne, nd) = (arch.encoder_param_count(), arch.decoder_param_count());
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(origin, e))?;
    if bytes.len() != 8 * (ne + nd) {
        return Err(fmt(format!(
            "expected {} parameter bytes, found {}",
            8 * (ne + nd),
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let encoder: Vec<f64> = values.by_ref().take(ne).collect();
    let decoder: Vec<f64> = values.collect();
    VaeParams::new(arch, encoder, decoder).map_err(|e| fmt(e.to_string()))
}

pub fn save_checkpoint(params: &VaeParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<VaeParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(file, path)
}
