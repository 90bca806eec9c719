//! On-disk cache of mel spectrograms.
//!
//! File layout (little endian): magic `AUGF`, `u32` version, `u32` rows,
//! `u32` cols, `u8` dtype (1 = f32), `u64` config fingerprint, `f64` frame
//! rate, then `rows * cols` values.

use std::fs;
use std::path::{Path, PathBuf};

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

pub const CACHE_DIR_ENV: &str = "AUGEVAL_CACHE_DIR";
const MAGIC: &[u8; 4] = b"AUGF";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1 + 8 + 8;

/// Cache directory from the environment, if set.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

pub fn cache_path(dir: &Path, track_id: &str, fingerprint: u64) -> PathBuf {
    let safe: String = track_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    dir.join(format!("{safe}-{fingerprint:016x}.feat"))
}

pub fn encode(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mel.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(mel.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(mel.n_mels as u32).to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&mel.config_fingerprint.to_le_bytes());
    out.extend_from_slice(&mel.frame_rate_hz.to_le_bytes());
    for v in &mel.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<MelSpectrogram> {
    let bad = |m: &str| Error::invalid(format!("feature cache: {m}"));
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    if bytes[16] != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    let fingerprint = u64::from_le_bytes(bytes[17..25].try_into().unwrap());
    let frame_rate_hz = f64::from_le_bytes(bytes[25..33].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * cols * 4 {
        return Err(bad("truncated body"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MelSpectrogram {
        n_frames: rows,
        n_mels: cols,
        data,
        frame_rate_hz,
        config_fingerprint: fingerprint,
    })
}

pub fn store(dir: &Path, track_id: &str, mel: &MelSpectrogram) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = cache_path(dir, track_id, mel.config_fingerprint);
    fs::write(&p, encode(mel)).map_err(|e| Error::io(&p, e))
}

/// Cached spectrogram, or `None` when absent.
pub fn load(dir: &Path, track_id: &str, fingerprint: u64) -> Result<Option<MelSpectrogram>> {
    let p = cache_path(dir, track_id, fingerprint);
    match fs::read(&p) {
        Ok(bytes) => decode(&bytes).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&p, e)),
    }
}
