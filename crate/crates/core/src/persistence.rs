//! Bit-exact checkpoint and manifest I/O.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! "SHLB"  u16 version
//! u32 config_len   config JSON (canonical)
//! u32 n_tensors    { u16 name_len, name, u8 ndim, u32 dims[ndim], u8 dtype }*
//! payload          tensors in table order, f32 or f64 LE
//! u64 checksum     first 8 bytes of SHA-256(payload), LE
//! u8 has_optimizer
//!   "OPTS" u64 step, u64 len, f64 m[len], f64 v[len]
//!   u64 checksum   over the optimizer section after the tag
//! ```
//!
//! Tensors appear in lexicographic name order. Files are written to a
//! temporary sibling and renamed into place.

use crate::autodiff::ParamVector;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelState};
use crate::optim::AdamWState;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SHLB";
pub const FORMAT_VERSION: u16 = 1;
const OPT_TAG: &[u8; 4] = b"OPTS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::Corrupt(format!("unknown dtype tag {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Serialise with object keys sorted, so equal values hash equally.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Pretty variant of [`canonical_json`] for human-facing files.
pub fn canonical_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

/// 16 hex characters of SHA-256.
pub fn content_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn checksum(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Write-temp-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// A loaded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub optimizer: Option<AdamWState>,
}

pub fn encode_checkpoint(state: &ModelState, optimizer: Option<&AdamWState>, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = canonical_json(state.config())?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());

    let tensors = state.layout().tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(dtype as u8);
    }

    let mut payload = Vec::with_capacity(state.params().len() * dtype.width());
    for (_, values) in state.tensors() {
        for &v in values {
            match dtype {
                Dtype::F32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum(&payload).to_le_bytes());

    match optimizer {
        None => out.push(0),
        Some(opt) => {
            if opt.m.len() != state.params().len() {
                return Err(Error::Structure("optimizer state length does not match model".into()));
            }
            out.push(1);
            out.extend_from_slice(OPT_TAG);
            let mut sec = Vec::with_capacity(16 + 16 * opt.m.len());
            sec.extend_from_slice(&opt.t.to_le_bytes());
            sec.extend_from_slice(&(opt.m.len() as u64).to_le_bytes());
            for &x in opt.m.iter().chain(opt.v.iter()) {
                sec.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&sec);
            out.extend_from_slice(&checksum(&sec).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, state: &ModelState, optimizer: Option<&AdamWState>, dtype: Dtype) -> Result<()> {
    write_atomic(path, &encode_checkpoint(state, optimizer, dtype)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decode a checkpoint. With `with_optimizer = false` the optimizer section is
/// not read (and not verified).
pub fn decode_checkpoint(bytes: &[u8], with_optimizer: bool) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let cfg_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| Error::Corrupt(format!("config JSON: {e}")))?;
    config.validate()?;
    let layout = config.layout();

    let n = r.u32()? as usize;
    if n != layout.tensors().len() {
        return Err(Error::Structure(format!(
            "file has {n} tensors, config expects {}",
            layout.tensors().len()
        )));
    }
    let mut dtypes = Vec::with_capacity(n);
    for expected in layout.tensors() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Corrupt("tensor name not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let dtype = Dtype::from_u8(r.u8()?)?;
        if name != expected.name {
            return Err(Error::Structure(format!(
                "unexpected tensor '{name}' (expected '{}' at this position)",
                expected.name
            )));
        }
        if shape != expected.shape {
            return Err(Error::Structure(format!("tensor '{name}' has shape {shape:?}, expected {:?}", expected.shape)));
        }
        dtypes.push(dtype);
    }

    let payload_len: usize = layout.tensors().iter().zip(&dtypes).map(|(t, d)| t.len() * d.width()).sum();
    let payload = r.take(payload_len)?;
    let stored = r.u64()?;
    if stored != checksum(payload) {
        return Err(Error::Corrupt("payload checksum mismatch".into()));
    }
    let mut values = Vec::with_capacity(layout.total());
    let mut p = 0;
    for (t, d) in layout.tensors().iter().zip(&dtypes) {
        for _ in 0..t.len() {
            let v = match d {
                Dtype::F32 => f32::from_le_bytes(payload[p..p + 4].try_into().expect("4 bytes")) as f64,
                Dtype::F64 => f64::from_le_bytes(payload[p..p + 8].try_into().expect("8 bytes")),
            };
            values.push(v);
            p += d.width();
        }
    }
    let state = ModelState::unflatten(&config, ParamVector::new(values)?)?;

    let has_opt = r.u8()?;
    let optimizer = match (has_opt, with_optimizer) {
        (0, _) => None,
        (1, false) => return Ok(Checkpoint { state, optimizer: None }),
        (1, true) => {
            if r.take(4)? != OPT_TAG {
                return Err(Error::Corrupt("bad optimizer section tag".into()));
            }
            let start = r.pos;
            let t = r.u64()?;
            let len = r.u64()? as usize;
            if len != layout.total() {
                return Err(Error::Structure(format!("optimizer state has {len} entries, model has {}", layout.total())));
            }
            let raw = r.take(16 * len)?;
            let sec = &bytes[start..r.pos];
            let stored = r.u64()?;
            if stored != checksum(sec) {
                return Err(Error::Corrupt("optimizer checksum mismatch".into()));
            }
            let floats: Vec<f64> =
                raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let (m, v) = floats.split_at(len);
            Some(AdamWState { m: m.to_vec(), v: v.to_vec(), t })
        }
        (other, _) => return Err(Error::Corrupt(format!("bad optimizer flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { state, optimizer })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_existing(path)?;
    decode_checkpoint(&bytes, true)
}

/// Load parameters only, skipping the optimizer section.
pub fn load_state(path: &Path) -> Result<ModelState> {
    let bytes = read_existing(path)?;
    decode_checkpoint(&bytes, false).map(|c| c.state)
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::Io(e),
    })
}
