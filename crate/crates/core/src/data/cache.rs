use super::{generate, CorpusSpec};
use crate::error::{Error, Result};
use crate::persistence::{canonical_json, content_hash, write_atomic};
use std::path::{Path, PathBuf};

/// On-disk corpus cache: `<hash>.tokens` (u16 little-endian ids) plus a
/// `<hash>.json` sidecar holding the spec. Keyed by the spec's content hash.
#[derive(Clone, Debug)]
pub struct CorpusCache {
    dir: PathBuf,
}

impl CorpusCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(spec: &CorpusSpec) -> Result<String> {
        Ok(content_hash(&canonical_json(spec)?))
    }

    pub fn get_or_generate(&self, spec: &CorpusSpec) -> Result<Vec<u32>> {
        let key = Self::key(spec)?;
        let tokens_path = self.dir.join(format!("{key}.tokens"));
        let sidecar = self.dir.join(format!("{key}.json"));
        if tokens_path.exists() && sidecar.exists() {
            let stored: CorpusSpec = serde_json::from_slice(&std::fs::read(&sidecar)?)?;
            if &stored == spec {
                let bytes = std::fs::read(&tokens_path)?;
                if bytes.len() != 2 * spec.n_tokens {
                    return Err(Error::Corrupt(format!("cached corpus {key} has {} bytes", bytes.len())));
                }
                return Ok(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect());
            }
        }
        let tokens = generate(spec)?;
        std::fs::create_dir_all(&self.dir)?;
        let bytes: Vec<u8> = tokens.iter().flat_map(|&t| (t as u16).to_le_bytes()).collect();
        write_atomic(&tokens_path, &bytes)?;
        write_atomic(&sidecar, canonical_json(spec)?.as_bytes())?;
        Ok(tokens)
    }
}
