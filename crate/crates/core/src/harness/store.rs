use super::manifest::RunManifest;
use crate::data::CorpusCache;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::persistence::{canonical_json_pretty, load_state, write_atomic};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Outputs of a finished (or failed) run, stored next to its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub status: RunStatus,
    /// Saved checkpoint steps, ascending.
    pub checkpoints: Vec<u64>,
    pub wall_seconds: f64,
    pub grad_evals: u64,
    #[serde(default)]
    pub error: Option<String>,
    /// Fine-tunes only: `(L_FT, L_PT)` of the final weights.
    #[serde(default)]
    pub losses: Option<(f64, f64)>,
}

/// Run directories keyed by manifest hash, plus a shared corpus cache.
///
/// Layout: `<root>/runs/<run_id>/{manifest.json, record.json, trace.csv, step_<n>.shlb}`.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("runs"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpora(&self) -> CorpusCache {
        CorpusCache::new(self.root.join("corpora"))
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn checkpoint_path(&self, run_id: &str, step: u64) -> PathBuf {
        self.run_dir(run_id).join(format!("step_{step}.shlb"))
    }

    pub fn trace_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join("trace.csv")
    }

    pub fn results_index_path(&self) -> PathBuf {
        self.root.join("results_index.csv")
    }

    pub fn write_manifest(&self, m: &RunManifest) -> Result<String> {
        let id = m.run_id()?;
        let dir = self.run_dir(&id);
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("manifest.json"), canonical_json_pretty(m)?.as_bytes())?;
        Ok(id)
    }

    pub fn read_manifest(&self, run_id: &str) -> Result<RunManifest> {
        let p = self.run_dir(run_id).join("manifest.json");
        if !p.exists() {
            return Err(Error::NotFound(format!("run {run_id} has no manifest in {}", self.root.display())));
        }
        Ok(serde_json::from_slice(&std::fs::read(p)?)?)
    }

    pub fn write_record(&self, r: &RunRecord) -> Result<()> {
        let p = self.run_dir(&r.run_id).join("record.json");
        write_atomic(&p, canonical_json_pretty(r)?.as_bytes())
    }

    pub fn read_record(&self, run_id: &str) -> Result<Option<RunRecord>> {
        let p = self.run_dir(run_id).join("record.json");
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&std::fs::read(p)?)?))
    }

    pub fn load_checkpoint(&self, run_id: &str, step: u64) -> Result<ModelState> {
        load_state(&self.checkpoint_path(run_id, step))
    }
}
