use super::tradeoff::{TradeoffPoint, TradeoffSet};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::Path;

pub const RESULTS_INDEX_HEADER: [&str; 6] = ["parent_run_id", "ft_run_id", "ft_lr", "L_FT", "L_PT", "status"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub parent_run_id: String,
    pub ft_run_id: String,
    pub ft_lr: f64,
    #[serde(rename = "L_FT")]
    pub l_ft: Option<f64>,
    #[serde(rename = "L_PT")]
    pub l_pt: Option<f64>,
    pub status: String,
}

impl IndexRow {
    pub fn point(&self) -> Option<TradeoffPoint> {
        match (self.status.as_str(), self.l_ft, self.l_pt) {
            ("ok", Some(l_ft), Some(l_pt)) => {
                Some(TradeoffPoint { ft_lr: self.ft_lr, l_ft, l_pt, ft_run_id: self.ft_run_id.clone() })
            }
            _ => None,
        }
    }
}

pub fn read_results_index(path: &Path) -> Result<Vec<IndexRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<IndexRow>, _>>()?)
}

/// Append the set's runs to the index. Runs already listed are skipped, so
/// replaying a sweep leaves the file unchanged.
pub fn append_results_index(path: &Path, set: &TradeoffSet) -> Result<usize> {
    let existing: HashSet<String> = read_results_index(path)?.into_iter().map(|r| r.ft_run_id).collect();
    let mut rows: Vec<IndexRow> = set
        .points
        .iter()
        .map(|p| IndexRow {
            parent_run_id: set.parent_run_id.clone(),
            ft_run_id: p.ft_run_id.clone(),
            ft_lr: p.ft_lr,
            l_ft: Some(p.l_ft),
            l_pt: Some(p.l_pt),
            status: "ok".into(),
        })
        .chain(set.failures.iter().map(|f| IndexRow {
            parent_run_id: set.parent_run_id.clone(),
            ft_run_id: f.ft_run_id.clone(),
            ft_lr: f.ft_lr,
            l_ft: None,
            l_pt: None,
            status: "failed".into(),
        }))
        .filter(|r| !existing.contains(&r.ft_run_id))
        .collect();
    rows.sort_by(|a, b| a.ft_lr.total_cmp(&b.ft_lr).then(a.ft_run_id.cmp(&b.ft_run_id)));
    if rows.is_empty() {
        return Ok(0);
    }
    let fresh = !path.exists();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(RESULTS_INDEX_HEADER)?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}
