use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// One fine-tuned model on the learning-forgetting plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub ft_lr: f64,
    /// Fine-tuning validation loss (nats).
    pub l_ft: f64,
    /// Pretraining validation loss after fine-tuning (nats).
    pub l_pt: f64,
    pub ft_run_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub ft_lr: f64,
    pub ft_run_id: String,
    pub error: String,
}

/// Every fine-tune of one parent checkpoint, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSet {
    pub parent_run_id: String,
    pub parent_step: u64,
    /// Parent's pretraining validation loss.
    pub base_l_pt: f64,
    /// Parent's zero-shot loss on the fine-tuning validation set.
    pub base_l_ft: f64,
    pub points: Vec<TradeoffPoint>,
    pub failures: Vec<FailedRun>,
    /// Points whose `L_PT` fell suspiciously below the base loss.
    pub alarms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierResult {
    pub provenance: String,
    pub points: Vec<TradeoffPoint>,
}

fn check_finite(points: &[TradeoffPoint]) -> Result<()> {
    match points.iter().find(|p| !p.l_ft.is_finite() || !p.l_pt.is_finite()) {
        Some(p) => Err(Error::Numeric { what: format!("non-finite tradeoff point {}", p.ft_run_id), index: None }),
        None => Ok(()),
    }
}

/// Points not dominated in (`L_FT`, `L_PT`), both minimised. Exact ties are
/// all kept. Output is ordered by `L_FT` ascending, stable.
pub fn pareto_frontier(points: &[TradeoffPoint], provenance: &str) -> Result<FrontierResult> {
    if points.is_empty() {
        return Err(Error::Domain("Pareto frontier of an empty set".into()));
    }
    check_finite(points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.l_ft.total_cmp(&q.l_ft).then(p.l_pt.total_cmp(&q.l_pt)).then(a.cmp(&b))
    });
    let mut keep = Vec::new();
    // lowest L_PT among points with strictly smaller L_FT
    let mut best_before = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let ft = points[order[i]].l_ft;
        let group_min = points[order[i]].l_pt;
        let mut j = i;
        while j < order.len() && points[order[j]].l_ft == ft {
            let p = &points[order[j]];
            if p.l_pt == group_min && best_before > group_min {
                keep.push(p.clone());
            }
            j += 1;
        }
        best_before = best_before.min(group_min);
        i = j;
    }
    Ok(FrontierResult { provenance: provenance.to_string(), points: keep })
}

/// `min L_PT` over points with `L_FT ≤ τ`.
pub fn l_pt_at_threshold(points: &[TradeoffPoint], tau: f64) -> Option<f64> {
    points.iter().filter(|p| p.l_ft <= tau).map(|p| p.l_pt).min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointThreshold {
    pub parent_run_id: String,
    pub parent_step: u64,
    pub min_l_ft: f64,
    pub l_pt_at_tau: f64,
    pub base_l_pt: f64,
    /// `l_pt_at_tau - base_l_pt`.
    pub forgetting: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub tau: f64,
    pub per_checkpoint: Vec<CheckpointThreshold>,
}

/// Common fine-tuning loss level every checkpoint can reach: the largest of the
/// per-checkpoint minimum `L_FT`. Forgetting is read off each set at that level.
pub fn matched_ft_threshold(sets: &[TradeoffSet]) -> Result<ThresholdReport> {
    if sets.is_empty() {
        return Err(Error::Domain("threshold needs at least one tradeoff set".into()));
    }
    let mut minima = Vec::with_capacity(sets.len());
    for s in sets {
        if s.points.is_empty() {
            return Err(Error::Domain(format!("tradeoff set of {} has no successful points", s.parent_run_id)));
        }
        check_finite(&s.points)?;
        minima.push(s.points.iter().map(|p| p.l_ft).fold(f64::INFINITY, f64::min));
    }
    let tau = minima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let per_checkpoint = sets
        .iter()
        .zip(&minima)
        .map(|(s, &min_l_ft)| {
            let at = l_pt_at_threshold(&s.points, tau).expect("every set reaches tau by construction");
            CheckpointThreshold {
                parent_run_id: s.parent_run_id.clone(),
                parent_step: s.parent_step,
                min_l_ft,
                l_pt_at_tau: at,
                base_l_pt: s.base_l_pt,
                forgetting: at - s.base_l_pt,
            }
        })
        .collect();
    Ok(ThresholdReport { tau, per_checkpoint })
}

/// `1 − forget_B / forget_A` at threshold `τ`. `None` when `forget_A ≤ 0`.
pub fn forgetting_reduction(
    frontier_a: &FrontierResult,
    frontier_b: &FrontierResult,
    tau: f64,
    base_a: f64,
    base_b: f64,
) -> Result<Option<f64>> {
    let at = |f: &FrontierResult, name: &str| {
        l_pt_at_threshold(&f.points, tau)
            .ok_or_else(|| Error::Domain(format!("frontier {name} has no point with L_FT <= {tau}")))
    };
    let forget_a = at(frontier_a, "A")? - base_a;
    let forget_b = at(frontier_b, "B")? - base_b;
    if forget_a <= 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 - forget_b / forget_a))
}
