//! Experiment orchestration: runs keyed by manifest hash, fine-tuning sweeps,
//! Pareto frontiers and loss-matched forgetting.

mod index;
mod manifest;
mod store;
mod tradeoff;
mod train;

pub use index::{append_results_index, read_results_index, IndexRow, RESULTS_INDEX_HEADER};
pub use manifest::{EvalSpec, EwcSpec, FinetuneManifest, PretrainManifest, RunManifest};
pub use store::{RunRecord, RunStatus, RunStore};
pub use tradeoff::{
    forgetting_reduction, l_pt_at_threshold, matched_ft_threshold, pareto_frontier, CheckpointThreshold, FailedRun,
    FrontierResult, ThresholdReport, TradeoffPoint, TradeoffSet,
};
pub use train::{
    finetune, load_parent, parent_manifest, pretrain, sweep, tradeoff_losses, FinetuneOutcome, RunOutcome,
    ALARM_MARGIN,
};
