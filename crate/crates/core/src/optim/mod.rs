//! AdamW, SAM over AdamW, and the EWC penalty with its Fisher-diagonal estimate.

mod adamw;
mod ewc;
mod sam;

pub use adamw::{adamw_step, AdamWState, OptimConfig};
pub use ewc::{ewc_loss, ewc_penalty_grad, fisher_diag, fisher_diag_for_model, EwcConfig, EwcObjective};
pub use sam::{sam_perturbation, sam_step, SamConfig, SamOutcome};
