use super::adamw::{adamw_step, AdamWState, OptimConfig};
use crate::autodiff::{norm, value_and_grad, LossFunction, ParamVector};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamConfig {
    /// Radius of the global ℓ₂ ball.
    pub rho: f64,
}

impl Default for SamConfig {
    fn default() -> Self {
        Self { rho: 0.05 }
    }
}

impl SamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::Config(format!("rho {} must be finite and >= 0", self.rho)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamOutcome {
    /// Loss at the unperturbed parameters.
    pub loss: f64,
    /// Loss at `θ + ε`; equals `loss` when no ascent happened.
    pub perturbed_loss: f64,
    /// Set when the gradient was zero and the ascent step was skipped.
    pub ascent_skipped: bool,
    /// Gradient evaluations spent (1 or 2).
    pub grad_evals: u32,
}

/// `ε = ρ g / ‖g‖₂` over the whole vector. `None` for a zero gradient.
pub fn sam_perturbation(grad: &[f64], rho: f64) -> Option<Vec<f64>> {
    let n = norm(grad);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    let s = rho / n;
    Some(grad.iter().map(|g| g * s).collect())
}

/// One SAM step with AdamW as the base optimiser.
///
/// Both gradients use the same batch. The gradient at `θ + ε` replaces the
/// plain gradient in the AdamW update (moments included), and the update is
/// applied to the unperturbed `θ`, so weight decay sees the original weights.
/// With `rho = 0` this is exactly [`adamw_step`] on the plain gradient.
pub fn sam_step<F: LossFunction>(
    theta: &mut ParamVector,
    batch: &F::Batch,
    f: &F,
    state: &mut AdamWState,
    lr: f64,
    sam: &SamConfig,
    cfg: &OptimConfig,
) -> Result<SamOutcome> {
    let (loss, grad) = value_and_grad(f, theta, batch)?;
    if sam.rho == 0.0 {
        adamw_step(theta, &grad, state, lr, cfg)?;
        return Ok(SamOutcome { loss, perturbed_loss: loss, ascent_skipped: false, grad_evals: 1 });
    }
    let Some(eps) = sam_perturbation(&grad, sam.rho) else {
        log::warn!("SAM: zero gradient at step {}, skipping ascent", state.t + 1);
        adamw_step(theta, &grad, state, lr, cfg)?;
        return Ok(SamOutcome { loss, perturbed_loss: loss, ascent_skipped: true, grad_evals: 1 });
    };
    let perturbed: Vec<f64> = theta.iter().zip(&eps).map(|(p, e)| p + e).collect();
    let (perturbed_loss, sharp_grad) = value_and_grad(f, &perturbed, batch)?;
    adamw_step(theta, &sharp_grad, state, lr, cfg)?;
    Ok(SamOutcome { loss, perturbed_loss, ascent_skipped: false, grad_evals: 2 })
}
