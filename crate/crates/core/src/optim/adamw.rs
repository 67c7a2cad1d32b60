use crate::autodiff::ParamVector;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
}

impl OptimConfig {
    /// Pretraining defaults: betas (0.9, 0.95), weight decay 0.1.
    pub fn pretrain() -> Self {
        Self { beta1: 0.9, beta2: 0.95, adam_epsilon: 1e-8, weight_decay: 0.1 }
    }

    /// Fine-tuning defaults: same betas, no weight decay.
    pub fn finetune() -> Self {
        Self { weight_decay: 0.0, ..Self::pretrain() }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config(format!("betas must lie in [0, 1): got {} and {}", self.beta1, self.beta2)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be finite and >= 0", self.weight_decay)));
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return Err(Error::Config("adam_epsilon must be finite and > 0".into()));
        }
        Ok(())
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self::pretrain()
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One decoupled-weight-decay Adam step, in place.
///
/// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ` with bias correction at the incremented
/// step count. On a non-finite result nothing is modified.
pub fn adamw_step(
    theta: &mut ParamVector,
    grad: &[f64],
    state: &mut AdamWState,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    let n = theta.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Structure(format!(
            "adamw shapes disagree: params {n}, grad {}, moments {}/{}",
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Domain(format!("learning rate {lr} must be finite and >= 0")));
    }
    let t = state.t + 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    let mut new_theta = Vec::with_capacity(n);
    let mut new_m = Vec::with_capacity(n);
    let mut new_v = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad[i];
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let p = theta[i];
        let next = p - lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon) - lr * cfg.weight_decay * p;
        if !next.is_finite() {
            return Err(Error::Numeric { what: "non-finite AdamW update".into(), index: Some(i) });
        }
        new_theta.push(next);
        new_m.push(m);
        new_v.push(v);
    }
    theta.values_mut().copy_from_slice(&new_theta);
    state.m = new_m;
    state.v = new_v;
    state.t = t;
    Ok(())
}
