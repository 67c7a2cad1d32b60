//! Learning-rate schedules and optimizer phase plans.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Peak learning rates swept for every pretraining configuration.
pub const PEAK_LR_PRESETS: [f64; 6] = [1e-4, 3e-4, 6e-4, 1e-3, 3e-3, 1e-2];

/// Decay fractions for the WSD anneal-length sweep.
pub const ANNEAL_FRACTIONS: [f64; 3] = [0.05, 0.10, 0.20];

pub const DEFAULT_FLOOR_RATIO: f64 = 0.1;

fn default_floor_ratio() -> f64 {
    DEFAULT_FLOOR_RATIO
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Cosine {
        alpha_max: f64,
        alpha_min: f64,
        warmup_steps: u64,
        total_steps: u64,
    },
    Wsd {
        alpha_peak: f64,
        warmup_steps: u64,
        total_steps: u64,
        decay_fraction: f64,
        #[serde(default = "default_floor_ratio")]
        floor_ratio: f64,
    },
}

/// First step of the decay window, `⌈(1 − d) T⌉`.
///
/// Computed as `T − ⌊d T⌋` with a small slack so that fractions like 0.1 that
/// are not exact in binary still land on the intended integer.
pub fn decay_start(total_steps: u64, decay_fraction: f64) -> u64 {
    let dt = (decay_fraction * total_steps as f64 + 1e-9).floor() as u64;
    total_steps - dt.min(total_steps)
}

impl ScheduleSpec {
    pub fn cosine(alpha_max: f64, alpha_min: f64, warmup_steps: u64, total_steps: u64) -> Self {
        ScheduleSpec::Cosine { alpha_max, alpha_min, warmup_steps, total_steps }
    }

    pub fn wsd(alpha_peak: f64, warmup_steps: u64, total_steps: u64, decay_fraction: f64) -> Self {
        ScheduleSpec::Wsd { alpha_peak, warmup_steps, total_steps, decay_fraction, floor_ratio: DEFAULT_FLOOR_RATIO }
    }

    pub fn total_steps(&self) -> u64 {
        match self {
            ScheduleSpec::Cosine { total_steps, .. } | ScheduleSpec::Wsd { total_steps, .. } => *total_steps,
        }
    }

    pub fn warmup_steps(&self) -> u64 {
        match self {
            ScheduleSpec::Cosine { warmup_steps, .. } | ScheduleSpec::Wsd { warmup_steps, .. } => *warmup_steps,
        }
    }

    pub fn peak(&self) -> f64 {
        match self {
            ScheduleSpec::Cosine { alpha_max, .. } => *alpha_max,
            ScheduleSpec::Wsd { alpha_peak, .. } => *alpha_peak,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, t) = (self.warmup_steps(), self.total_steps());
        if w >= t {
            return Err(Error::Config(format!("warmup_steps {w} must be below total_steps {t}")));
        }
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {x} must be finite and >= 0")))
            }
        };
        match *self {
            ScheduleSpec::Cosine { alpha_max, alpha_min, .. } => {
                nonneg("alpha_max", alpha_max)?;
                nonneg("alpha_min", alpha_min)?;
                if alpha_min > alpha_max {
                    return Err(Error::Config(format!("alpha_min {alpha_min} exceeds alpha_max {alpha_max}")));
                }
            }
            ScheduleSpec::Wsd { alpha_peak, decay_fraction, floor_ratio, .. } => {
                nonneg("alpha_peak", alpha_peak)?;
                if !(decay_fraction > 0.0 && decay_fraction <= 1.0) {
                    return Err(Error::Config(format!("decay_fraction {decay_fraction} must lie in (0, 1]")));
                }
                if !(0.0..=1.0).contains(&floor_ratio) {
                    return Err(Error::Config(format!("floor_ratio {floor_ratio} must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Learning rate at step `t`, `0 ≤ t ≤ T`.
pub fn lr_at(spec: &ScheduleSpec, t: u64) -> Result<f64> {
    let (w, total) = (spec.warmup_steps(), spec.total_steps());
    if t > total {
        return Err(Error::Domain(format!("step {t} outside schedule of {total} steps")));
    }
    let peak = spec.peak();
    if t < w {
        return Ok(peak * t as f64 / w as f64);
    }
    Ok(match *spec {
        ScheduleSpec::Cosine { alpha_max, alpha_min, .. } => {
            let frac = (t - w) as f64 / (total - w) as f64;
            alpha_min + 0.5 * (alpha_max - alpha_min) * (1.0 + (std::f64::consts::PI * frac).cos())
        }
        ScheduleSpec::Wsd { alpha_peak, decay_fraction, floor_ratio, .. } => {
            let start = decay_start(total, decay_fraction).max(w);
            if t < start {
                alpha_peak
            } else if t == total {
                alpha_peak * floor_ratio
            } else {
                let frac = (t - start) as f64 / (total - start) as f64;
                alpha_peak * (1.0 - (1.0 - floor_ratio) * frac)
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerTag {
    Adamw,
    Sam,
}

/// Which optimizer runs at each step. At most one switch, from AdamW to SAM.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePlan {
    pub total_steps: u64,
    /// First SAM step; `None` means AdamW throughout.
    pub switch_step: Option<u64>,
}

impl PhasePlan {
    pub fn all_adamw(total_steps: u64) -> Self {
        Self { total_steps, switch_step: None }
    }

    pub fn all_sam(total_steps: u64) -> Self {
        Self { total_steps, switch_step: Some(0) }
    }

    /// AdamW through the stable phase, SAM over the final `d` of training.
    pub fn sam_anneal(total_steps: u64, decay_fraction: f64) -> Result<Self> {
        if !(decay_fraction > 0.0 && decay_fraction <= 1.0) {
            return Err(Error::Config(format!("decay_fraction {decay_fraction} must lie in (0, 1]")));
        }
        Ok(Self { total_steps, switch_step: Some(decay_start(total_steps, decay_fraction)) })
    }

    pub fn uses_sam(&self) -> bool {
        self.switch_step.is_some_and(|s| s < self.total_steps)
    }
}

pub fn phase_at(plan: &PhasePlan, t: u64) -> OptimizerTag {
    match plan.switch_step {
        Some(s) if t >= s => OptimizerTag::Sam,
        _ => OptimizerTag::Adamw,
    }
}
