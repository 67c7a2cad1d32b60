//! The experiment config file and `--override key=value` handling.

use crate::data::{BatchShape, CopyParams, CorpusSpec, Family, Markov2Params, Split};
use crate::error::{Error, Result};
use crate::harness::{EvalSpec, EwcSpec, FinetuneManifest, PretrainManifest};
use crate::model::ModelConfig;
use crate::optim::{OptimConfig, SamConfig};
use crate::probes::{ProbeSpec, QuantBits, DEFAULT_BLOCK_SIZE, GAMMA_GRID};
use crate::schedule::{PhasePlan, ScheduleSpec, DEFAULT_FLOOR_RATIO};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    Cosine,
    Wsd,
}

/// Flat schedule block; fields that do not apply to the chosen variant are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub variant: ScheduleVariant,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup: u64,
    pub decay_fraction: f64,
    pub floor_ratio: f64,
}

impl ScheduleConfig {
    pub fn to_spec(&self, total_steps: u64) -> ScheduleSpec {
        match self.variant {
            ScheduleVariant::Cosine => ScheduleSpec::cosine(self.peak_lr, self.min_lr, self.warmup, total_steps),
            ScheduleVariant::Wsd => ScheduleSpec::Wsd {
                alpha_peak: self.peak_lr,
                warmup_steps: self.warmup,
                total_steps,
                decay_fraction: self.decay_fraction,
                floor_ratio: self.floor_ratio,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adamw,
    Sam,
    /// AdamW, then SAM over the final `decay_fraction` of training.
    SamAnneal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    pub corpus: CorpusSpec,
    pub batch: BatchShape,
    pub data_seed: u64,
    pub steps: u64,
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerChoice,
    pub optim: OptimConfig,
    pub sam: SamConfig,
    /// Extra checkpoints as fractions of `steps`.
    pub checkpoint_fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    /// Defaults to the run described by the `pretrain` section.
    pub parent_run_id: Option<String>,
    /// Defaults to the parent's final step.
    pub parent_step: Option<u64>,
    pub corpus: CorpusSpec,
    pub batch: BatchShape,
    pub data_seed: u64,
    pub lrs: Vec<f64>,
    pub steps: u64,
    pub warmup_frac: f64,
    pub optim: OptimConfig,
    pub ewc: Option<EwcSpec>,
    /// Learning rate whose fine-tune defines the direction for curvature analysis.
    pub canonical_lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub gammas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub bits: Vec<QuantBits>,
    pub block_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSection {
    pub batches: usize,
    pub batch_seed: u64,
    pub trace_probes: usize,
    pub power_iters: usize,
    pub power_tol: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub eval: EvalSpec,
    pub probes: ProbeSection,
    pub curvature: CurvatureSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let batch = BatchShape { batch_size: 32, seq_len: 64 };
        let pt = CorpusSpec::new(Family::Markov2(Markov2Params::default()), 1, 1_000_000, Split::Train);
        let ft = CorpusSpec::new(Family::CopyPattern(CopyParams::default()), 2, 500_000, Split::Train);
        Self {
            model: ModelConfig::default(),
            pretrain: PretrainSection {
                corpus: pt.clone(),
                batch,
                data_seed: 0,
                steps: 2000,
                schedule: ScheduleConfig {
                    variant: ScheduleVariant::Cosine,
                    peak_lr: 3e-3,
                    min_lr: 0.0,
                    warmup: 100,
                    decay_fraction: 0.1,
                    floor_ratio: DEFAULT_FLOOR_RATIO,
                },
                optimizer: OptimizerChoice::Adamw,
                optim: OptimConfig::pretrain(),
                sam: SamConfig::default(),
                checkpoint_fractions: vec![0.25, 0.5],
            },
            finetune: FinetuneSection {
                parent_run_id: None,
                parent_step: None,
                corpus: ft.clone(),
                batch,
                data_seed: 0,
                lrs: vec![1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 3e-4, 5e-4, 7e-4, 1e-3, 1.5e-3, 2e-3, 3e-3],
                steps: 300,
                warmup_frac: 0.1,
                optim: OptimConfig::finetune(),
                ewc: None,
                canonical_lr: 3e-4,
            },
            eval: EvalSpec {
                pt: pt.with_split(Split::Val).with_tokens(65_536),
                ft: ft.with_split(Split::Val).with_tokens(65_536),
                batch,
                max_batches: 16,
            },
            probes: ProbeSection {
                gammas: GAMMA_GRID.to_vec(),
                seeds: vec![0, 1, 2],
                bits: vec![QuantBits::Four, QuantBits::Eight],
                block_size: DEFAULT_BLOCK_SIZE,
            },
            curvature: CurvatureSection {
                batches: crate::curvature::CURVATURE_BATCHES,
                batch_seed: 0,
                trace_probes: 10,
                power_iters: 50,
                power_tol: 1e-3,
                seed: 0,
            },
        }
    }
}

impl ExperimentConfig {
    /// Parse a config file, filling absent sections from the defaults, then
    /// apply overrides.
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        if let Some(t) = text {
            let user: Value = serde_json::from_str(t).map_err(|e| Error::Config(format!("config: {e}")))?;
            merge(&mut tree, user, "")?;
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pretrain_manifest()?.validate()?;
        if let Some(f) = self.pretrain.checkpoint_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("checkpoint fraction {f} outside [0, 1]")));
        }
        if self.finetune.lrs.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(Error::Config("fine-tune lrs must be finite and >= 0".into()));
        }
        self.eval.validate()?;
        for s in self.probe_specs()? {
            s.validate()?;
        }
        if self.curvature.batches == 0 || self.curvature.trace_probes == 0 || self.curvature.power_iters == 0 {
            return Err(Error::Config("curvature batches, trace_probes and power_iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pretrain_manifest(&self) -> Result<PretrainManifest> {
        let p = &self.pretrain;
        let t = p.steps;
        let phases = match p.optimizer {
            OptimizerChoice::Adamw => PhasePlan::all_adamw(t),
            OptimizerChoice::Sam => PhasePlan::all_sam(t),
            OptimizerChoice::SamAnneal => PhasePlan::sam_anneal(t, p.schedule.decay_fraction)?,
        };
        let mut checkpoint_steps: Vec<u64> =
            p.checkpoint_fractions.iter().map(|f| (f * t as f64).round() as u64).collect();
        checkpoint_steps.sort_unstable();
        checkpoint_steps.dedup();
        Ok(PretrainManifest {
            model: self.model.clone(),
            corpus: p.corpus.clone(),
            batch: p.batch,
            data_seed: p.data_seed,
            schedule: p.schedule.to_spec(t),
            phases,
            optim: p.optim.clone(),
            sam: p.sam.clone(),
            checkpoint_steps,
        })
    }

    /// Parent run id and step that fine-tuning and probes start from.
    pub fn parent(&self) -> Result<(String, u64)> {
        let id = match &self.finetune.parent_run_id {
            Some(id) => id.clone(),
            None => crate::harness::RunManifest::Pretrain(self.pretrain_manifest()?).run_id()?,
        };
        Ok((id, self.finetune.parent_step.unwrap_or(self.pretrain.steps)))
    }

    /// Fine-tune manifest with `lr = 0`; sweeps fill in the rate.
    pub fn finetune_template(&self) -> Result<FinetuneManifest> {
        let (parent_run_id, parent_step) = self.parent()?;
        let f = &self.finetune;
        Ok(FinetuneManifest {
            parent_run_id,
            parent_step,
            corpus: f.corpus.clone(),
            batch: f.batch,
            data_seed: f.data_seed,
            lr: 0.0,
            steps: f.steps,
            warmup_frac: f.warmup_frac,
            optim: f.optim.clone(),
            ewc: f.ewc.clone(),
            eval: self.eval.clone(),
        })
    }

    pub fn probe_specs(&self) -> Result<Vec<ProbeSpec>> {
        let p = &self.probes;
        let mut v: Vec<ProbeSpec> = p.bits.iter().map(|&bits| ProbeSpec::Quant { bits, block_size: p.block_size }).collect();
        v.extend(p.gammas.iter().map(|&g| ProbeSpec::gaussian(g, &p.seeds)));
        Ok(v)
    }
}

/// Recursively overlay `user` on `base`. Keys absent from `base` are rejected,
/// except below objects whose shape depends on a tag (corpus specs, EWC),
/// which are replaced whole and validated by deserialisation.
fn merge(base: &mut Value, user: Value, path: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) if !is_opaque(path) => {
            for (k, v) in u {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &p)?,
                    None => return Err(Error::Config(format!("unknown config key `{p}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn is_opaque(path: &str) -> bool {
    path.ends_with("corpus") || path == "eval.pt" || path == "eval.ft" || path == "finetune.ewc"
}

/// `a.b.c=value`. The value is parsed as JSON, falling back to a plain string.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{}` is not an object", parts[..i].join("."))))?;
        let opaque = is_opaque(&parts[..i].join("."));
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) && !opaque {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    unreachable!("split always yields at least one part")
}
