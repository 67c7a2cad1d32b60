use crate::data::{BatchShape, CorpusSpec, Split};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optim::{OptimConfig, SamConfig};
use crate::persistence::{canonical_json, content_hash};
use crate::schedule::{PhasePlan, ScheduleSpec};
use serde::{Deserialize, Serialize};

/// Everything that determines a pretraining run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainManifest {
    pub model: ModelConfig,
    pub corpus: CorpusSpec,
    pub batch: BatchShape,
    pub data_seed: u64,
    pub schedule: ScheduleSpec,
    pub phases: PhasePlan,
    pub optim: OptimConfig,
    pub sam: SamConfig,
    /// Steps after which a checkpoint is written; the final step is always saved.
    pub checkpoint_steps: Vec<u64>,
}

impl PretrainManifest {
    pub fn total_steps(&self) -> u64 {
        self.schedule.total_steps()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.corpus.validate()?;
        if self.corpus.split != Split::Train {
            return Err(Error::Config("pretraining corpus must use the train split".into()));
        }
        if self.batch.seq_len > self.model.context_len {
            return Err(Error::Config(format!(
                "batch seq_len {} exceeds context_len {}",
                self.batch.seq_len, self.model.context_len
            )));
        }
        let t = self.total_steps();
        if t == 0 {
            if self.schedule.warmup_steps() != 0 {
                return Err(Error::Config("a 0-step run cannot have warmup".into()));
            }
        } else {
            self.schedule.validate()?;
        }
        if self.phases.total_steps != t {
            return Err(Error::Config(format!(
                "phase plan covers {} steps, schedule covers {t}",
                self.phases.total_steps
            )));
        }
        self.optim.validate()?;
        self.sam.validate()?;
        if let Some(s) = self.checkpoint_steps.iter().find(|&&s| s > t) {
            return Err(Error::Config(format!("checkpoint step {s} beyond total steps {t}")));
        }
        Ok(())
    }

    /// Checkpoint steps in ascending order, always including the final step.
    pub fn save_steps(&self) -> Vec<u64> {
        let mut s = self.checkpoint_steps.clone();
        s.push(self.total_steps());
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Fixed validation sets for both axes of the tradeoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Pretraining-distribution validation corpus.
    pub pt: CorpusSpec,
    /// Fine-tuning-distribution validation corpus.
    pub ft: CorpusSpec,
    pub batch: BatchShape,
    pub max_batches: usize,
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        for c in [&self.pt, &self.ft] {
            c.validate()?;
            if c.split != Split::Val {
                return Err(Error::Config("evaluation corpora must use the val split".into()));
            }
        }
        if self.max_batches == 0 {
            return Err(Error::Config("eval max_batches must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwcSpec {
    pub lambda: f64,
    pub fisher_batches: usize,
    pub fisher_seed: u64,
}

/// Everything that determines one fine-tuning run from a parent checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneManifest {
    pub parent_run_id: String,
    /// Which saved step of the parent to start from.
    pub parent_step: u64,
    pub corpus: CorpusSpec,
    pub batch: BatchShape,
    pub data_seed: u64,
    pub lr: f64,
    pub steps: u64,
    pub warmup_frac: f64,
    pub optim: OptimConfig,
    #[serde(default)]
    pub ewc: Option<EwcSpec>,
    pub eval: EvalSpec,
}

impl FinetuneManifest {
    pub fn schedule(&self) -> ScheduleSpec {
        let warmup = (self.warmup_frac * self.steps as f64).floor() as u64;
        ScheduleSpec::cosine(self.lr, 0.0, warmup, self.steps)
    }

    pub fn with_lr(&self, lr: f64) -> Self {
        Self { lr, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if self.corpus.split != Split::Train {
            return Err(Error::Config("fine-tuning corpus must use the train split".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("fine-tune lr {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!("warmup_frac {} must lie in [0, 1)", self.warmup_frac)));
        }
        if self.steps > 0 {
            self.schedule().validate()?;
        }
        self.optim.validate()?;
        self.eval.validate()?;
        if let Some(e) = &self.ewc {
            if e.fisher_batches == 0 || !(e.lambda >= 0.0 && e.lambda.is_finite()) {
                return Err(Error::Config("ewc needs fisher_batches >= 1 and a finite lambda >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunManifest {
    Pretrain(PretrainManifest),
    Finetune(FinetuneManifest),
}

impl RunManifest {
    /// Content hash of the canonical JSON form.
    pub fn run_id(&self) -> Result<String> {
        Ok(content_hash(&canonical_json(self)?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RunManifest::Pretrain(m) => m.validate(),
            RunManifest::Finetune(m) => m.validate(),
        }
    }
}
