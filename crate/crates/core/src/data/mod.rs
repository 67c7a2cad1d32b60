//! Deterministic synthetic corpora, batching and validation loss.
//!
//! One order-2 Markov chain plays the pretraining distribution. Fine-tuning
//! distributions are a second chain, arithmetic expressions and copy/reverse
//! patterns, all drawn from one shared vocabulary of [`VOCAB_SIZE`] ids.

mod batch;
mod cache;
mod families;

pub use batch::{BatchShape, EvalSet, TokenBatch, TrainSampler};
pub use cache::CorpusCache;
pub use families::{ArithmeticParams, ChainKind, CopyParams, Markov2Params, Markov2Table};

use crate::error::{Error, Result};
use crate::model::{lm_loss, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Every family emits ids below this bound.
pub const VOCAB_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn stream_id(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Markov2(Markov2Params),
    Arithmetic(ArithmeticParams),
    CopyPattern(CopyParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Map<String, serde_json::Value>")]
pub struct CorpusSpec {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
    pub n_tokens: usize,
    pub split: Split,
}

// Flattened enums cannot reject unknown keys, so the common fields are split
// off by hand and the rest goes to the family's strict parameter struct.
impl TryFrom<serde_json::Map<String, serde_json::Value>> for CorpusSpec {
    type Error = String;

    fn try_from(mut map: serde_json::Map<String, serde_json::Value>) -> std::result::Result<Self, String> {
        fn take<T: serde::de::DeserializeOwned>(
            map: &mut serde_json::Map<String, serde_json::Value>,
            key: &str,
        ) -> std::result::Result<T, String> {
            let v = map.remove(key).ok_or_else(|| format!("missing field `{key}`"))?;
            serde_json::from_value(v).map_err(|e| format!("field `{key}`: {e}"))
        }
        let seed = take(&mut map, "seed")?;
        let n_tokens = take(&mut map, "n_tokens")?;
        let split = take(&mut map, "split")?;
        let family = serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(Self { family, seed, n_tokens, split })
    }
}

impl CorpusSpec {
    pub fn new(family: Family, seed: u64, n_tokens: usize, split: Split) -> Self {
        Self { family, seed, n_tokens, split }
    }

    /// The same corpus on the other split.
    pub fn with_split(&self, split: Split) -> Self {
        Self { split, ..self.clone() }
    }

    pub fn with_tokens(&self, n_tokens: usize) -> Self {
        Self { n_tokens, ..self.clone() }
    }

    /// Parse a JSON spec; an unknown family is a configuration error.
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: CorpusSpec = serde_json::from_str(s).map_err(|e| Error::Config(format!("corpus spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::Markov2(p) => p.validate(),
            Family::Arithmetic(p) => p.validate(),
            Family::CopyPattern(p) => p.validate(),
        }
    }

    /// Generator for this split. Splits use distinct ChaCha streams of one seed.
    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.split.stream_id());
        rng
    }
}

/// Exactly `spec.n_tokens` ids, reproducible from the spec alone.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<u32>> {
    spec.validate()?;
    let mut rng = spec.rng();
    let out = match &spec.family {
        Family::Markov2(p) => Markov2Table::build(p).sample(spec.n_tokens, &mut rng),
        Family::Arithmetic(p) => p.sample(spec.n_tokens, &mut rng),
        Family::CopyPattern(p) => p.sample(spec.n_tokens, &mut rng),
    };
    debug_assert_eq!(out.len(), spec.n_tokens);
    Ok(out)
}

/// Exact entropy rate (nats/token) of a `markov2` corpus under its stationary law.
pub fn entropy_rate(spec: &CorpusSpec) -> Result<f64> {
    match &spec.family {
        Family::Markov2(p) => {
            p.validate()?;
            Ok(Markov2Table::build(p).entropy_rate())
        }
        _ => Err(Error::Config("entropy rate is only defined for the markov2 family".into())),
    }
}

/// Mean LM loss over the fixed validation batches of `spec`.
pub fn eval_loss(state: &ModelState, spec: &CorpusSpec, max_batches: usize, shape: BatchShape) -> Result<f64> {
    let set = EvalSet::new(spec, shape, max_batches)?;
    set.loss(state)
}

impl EvalSet {
    pub fn loss(&self, state: &ModelState) -> Result<f64> {
        self.mean(|b| lm_loss(state, b))
    }

    pub fn loss_at(&self, objective: &crate::model::LmObjective, params: &[f64]) -> Result<f64> {
        self.mean(|b| crate::autodiff::evaluate(objective, params, b))
    }

    fn mean(&self, mut f: impl FnMut(&TokenBatch) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for b in self.batches() {
            total += f(b)?;
        }
        Ok(total / self.batches().len() as f64)
    }
}
