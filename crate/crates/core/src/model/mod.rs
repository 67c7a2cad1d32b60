//! Decoder-only language model over a flat parameter vector.
//!
//! Pre-norm transformer with learned absolute positions, RMS norms with learned
//! gains, GELU MLPs of width `4 * hidden_dim` and an untied unembedding. No
//! dropout. Parameters are laid out in lexicographic order of their names.

mod layout;
mod mlp;

pub use layout::{ParamLayout, TensorRole, TensorSpec};
pub use mlp::{MlpRegression, RegressionBatch};

use crate::autodiff::{self, LossFunction, ParamVector, Real, Tape, Var};
use crate::data::TokenBatch;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const MLP_RATIO: usize = 4;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub context_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 4, hidden_dim: 64, vocab_size: 64, context_len: 64, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violated = Vec::new();
        if self.layers == 0 {
            violated.push("layers must be >= 1".to_string());
        }
        if self.heads == 0 {
            violated.push("heads must be >= 1".to_string());
        }
        if self.hidden_dim == 0 {
            violated.push("hidden_dim must be >= 1".to_string());
        }
        if self.heads > 0 && !self.hidden_dim.is_multiple_of(self.heads) {
            violated.push(format!("hidden_dim {} not divisible by heads {}", self.hidden_dim, self.heads));
        }
        if self.vocab_size < 2 {
            violated.push(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.vocab_size > u16::MAX as usize + 1 {
            violated.push(format!("vocab_size {} exceeds 65536", self.vocab_size));
        }
        if self.context_len < 2 {
            violated.push(format!("context_len {} < 2", self.context_len));
        }
        if violated.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violated.join("; ")))
        }
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d, v, c, l) = (self.hidden_dim, self.vocab_size, self.context_len, self.layers);
        let f = MLP_RATIO * d;
        let per_layer = (d * 3 * d + 3 * d) + (d * d + d) + (d * f + f) + (f * d + d) + 2 * d;
        v * d + c * d + l * per_layer + d + d * v
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::for_config(self)
    }
}

/// A concrete checkpoint: configuration plus flat parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    layout: ParamLayout,
    params: ParamVector,
}

impl ModelState {
    /// Deterministic initialisation from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid = Normal::new(0.0, INIT_STD / (2.0 * config.layers as f64).sqrt()).expect("valid std");
        let mut values = vec![0.0; layout.total()];
        for spec in layout.tensors() {
            let dst = &mut values[spec.offset..spec.offset + spec.len()];
            match spec.role {
                TensorRole::Gain => dst.fill(1.0),
                TensorRole::Bias => dst.fill(0.0),
                TensorRole::Embedding | TensorRole::Weight => {
                    let dist = if spec.name.ends_with("proj.weight") { &resid } else { &normal };
                    for x in dst.iter_mut() {
                        *x = dist.sample(&mut rng);
                    }
                }
            }
        }
        Ok(Self { config: config.clone(), layout, params: ParamVector::new(values)? })
    }

    /// Rebuild a state from a flat vector; the length must match the layout.
    pub fn unflatten(config: &ModelConfig, params: ParamVector) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.total() {
            return Err(Error::Structure(format!(
                "parameter vector has {} entries, config expects {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(Self { config: config.clone(), layout, params })
    }

    pub fn flatten(&self) -> ParamVector {
        self.params.clone()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.params[s.offset..s.offset + s.len()])
    }

    /// Iterate `(spec, values)` in layout order.
    pub fn tensors(&self) -> impl Iterator<Item = (&TensorSpec, &[f64])> {
        self.layout.tensors().iter().map(move |s| (s, &self.params[s.offset..s.offset + s.len()]))
    }

    /// Replace the parameters, keeping the configuration.
    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        Self::unflatten(&self.config, params)
    }

    pub fn objective(&self) -> LmObjective {
        LmObjective::new(self.config.clone())
    }
}

/// Mean next-token cross-entropy (nats) over every predicted position.
pub fn lm_loss(state: &ModelState, batch: &TokenBatch) -> Result<f64> {
    autodiff::evaluate(&state.objective(), state.params(), batch)
}

/// The language-model loss as a [`LossFunction`] over flat parameters.
#[derive(Clone, Debug)]
pub struct LmObjective {
    config: ModelConfig,
    layout: ParamLayout,
}

impl LmObjective {
    pub fn new(config: ModelConfig) -> Self {
        let layout = config.layout();
        Self { config, layout }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn validate_batch(&self, batch: &TokenBatch) -> Result<()> {
        if batch.seq_len() > self.config.context_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds context length {}",
                batch.seq_len(),
                self.config.context_len
            )));
        }
        if batch.seq_len() < 2 {
            return Err(Error::Input("sequences need at least two tokens".into()));
        }
        if let Some(pos) = batch.tokens().iter().position(|&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Input(format!(
                "token id {} at position {} (sequence {}, offset {}) is outside vocab of {}",
                batch.tokens()[pos],
                pos,
                pos / batch.seq_len(),
                pos % batch.seq_len(),
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn param<T: Real>(&self, tape: &mut Tape<T>, params: Var, name: &str) -> Var {
        let spec = self.layout.get(name).unwrap_or_else(|| panic!("missing tensor {name}"));
        tape.slice(params, spec.offset, spec.rows(), spec.cols())
    }
}

impl LossFunction for LmObjective {
    type Batch = TokenBatch;

    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, batch: &TokenBatch) -> Result<Var> {
        self.validate_batch(batch)?;
        let (b, s) = (batch.batch_size(), batch.seq_len());
        let cfg = &self.config;

        let tok = self.param(tape, params, "embed.tok");
        let pos = self.param(tape, params, "embed.pos");
        let te = tape.gather(tok, batch.tokens());
        let positions: Vec<u32> = (0..b).flat_map(|_| 0..s as u32).collect();
        let pe = tape.gather(pos, &positions);
        let mut x = tape.add(te, pe);

        for l in 0..cfg.layers {
            let p = |n: &str| format!("blocks.{l}.{n}");
            let g1 = self.param(tape, params, &p("ln1.gain"));
            let h = tape.rms_norm(x, g1);
            let wqkv = self.param(tape, params, &p("attn.qkv.weight"));
            let bqkv = self.param(tape, params, &p("attn.qkv.bias"));
            let qkv = tape.matmul(h, wqkv);
            let qkv = tape.add_row(qkv, bqkv);
            let att = tape.causal_attention(qkv, b, s, cfg.heads);
            let wo = self.param(tape, params, &p("attn.proj.weight"));
            let bo = self.param(tape, params, &p("attn.proj.bias"));
            let o = tape.matmul(att, wo);
            let o = tape.add_row(o, bo);
            x = tape.add(x, o);

            let g2 = self.param(tape, params, &p("ln2.gain"));
            let h = tape.rms_norm(x, g2);
            let w1 = self.param(tape, params, &p("mlp.fc.weight"));
            let b1 = self.param(tape, params, &p("mlp.fc.bias"));
            let m = tape.matmul(h, w1);
            let m = tape.add_row(m, b1);
            let m = tape.gelu(m);
            let w2 = self.param(tape, params, &p("mlp.proj.weight"));
            let b2 = self.param(tape, params, &p("mlp.proj.bias"));
            let m = tape.matmul(m, w2);
            let m = tape.add_row(m, b2);
            x = tape.add(x, m);
        }

        let gf = self.param(tape, params, "ln_f.gain");
        let x = tape.rms_norm(x, gf);
        let head = self.param(tape, params, "lm_head.weight");
        let logits = tape.matmul(x, head);

        let mut rows = Vec::with_capacity(b * (s - 1));
        let mut targets = Vec::with_capacity(b * (s - 1));
        let toks = batch.tokens();
        for bi in 0..b {
            for t in 0..s - 1 {
                rows.push((bi * s + t) as u32);
                targets.push(toks[bi * s + t + 1]);
            }
        }
        Ok(tape.cross_entropy(logits, &rows, &targets))
    }
}
