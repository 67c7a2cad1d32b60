use super::{generate, CorpusSpec, Split};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `batch_size x seq_len` token ids, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    batch_size: usize,
    seq_len: usize,
    tokens: Vec<u32>,
}

impl TokenBatch {
    pub fn new(batch_size: usize, seq_len: usize, tokens: Vec<u32>) -> Result<Self> {
        if batch_size == 0 || seq_len == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if tokens.len() != batch_size * seq_len {
            return Err(Error::Input(format!(
                "batch of {batch_size}x{seq_len} needs {} tokens, got {}",
                batch_size * seq_len,
                tokens.len()
            )));
        }
        Ok(Self { batch_size, seq_len, tokens })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchShape {
    pub batch_size: usize,
    pub seq_len: usize,
}

impl BatchShape {
    pub fn tokens(&self) -> usize {
        self.batch_size * self.seq_len
    }
}

/// Random windows from a training stream.
#[derive(Clone, Debug)]
pub struct TrainSampler {
    stream: Arc<Vec<u32>>,
    shape: BatchShape,
    rng: ChaCha8Rng,
}

impl TrainSampler {
    pub fn new(stream: Arc<Vec<u32>>, shape: BatchShape, seed: u64) -> Result<Self> {
        if shape.batch_size == 0 || shape.seq_len < 2 {
            return Err(Error::Config("batch_size must be >= 1 and seq_len >= 2".into()));
        }
        if stream.len() < shape.seq_len {
            return Err(Error::Config(format!(
                "stream of {} tokens is shorter than one sequence of {}",
                stream.len(),
                shape.seq_len
            )));
        }
        Ok(Self { stream, shape, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn from_spec(spec: &CorpusSpec, shape: BatchShape, seed: u64) -> Result<Self> {
        Self::new(Arc::new(generate(spec)?), shape, seed)
    }

    pub fn next_batch(&mut self) -> TokenBatch {
        let max_start = self.stream.len() - self.shape.seq_len;
        let mut tokens = Vec::with_capacity(self.shape.tokens());
        for _ in 0..self.shape.batch_size {
            let s = self.rng.gen_range(0..=max_start);
            tokens.extend_from_slice(&self.stream[s..s + self.shape.seq_len]);
        }
        TokenBatch { batch_size: self.shape.batch_size, seq_len: self.shape.seq_len, tokens }
    }
}

/// The fixed batches a validation spec is always scored on: consecutive
/// non-overlapping windows from the start of the stream.
#[derive(Clone, Debug)]
pub struct EvalSet {
    spec: CorpusSpec,
    shape: BatchShape,
    batches: Vec<TokenBatch>,
}

impl EvalSet {
    pub fn new(spec: &CorpusSpec, shape: BatchShape, max_batches: usize) -> Result<Self> {
        if spec.split != Split::Val {
            return Err(Error::Domain("evaluation requires a val split".into()));
        }
        let stream = generate(spec)?;
        Self::from_stream(spec, &stream, shape, max_batches)
    }

    pub fn from_stream(spec: &CorpusSpec, stream: &[u32], shape: BatchShape, max_batches: usize) -> Result<Self> {
        if max_batches == 0 {
            return Err(Error::Domain("max_batches must be >= 1".into()));
        }
        let per_batch = shape.tokens();
        let available = stream.len() / per_batch;
        if available == 0 {
            return Err(Error::Config(format!(
                "val stream of {} tokens cannot fill one {}x{} batch",
                stream.len(),
                shape.batch_size,
                shape.seq_len
            )));
        }
        let n = max_batches.min(available);
        let batches = (0..n)
            .map(|k| TokenBatch::new(shape.batch_size, shape.seq_len, stream[k * per_batch..(k + 1) * per_batch].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: spec.clone(), shape, batches })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    pub fn batches(&self) -> &[TokenBatch] {
        &self.batches
    }

    /// The first `n` batches.
    pub fn truncated(&self, n: usize) -> EvalSet {
        Self { spec: self.spec.clone(), shape: self.shape, batches: self.batches[..n.min(self.batches.len())].to_vec() }
    }
}
