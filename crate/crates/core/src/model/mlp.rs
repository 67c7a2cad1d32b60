//! One-hidden-layer tanh regression net. Cheap enough for fuzzed derivative checks.

use crate::autodiff::{LossFunction, Real, Tape, Var};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpRegression {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
}

#[derive(Clone, Debug)]
pub struct RegressionBatch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rows: usize,
}

impl MlpRegression {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        Self { input_dim, hidden, output_dim }
    }

    /// Parameters: `w1 (in x hidden) | b1 | w2 (hidden x out) | b2`.
    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden + self.hidden + self.hidden * self.output_dim + self.output_dim
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (self.input_dim as f64).sqrt();
        (0..self.param_count()).map(|_| rng.gen_range(-s..s)).collect()
    }

    pub fn random_batch(&self, rows: usize, seed: u64) -> RegressionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..rows * self.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = (0..rows * self.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        RegressionBatch { x, y, rows }
    }
}

impl LossFunction for MlpRegression {
    type Batch = RegressionBatch;

    fn dim(&self) -> usize {
        self.param_count()
    }

    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, batch: &RegressionBatch) -> Result<Var> {
        if batch.rows == 0
            || batch.x.len() != batch.rows * self.input_dim
            || batch.y.len() != batch.rows * self.output_dim
        {
            return Err(Error::Input("regression batch shape does not match the net".into()));
        }
        let (i, h, o) = (self.input_dim, self.hidden, self.output_dim);
        let mut off = 0;
        let mut take = |tape: &mut Tape<T>, r: usize, c: usize| {
            let v = tape.slice(params, off, r, c);
            off += r * c;
            v
        };
        let w1 = take(tape, i, h);
        let b1 = take(tape, 1, h);
        let w2 = take(tape, h, o);
        let b2 = take(tape, 1, o);
        let x = tape.constant_f64(&batch.x, batch.rows, i);
        let y = tape.constant_f64(&batch.y, batch.rows, o);
        let z = tape.matmul(x, w1);
        let z = tape.add_row(z, b1);
        let a = tape.tanh(z);
        let out = tape.matmul(a, w2);
        let out = tape.add_row(out, b2);
        let r = tape.sub(out, y);
        let sq = tape.dot(r, r);
        Ok(tape.scale(sq, 1.0 / (batch.rows * o) as f64))
    }
}
