use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VOCAB_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// Next-token logits `sharpness * (U[a] + V[b])` with Gaussian `U`, `V`.
    Random,
    Uniform,
    /// `c = b + 1 mod states`.
    Cycle,
}

/// Order-2 Markov chain over the first `states` ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Markov2Params {
    pub states: usize,
    pub kind: ChainKind,
    #[serde(default)]
    pub matrix_seed: u64,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn default_sharpness() -> f64 {
    1.5
}

impl Default for Markov2Params {
    fn default() -> Self {
        Self { states: VOCAB_SIZE, kind: ChainKind::Random, matrix_seed: 0, sharpness: default_sharpness() }
    }
}

impl Markov2Params {
    pub fn validate(&self) -> Result<()> {
        if self.states < 2 || self.states > VOCAB_SIZE {
            return Err(Error::Config(format!("markov2 states {} outside [2, {VOCAB_SIZE}]", self.states)));
        }
        if !self.sharpness.is_finite() || self.sharpness < 0.0 {
            return Err(Error::Config("markov2 sharpness must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Dense transition table `P(c | a, b)` indexed `[(a * S + b) * S + c]`.
#[derive(Clone, Debug)]
pub struct Markov2Table {
    states: usize,
    probs: Vec<f64>,
}

impl Markov2Table {
    pub fn build(p: &Markov2Params) -> Self {
        let s = p.states;
        let mut probs = vec![0.0; s * s * s];
        match p.kind {
            ChainKind::Uniform => probs.fill(1.0 / s as f64),
            ChainKind::Cycle => {
                for a in 0..s {
                    for b in 0..s {
                        probs[(a * s + b) * s + (b + 1) % s] = 1.0;
                    }
                }
            }
            ChainKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.matrix_seed);
                let u: Vec<f64> = (0..s * s).map(|_| StandardNormal.sample(&mut rng)).collect();
                let v: Vec<f64> = (0..s * s).map(|_| StandardNormal.sample(&mut rng)).collect();
                for a in 0..s {
                    for b in 0..s {
                        let row = &mut probs[(a * s + b) * s..(a * s + b + 1) * s];
                        for (c, x) in row.iter_mut().enumerate() {
                            *x = p.sharpness * (u[a * s + c] + v[b * s + c]);
                        }
                        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut z = 0.0;
                        for x in row.iter_mut() {
                            *x = (*x - mx).exp();
                            z += *x;
                        }
                        for x in row.iter_mut() {
                            *x /= z;
                        }
                    }
                }
            }
        }
        Self { states: s, probs }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// `P(c | a, b)`.
    pub fn prob(&self, a: usize, b: usize, c: usize) -> f64 {
        let s = self.states;
        self.probs[(a * s + b) * s + c]
    }

    pub fn row(&self, a: usize, b: usize) -> &[f64] {
        let s = self.states;
        &self.probs[(a * s + b) * s..(a * s + b + 1) * s]
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let s = self.states;
        let mut out = Vec::with_capacity(n);
        let mut a = rng.gen_range(0..s);
        let mut b = rng.gen_range(0..s);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let row = self.row(a, b);
            let mut acc = 0.0;
            let mut c = s - 1;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    c = i;
                    break;
                }
            }
            out.push(c as u32);
            a = b;
            b = c;
        }
        out
    }

    fn row_entropy(&self, a: usize, b: usize) -> f64 {
        -self.row(a, b).iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// Conditional entropy of the next token under the stationary law of the
    /// pair chain `(a, b) -> (b, c)`.
    pub fn entropy_rate(&self) -> f64 {
        let s = self.states;
        let h: Vec<f64> = (0..s * s).map(|i| self.row_entropy(i / s, i % s)).collect();
        let h0 = h[0];
        if h.iter().all(|&x| (x - h0).abs() < 1e-15) {
            return h0.max(0.0);
        }
        // lazy power iteration; the lazy chain is aperiodic
        let mut pi = vec![1.0 / (s * s) as f64; s * s];
        let mut next = vec![0.0; s * s];
        for _ in 0..100_000 {
            for x in next.iter_mut() {
                *x = 0.0;
            }
            for a in 0..s {
                for b in 0..s {
                    let w = pi[a * s + b];
                    if w == 0.0 {
                        continue;
                    }
                    for (c, &p) in self.row(a, b).iter().enumerate() {
                        next[b * s + c] += w * p;
                    }
                }
            }
            let mut diff = 0.0;
            for (p, n) in pi.iter_mut().zip(&next) {
                let lazy = 0.5 * *p + 0.5 * n;
                diff += (lazy - *p).abs();
                *p = lazy;
            }
            if diff < 1e-15 {
                break;
            }
        }
        pi.iter().zip(&h).map(|(p, e)| p * e).sum()
    }
}

const ARITH_PLUS: u32 = 10;
const ARITH_MINUS: u32 = 11;
const ARITH_TIMES: u32 = 12;
const ARITH_EQ: u32 = 13;
const ARITH_END: u32 = 14;
const ARITH_OPEN: u32 = 15;
const ARITH_CLOSE: u32 = 16;

/// `expr = result ;` records; digits are ids 0-9, operators 10-16.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArithmeticParams {
    pub max_operand: u32,
    pub depth: u32,
}

impl Default for ArithmeticParams {
    fn default() -> Self {
        Self { max_operand: 99, depth: 2 }
    }
}

impl ArithmeticParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 4 {
            return Err(Error::Config(format!("arithmetic depth {} outside [1, 4]", self.depth)));
        }
        if self.max_operand == 0 || self.max_operand > 9999 {
            return Err(Error::Config(format!("arithmetic max_operand {} outside [1, 9999]", self.max_operand)));
        }
        Ok(())
    }

    fn push_number(out: &mut Vec<u32>, v: i64) {
        if v < 0 {
            out.push(ARITH_MINUS);
        }
        out.extend(v.unsigned_abs().to_string().bytes().map(|d| (d - b'0') as u32));
    }

    fn expr(&self, depth: u32, rng: &mut ChaCha8Rng, out: &mut Vec<u32>) -> i64 {
        let operand = |rng: &mut ChaCha8Rng| rng.gen_range(0..=self.max_operand) as i64;
        if depth == 0 {
            let v = operand(rng);
            Self::push_number(out, v);
            return v;
        }
        let wrap = depth > 1;
        if wrap {
            out.push(ARITH_OPEN);
        }
        let left = self.expr(depth - 1, rng, out);
        if wrap {
            out.push(ARITH_CLOSE);
        }
        let op = rng.gen_range(0..3);
        out.push([ARITH_PLUS, ARITH_MINUS, ARITH_TIMES][op]);
        let right = operand(rng);
        Self::push_number(out, right);
        match op {
            0 => left + right,
            1 => left - right,
            _ => left * right,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut out = Vec::with_capacity(n + 64);
        while out.len() < n {
            let depth = rng.gen_range(1..=self.depth);
            let v = self.expr(depth, rng, &mut out);
            out.push(ARITH_EQ);
            Self::push_number(&mut out, v);
            out.push(ARITH_END);
        }
        out.truncate(n);
        out
    }
}

const COPY_BASE: u32 = 16;
const COPY_SEP: u32 = 61;
const COPY_END: u32 = 62;

/// Random segment, separator, then the segment copied (or reversed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyParams {
    pub segment_len: usize,
    pub alphabet: u32,
    pub reverse: bool,
}

impl Default for CopyParams {
    fn default() -> Self {
        Self { segment_len: 8, alphabet: 32, reverse: false }
    }
}

impl CopyParams {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len == 0 {
            return Err(Error::Config("copy-pattern segment_len must be >= 1".into()));
        }
        if self.alphabet < 2 || COPY_BASE + self.alphabet > COPY_SEP {
            return Err(Error::Config(format!(
                "copy-pattern alphabet {} outside [2, {}]",
                self.alphabet,
                COPY_SEP - COPY_BASE
            )));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut out = Vec::with_capacity(n + 2 * self.segment_len + 2);
        let mut seg = Vec::with_capacity(self.segment_len);
        while out.len() < n {
            seg.clear();
            seg.extend((0..self.segment_len).map(|_| COPY_BASE + rng.gen_range(0..self.alphabet)));
            out.extend_from_slice(&seg);
            out.push(COPY_SEP);
            if self.reverse {
                out.extend(seg.iter().rev());
            } else {
                out.extend_from_slice(&seg);
            }
            out.push(COPY_END);
        }
        out.truncate(n);
        out
    }
}
