//! Closed-form losses used as oracles for the curvature and optimiser code.

use super::{LossFunction, Real, Tape, Var};
use crate::error::{Error, Result};

/// `f(θ) = ½ θᵀAθ + bᵀθ + c` with a dense symmetric `A`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl Quadratic {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 || a.len() != n * n {
            return Err(Error::Structure(format!("quadratic needs an {n}x{n} matrix, got {} entries", a.len())));
        }
        for i in 0..n {
            for j in 0..i {
                if a[i * n + j] != a[j * n + i] {
                    return Err(Error::Domain(format!("quadratic matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, a, b, c })
    }

    /// `½ Σ dᵢ θᵢ²`.
    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            a[i * n + i] = v;
        }
        Self { n, a, b: vec![0.0; n], c: 0.0 }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    /// `A v`, computed directly.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.a.chunks(self.n).map(|row| super::dot(row, v)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i * self.n + i]).sum()
    }
}

impl LossFunction for Quadratic {
    type Batch = ();

    fn dim(&self) -> usize {
        self.n
    }

    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, _: &()) -> Result<Var> {
        let a = tape.constant_f64(&self.a, self.n, self.n);
        let b = tape.constant_f64(&self.b, 1, self.n);
        let ta = tape.matmul(params, a);
        let quad = tape.dot(ta, params);
        let half = tape.scale(quad, 0.5);
        let lin = tape.dot(b, params);
        let s = tape.add(half, lin);
        let c = tape.constant_f64(&[self.c], 1, 1);
        Ok(tape.add(s, c))
    }
}

/// `f(θ) = θ₁ θ₂`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Product;

impl LossFunction for Product {
    type Batch = ();

    fn dim(&self) -> usize {
        2
    }

    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, _: &()) -> Result<Var> {
        let a = tape.slice(params, 0, 1, 1);
        let b = tape.slice(params, 1, 1, 1);
        Ok(tape.dot(a, b))
    }
}
