//! Reverse-mode differentiation of scalar losses over flat parameter vectors.
//!
//! Gradients come from a single reverse sweep over `f64`. Hessian-vector
//! products are forward-over-reverse: the same sweep runs over [`Dual`] numbers
//! seeded with the direction, and the tangent of the gradient is `H v`. The
//! Hessian is never materialised.

mod objectives;
mod real;
mod tape;

pub use objectives::{Product, Quadratic};
pub use real::{Dual, Real};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

/// Flat, ordered view of every model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Rejects empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("parameter vector must be nonempty".into()));
        }
        check_finite(&values, "parameter")?;
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Mutable access; callers must keep entries finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        same_len(self.len(), other.len())?;
        ParamVector::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + alpha * dir`.
    pub fn axpy(&self, alpha: f64, dir: &ParamVector) -> Result<ParamVector> {
        same_len(self.len(), dir.len())?;
        ParamVector::new(self.0.iter().zip(&dir.0).map(|(a, b)| a + alpha * b).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<ParamVector> {
        ParamVector::new(self.0.iter().map(|a| a * c).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Vec<f64> {
        p.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Structure(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric { what: format!("non-finite {what}"), index: Some(i) }),
        None => Ok(()),
    }
}

/// A scalar loss over a flat parameter vector and a batch.
///
/// Implementations record their computation on the supplied tape; evaluating
/// the same `(params, batch)` twice must give bit-identical results.
pub trait LossFunction: Sync {
    type Batch: ?Sized + Sync;

    /// Expected parameter count.
    fn dim(&self) -> usize;

    /// Record the loss of `params` (a `1 x dim` node) on `batch` and return the scalar node.
    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, batch: &Self::Batch) -> Result<Var>;
}

fn check_dim<F: LossFunction>(f: &F, theta: &[f64]) -> Result<()> {
    if theta.len() != f.dim() {
        return Err(Error::Structure(format!(
            "parameter length {} does not match loss dimension {}",
            theta.len(),
            f.dim()
        )));
    }
    Ok(())
}

/// Plain forward evaluation.
pub fn evaluate<F: LossFunction>(f: &F, theta: &[f64], batch: &F::Batch) -> Result<f64> {
    check_dim(f, theta)?;
    let mut tape = Tape::<f64>::new();
    let leaf = tape.constant(theta.to_vec(), 1, theta.len());
    let out = f.record(&mut tape, leaf, batch)?;
    let loss = tape.scalar(out);
    if !loss.is_finite() {
        return Err(Error::Numeric { what: "non-finite loss".into(), index: None });
    }
    Ok(loss)
}

/// Loss and gradient from one reverse sweep.
pub fn value_and_grad<F: LossFunction>(f: &F, theta: &[f64], batch: &F::Batch) -> Result<(f64, ParamVector)> {
    check_dim(f, theta)?;
    let mut tape = Tape::<f64>::new();
    let leaf = tape.input(theta.to_vec(), 1, theta.len());
    let out = f.record(&mut tape, leaf, batch)?;
    let loss = tape.scalar(out);
    if !loss.is_finite() {
        return Err(Error::Numeric { what: "non-finite loss".into(), index: None });
    }
    let mut grads = tape.backward(out);
    let g = grads.take(leaf).unwrap_or_else(|| vec![0.0; theta.len()]);
    check_finite(&g, "gradient")?;
    Ok((loss, ParamVector(g)))
}

/// Loss, gradient and `H v` from one forward-over-reverse sweep.
#[derive(Clone, Debug)]
pub struct SecondOrder {
    pub loss: f64,
    pub grad: ParamVector,
    pub hv: ParamVector,
}

pub fn grad_and_hvp<F: LossFunction>(f: &F, theta: &[f64], v: &[f64], batch: &F::Batch) -> Result<SecondOrder> {
    check_dim(f, theta)?;
    same_len(theta.len(), v.len())?;
    check_finite(v, "direction")?;
    let mut tape = Tape::<Dual>::new();
    let seeded = theta.iter().zip(v).map(|(&x, &d)| Dual::new(x, d)).collect();
    let leaf = tape.input(seeded, 1, theta.len());
    let out = f.record(&mut tape, leaf, batch)?;
    let loss = tape.scalar(out).re;
    if !loss.is_finite() {
        return Err(Error::Numeric { what: "non-finite loss".into(), index: None });
    }
    let mut grads = tape.backward(out);
    let (g, hv): (Vec<f64>, Vec<f64>) = match grads.take(leaf) {
        Some(d) => d.into_iter().map(|x| (x.re, x.tan)).unzip(),
        None => (vec![0.0; theta.len()], vec![0.0; theta.len()]),
    };
    check_finite(&g, "gradient")?;
    check_finite(&hv, "Hessian-vector product")?;
    Ok(SecondOrder { loss, grad: ParamVector(g), hv: ParamVector(hv) })
}

/// Exact Hessian-vector product `∇²f(θ) v`.
pub fn hvp<F: LossFunction>(f: &F, theta: &[f64], v: &[f64], batch: &F::Batch) -> Result<ParamVector> {
    grad_and_hvp(f, theta, v, batch).map(|s| s.hv)
}

/// Finite difference of gradients, `(g(θ + h v) - g(θ - h v)) / 2h`.
///
/// Cross-check oracle for [`hvp`]; analysis code never uses it.
pub fn hvp_finite_difference<F: LossFunction>(
    f: &F,
    theta: &[f64],
    v: &[f64],
    batch: &F::Batch,
    h: f64,
) -> Result<ParamVector> {
    same_len(theta.len(), v.len())?;
    let plus: Vec<f64> = theta.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let (_, gp) = value_and_grad(f, &plus, batch)?;
    let (_, gm) = value_and_grad(f, &minus, batch)?;
    ParamVector::new(gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}
