use crate::autodiff::{value_and_grad, LossFunction, ParamVector, Real, Tape, Var};
use crate::data::{BatchShape, CorpusSpec, TrainSampler};
use crate::error::{Error, Result};
use crate::model::ModelState;

/// Fisher-weighted quadratic anchor `λ Σ Fᵢ (θᵢ − θ*ᵢ)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct EwcConfig {
    pub lambda: f64,
    pub fisher: ParamVector,
    pub anchor: ParamVector,
}

impl EwcConfig {
    pub fn new(lambda: f64, fisher: ParamVector, anchor: ParamVector) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("EWC lambda {lambda} must be finite and >= 0")));
        }
        if let Some(i) = fisher.iter().position(|&f| f < 0.0) {
            return Err(Error::Domain(format!("Fisher entry {i} is negative")));
        }
        if fisher.len() != anchor.len() {
            return Err(Error::Structure(format!(
                "Fisher has {} entries, anchor has {}",
                fisher.len(),
                anchor.len()
            )));
        }
        Ok(Self { lambda, fisher, anchor })
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.anchor.len() {
            return Err(Error::Structure(format!(
                "EWC anchor has {} entries, parameters have {}",
                self.anchor.len(),
                theta.len()
            )));
        }
        Ok(())
    }

    pub fn penalty(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        let s: f64 = theta
            .iter()
            .zip(self.anchor.iter())
            .zip(self.fisher.iter())
            .map(|((t, a), f)| f * (t - a) * (t - a))
            .sum();
        Ok(self.lambda * s)
    }
}

pub fn ewc_loss(base: f64, theta: &[f64], cfg: &EwcConfig) -> Result<f64> {
    Ok(base + cfg.penalty(theta)?)
}

/// `2 λ F ⊙ (θ − θ*)`.
pub fn ewc_penalty_grad(theta: &[f64], cfg: &EwcConfig) -> Result<Vec<f64>> {
    cfg.check(theta)?;
    Ok(theta
        .iter()
        .zip(cfg.anchor.iter())
        .zip(cfg.fisher.iter())
        .map(|((t, a), f)| 2.0 * cfg.lambda * f * (t - a))
        .collect())
}

/// A loss plus the EWC penalty, differentiable on the tape.
pub struct EwcObjective<'a, F> {
    pub inner: &'a F,
    pub ewc: &'a EwcConfig,
}

impl<F: LossFunction> LossFunction for EwcObjective<'_, F> {
    type Batch = F::Batch;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn record<T: Real>(&self, tape: &mut Tape<T>, params: Var, batch: &Self::Batch) -> Result<Var> {
        let base = self.inner.record(tape, params, batch)?;
        let n = self.ewc.anchor.len();
        let anchor = tape.constant_f64(&self.ewc.anchor, 1, n);
        let fisher = tape.constant_f64(&self.ewc.fisher, 1, n);
        let diff = tape.sub(params, anchor);
        let sq = tape.mul(diff, diff);
        let pen = tape.dot(sq, fisher);
        let pen = tape.scale(pen, self.ewc.lambda);
        Ok(tape.add(base, pen))
    }
}

/// Mean of elementwise squared gradients over `batches`.
pub fn fisher_diag<F: LossFunction>(f: &F, theta: &[f64], batches: &[&F::Batch]) -> Result<ParamVector> {
    if batches.is_empty() {
        return Err(Error::Domain("Fisher estimate needs at least one batch".into()));
    }
    let mut acc = vec![0.0; theta.len()];
    for b in batches {
        let (_, g) = value_and_grad(f, theta, b)?;
        for (a, x) in acc.iter_mut().zip(g.iter()) {
            *a += x * x;
        }
    }
    let k = batches.len() as f64;
    ParamVector::new(acc.into_iter().map(|a| a / k).collect())
}

/// Fisher diagonal of a language model on `n_batches` seeded batches of `spec`.
pub fn fisher_diag_for_model(
    state: &ModelState,
    spec: &CorpusSpec,
    n_batches: usize,
    seed: u64,
    shape: BatchShape,
) -> Result<ParamVector> {
    if n_batches == 0 {
        return Err(Error::Domain("n_batches must be >= 1".into()));
    }
    let mut sampler = TrainSampler::from_spec(spec, shape, seed)?;
    let batches: Vec<_> = (0..n_batches).map(|_| sampler.next_batch()).collect();
    let refs: Vec<_> = batches.iter().collect();
    fisher_diag(&state.objective(), state.params(), &refs)
}
