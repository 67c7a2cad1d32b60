//! Hessian-vector-product diagnostics: directional sharpness, the quadratic
//! forgetting model, Hutchinson trace and the top eigenvalue.
//!
//! Every estimate averages over an explicit list of batches; the Hessian is
//! batch dependent, so the batches (and the seed that chose them) travel with
//! the result.

use crate::autodiff::{dot, evaluate, grad_and_hvp, hvp, norm, LossFunction};
use crate::data::{EvalSet, TokenBatch};
use crate::error::{Error, Result};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Validation batches used for every curvature estimate.
pub const CURVATURE_BATCHES: usize = 16;

/// A seeded subsample of `n` distinct batches from `eval`, in ascending index order.
pub fn curvature_subsample(eval: &EvalSet, n: usize, seed: u64) -> Vec<TokenBatch> {
    let total = eval.batches().len();
    let take = n.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, total, take).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| eval.batches()[i].clone()).collect()
}

fn check_batches<B: ?Sized>(batches: &[&B]) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::Domain("curvature estimate needs at least one batch".into()));
    }
    Ok(())
}

/// Mean over batches of `vᵀ H_b v`.
fn mean_quadratic_form<F: LossFunction>(f: &F, theta: &[f64], v: &[f64], batches: &[&F::Batch]) -> Result<f64> {
    let mut s = 0.0;
    for b in batches {
        s += dot(v, &hvp(f, theta, v, b)?);
    }
    Ok(s / batches.len() as f64)
}

/// Mean over batches of `H_b v`.
fn mean_hvp<F: LossFunction>(f: &F, theta: &[f64], v: &[f64], batches: &[&F::Batch]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; theta.len()];
    for b in batches {
        for (a, x) in acc.iter_mut().zip(hvp(f, theta, v, b)?.iter()) {
            *a += x;
        }
    }
    let k = batches.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// `κ = Δᵀ H Δ / ‖Δ‖²`, averaged over batches. Invariant to rescaling `Δ`.
pub fn directional_sharpness<F: LossFunction>(
    f: &F,
    theta: &[f64],
    delta: &[f64],
    batches: &[&F::Batch],
) -> Result<f64> {
    check_batches(batches)?;
    let n = norm(delta);
    if n == 0.0 {
        return Err(Error::Domain("directional sharpness needs a nonzero direction".into()));
    }
    let u: Vec<f64> = delta.iter().map(|x| x / n).collect();
    mean_quadratic_form(f, theta, &u, batches)
}

/// Second-order model of the loss after moving by `Δ`, next to the observed loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingPrediction {
    pub base_loss: f64,
    /// `g · Δ`.
    pub gradient_term: f64,
    /// `½ Δᵀ H Δ`.
    pub quadratic_term: f64,
    pub delta_norm: f64,
    /// `None` when `Δ = 0`.
    pub sharpness: Option<f64>,
    /// Loss at `θ + Δ` on the same batches.
    pub observed: f64,
}

impl ForgettingPrediction {
    pub fn predicted(&self, include_gradient_term: bool) -> f64 {
        let g = if include_gradient_term { self.gradient_term } else { 0.0 };
        self.base_loss + g + self.quadratic_term
    }
}

pub fn quadratic_forgetting_prediction<F: LossFunction>(
    f: &F,
    theta: &[f64],
    delta: &[f64],
    batches: &[&F::Batch],
) -> Result<ForgettingPrediction> {
    check_batches(batches)?;
    if delta.len() != theta.len() {
        return Err(Error::Structure(format!("Δ has {} entries, θ has {}", delta.len(), theta.len())));
    }
    let (mut loss, mut gterm, mut q, mut observed) = (0.0, 0.0, 0.0, 0.0);
    let moved: Vec<f64> = theta.iter().zip(delta).map(|(a, b)| a + b).collect();
    for b in batches {
        let so = grad_and_hvp(f, theta, delta, b)?;
        loss += so.loss;
        gterm += dot(&so.grad, delta);
        q += dot(&so.hv, delta);
        observed += evaluate(f, &moved, b)?;
    }
    let k = batches.len() as f64;
    let dn = norm(delta);
    let quad = q / k;
    Ok(ForgettingPrediction {
        base_loss: loss / k,
        gradient_term: gterm / k,
        quadratic_term: 0.5 * quad,
        delta_norm: dn,
        sharpness: (dn > 0.0).then(|| quad / (dn * dn)),
        observed: observed / k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub per_probe: Vec<f64>,
}

/// Hutchinson estimate `E[zᵀ H z]` with Rademacher `z`.
pub fn hessian_trace<F: LossFunction>(
    f: &F,
    theta: &[f64],
    n_probes: usize,
    batches: &[&F::Batch],
    seed: u64,
) -> Result<TraceEstimate> {
    check_batches(batches)?;
    if n_probes == 0 {
        return Err(Error::Domain("n_probes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_probe = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        let z: Vec<f64> = (0..theta.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        per_probe.push(mean_quadratic_form(f, theta, &z, batches)?);
    }
    let n = per_probe.len() as f64;
    let mean = per_probe.iter().sum::<f64>() / n;
    let std_error = if per_probe.len() > 1 {
        let var = per_probe.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(TraceEstimate { mean, std_error, per_probe })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    /// Largest `|λ|`.
    pub magnitude: f64,
    /// `vᵀ H v` at the final iterate; carries the sign of that eigenvalue.
    pub rayleigh: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the dominant eigenvalue of the batch-mean Hessian.
pub fn lambda_max<F: LossFunction>(
    f: &F,
    theta: &[f64],
    max_iters: usize,
    tol: f64,
    batches: &[&F::Batch],
    seed: u64,
) -> Result<EigenEstimate> {
    check_batches(batches)?;
    if max_iters == 0 {
        return Err(Error::Domain("max_iters must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..theta.len()).map(|_| rng.sample(StandardNormal)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut prev = f64::NAN;
    let mut est = EigenEstimate { magnitude: 0.0, rayleigh: 0.0, iterations: 0, converged: false };
    for it in 1..=max_iters {
        let w = mean_hvp(f, theta, &v, batches)?;
        let mag = norm(&w);
        est = EigenEstimate { magnitude: mag, rayleigh: dot(&v, &w), iterations: it, converged: false };
        if mag == 0.0 {
            est.converged = true;
            break;
        }
        if (mag - prev).abs() <= tol * mag {
            est.converged = true;
            break;
        }
        prev = mag;
        v = w.into_iter().map(|x| x / mag).collect();
    }
    if !est.converged {
        log::warn!("power iteration did not converge in {max_iters} iterations");
    }
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Directional,
    Trace,
    LambdaMax,
}

impl CurvatureKind {
    pub fn label(self) -> &'static str {
        match self {
            CurvatureKind::Directional => "directional",
            CurvatureKind::Trace => "trace",
            CurvatureKind::LambdaMax => "lambda_max",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub kind: CurvatureKind,
    pub value: f64,
    pub batches_used: usize,
    /// Probe count for traces, iterations for eigenvalues, 1 otherwise.
    pub probes_or_iters: usize,
    pub seed: u64,
    pub batch_seed: u64,
}

pub const CURVATURE_CSV_HEADER: [&str; 6] = ["run_id", "kind", "value", "n_probes_or_iters", "seed", "batch_seed"];

pub fn write_curvature_csv<W: Write>(out: W, run_id: &str, rows: &[CurvatureEstimate], header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(CURVATURE_CSV_HEADER)?;
    }
    for r in rows {
        w.write_record([
            run_id,
            r.kind.label(),
            &r.value.to_string(),
            &r.probes_or_iters.to_string(),
            &r.seed.to_string(),
            &r.batch_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
