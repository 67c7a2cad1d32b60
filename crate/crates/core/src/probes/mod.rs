//! Post-training weight perturbations and the loss degradation they cause.

mod noise;
mod quant;

pub use noise::{gaussian_perturb, GAMMA_GRID};
pub use quant::{
    exempt_tensors, is_exempt, quantize, quantize_block, quantize_values, QuantBits, DEFAULT_BLOCK_SIZE, NF4_LEVELS,
};

use crate::data::EvalSet;
use crate::error::{Error, Result};
use crate::model::ModelState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const MIN_GAUSSIAN_SEEDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Gaussian { gamma: f64, seeds: Vec<u64> },
    Quant { bits: QuantBits, #[serde(default = "default_block")] block_size: usize },
}

fn default_block() -> usize {
    DEFAULT_BLOCK_SIZE
}

impl ProbeSpec {
    pub fn gaussian(gamma: f64, seeds: &[u64]) -> Self {
        ProbeSpec::Gaussian { gamma, seeds: seeds.to_vec() }
    }

    pub fn quant(bits: QuantBits) -> Self {
        ProbeSpec::Quant { bits, block_size: DEFAULT_BLOCK_SIZE }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProbeSpec::Gaussian { gamma, seeds } => {
                if !(*gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::Config(format!("gamma {gamma} must be finite and >= 0")));
                }
                if seeds.len() < MIN_GAUSSIAN_SEEDS {
                    return Err(Error::Config(format!(
                        "gaussian probe needs at least {MIN_GAUSSIAN_SEEDS} seeds, got {}",
                        seeds.len()
                    )));
                }
            }
            ProbeSpec::Quant { block_size, .. } => {
                if *block_size < 2 {
                    return Err(Error::Config(format!("block_size {block_size} must be >= 2")));
                }
            }
        }
        Ok(())
    }

    /// Short label for CSV output.
    pub fn kind_label(&self) -> String {
        match self {
            ProbeSpec::Gaussian { .. } => "gaussian".into(),
            ProbeSpec::Quant { bits, .. } => format!("quant{}", bits.bits()),
        }
    }

    /// The swept parameter: γ, or the block size for quantisation.
    pub fn param(&self) -> f64 {
        match self {
            ProbeSpec::Gaussian { gamma, .. } => *gamma,
            ProbeSpec::Quant { block_size, .. } => *block_size as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedLoss {
    pub seed: u64,
    pub perturbed_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub spec: ProbeSpec,
    pub base_loss: f64,
    /// Seed mean for Gaussian probes.
    pub perturbed_loss: f64,
    /// `perturbed_loss - base_loss`; may be negative.
    pub degradation: f64,
    /// Empty for quantisation.
    pub per_seed: Vec<SeedLoss>,
}

/// Apply one probe and measure validation loss on `eval`.
pub fn run_probe(state: &ModelState, spec: &ProbeSpec, eval: &EvalSet, base_loss: f64) -> Result<ProbeResult> {
    spec.validate()?;
    let (perturbed_loss, per_seed) = match spec {
        ProbeSpec::Gaussian { gamma, seeds } => {
            let per_seed = seeds
                .iter()
                .map(|&seed| {
                    let s = gaussian_perturb(state, *gamma, seed)?;
                    Ok(SeedLoss { seed, perturbed_loss: eval.loss(&s)? })
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = per_seed.iter().map(|s| s.perturbed_loss).sum::<f64>() / per_seed.len() as f64;
            (mean, per_seed)
        }
        ProbeSpec::Quant { bits, block_size } => (eval.loss(&quantize(state, *bits, *block_size)?)?, Vec::new()),
    };
    Ok(ProbeResult { spec: spec.clone(), base_loss, perturbed_loss, degradation: perturbed_loss - base_loss, per_seed })
}

/// One result per spec, in input order, all measured on the same batches.
pub fn probe_sweep(state: &ModelState, specs: &[ProbeSpec], eval: &EvalSet) -> Result<Vec<ProbeResult>> {
    if specs.is_empty() {
        return Ok(Vec::new());
    }
    for s in specs {
        s.validate()?;
    }
    let base = eval.loss(state)?;
    specs.par_iter().map(|s| run_probe(state, s, eval, base)).collect()
}

pub const PROBE_CSV_HEADER: [&str; 7] =
    ["run_id", "probe_kind", "param", "seed", "base_loss", "perturbed_loss", "degradation"];

/// Append results as CSV rows: one per seed plus a `mean` row for Gaussian probes.
pub fn write_probe_csv<W: Write>(out: W, run_id: &str, results: &[ProbeResult], header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(PROBE_CSV_HEADER)?;
    }
    for r in results {
        let kind = r.spec.kind_label();
        let param = r.spec.param().to_string();
        for s in &r.per_seed {
            w.write_record([
                run_id,
                &kind,
                &param,
                &s.seed.to_string(),
                &r.base_loss.to_string(),
                &s.perturbed_loss.to_string(),
                &(s.perturbed_loss - r.base_loss).to_string(),
            ])?;
        }
        let seed = if r.per_seed.is_empty() { "" } else { "mean" };
        w.write_record([
            run_id,
            &kind,
            &param,
            seed,
            &r.base_loss.to_string(),
            &r.perturbed_loss.to_string(),
            &r.degradation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
