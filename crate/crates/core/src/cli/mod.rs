//! The `sharplab` command line. Each subcommand loads a config, calls into the
//! library, prints a JSON summary and writes its files under the output root.

pub mod config;

pub use config::{
    apply_override, CurvatureSection, ExperimentConfig, FinetuneSection, OptimizerChoice, PretrainSection,
    ProbeSection, ScheduleConfig, ScheduleVariant,
};

use crate::curvature::{
    curvature_subsample, directional_sharpness, hessian_trace, lambda_max, quadratic_forgetting_prediction,
    write_curvature_csv, CurvatureEstimate, CurvatureKind,
};
use crate::data::{EvalSet, TokenBatch};
use crate::error::{Error, Result};
use crate::harness::{
    append_results_index, finetune, load_parent, matched_ft_threshold, pareto_frontier, pretrain,
    read_results_index, sweep, RunManifest, RunStore, TradeoffSet,
};
use crate::persistence::{canonical_json, canonical_json_pretty, content_hash, write_atomic};
use crate::probes::{probe_sweep, write_probe_csv, ProbeResult, ProbeSpec};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "sharplab", version, about = "Sharpness-aware pretraining experiments on tiny language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output root.
    #[arg(long, global = true, env = "SHLB_OUT", default_value = "shlb_out")]
    pub out: PathBuf,

    /// Dotted `key=value` override, repeatable. Values are JSON, else strings.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads for sweeps and probes.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured model from initialisation.
    Pretrain,
    /// Fine-tune the parent checkpoint at every configured learning rate.
    FinetuneSweep,
    /// Quantise the parent checkpoint and measure pretraining loss.
    ProbeQuant,
    /// Gaussian weight noise on the parent checkpoint.
    ProbeNoise,
    /// Trace, top eigenvalue and directional sharpness at the parent checkpoint.
    Curvature,
    /// Pareto frontier of one parent's fine-tunes from the results index.
    Pareto {
        #[arg(long)]
        parent: Option<String>,
    },
    /// Matched fine-tuning threshold across saved sweeps.
    Threshold {
        /// Restrict to these parent runs; default is every saved sweep.
        #[arg(long)]
        parent: Vec<String>,
    },
    /// Frontier and quantised-loss tables for AdamW and SAM pretraining.
    Report,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) | Error::Input(_) => 2,
        Error::NotFound(_) => 3,
        Error::Numeric { .. } => 4,
        Error::Corrupt(_) | Error::Version { .. } => 5,
        Error::Io(_) | Error::Csv(_) | Error::Structure(_) => 1,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Numeric { .. } => "numeric",
        Error::Config(_) | Error::Json(_) => "config",
        Error::Input(_) => "input",
        Error::Structure(_) => "structure",
        Error::Domain(_) => "domain",
        Error::Corrupt(_) => "corrupt",
        Error::Version { .. } => "version",
        Error::NotFound(_) => "not_found",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
    }
}

/// The JSON object written to stderr on failure.
pub fn error_json(e: &Error) -> Value {
    json!({ "error": { "kind": error_kind(e), "message": e.to_string(), "exit_code": exit_code(e) } })
}

struct Ctx {
    cfg: ExperimentConfig,
    store: RunStore,
    root: PathBuf,
    jobs: usize,
}

impl Ctx {
    /// Write `bytes` to `rel` under the root with the resolved config beside it.
    fn emit(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes)?;
        let mut cfg_path = path.clone().into_os_string();
        cfg_path.push(".config.json");
        write_atomic(Path::new(&cfg_path), canonical_json_pretty(&self.cfg)?.as_bytes())?;
        Ok(path)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.jobs)))
    }
}

pub fn run(cli: &Cli) -> Result<Value> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let text = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let cfg = ExperimentConfig::load(text.as_deref(), &cli.overrides)?;
    let ctx = Ctx { cfg, store: RunStore::open(&cli.out)?, root: cli.out.clone(), jobs: cli.jobs };
    match &cli.command {
        Command::Pretrain => cmd_pretrain(&ctx),
        Command::FinetuneSweep => cmd_sweep(&ctx).map(|(v, _)| v),
        Command::ProbeQuant => cmd_probe(&ctx, true),
        Command::ProbeNoise => cmd_probe(&ctx, false),
        Command::Curvature => cmd_curvature(&ctx),
        Command::Pareto { parent } => cmd_pareto(&ctx, parent.clone()),
        Command::Threshold { parent } => cmd_threshold(&ctx, parent),
        Command::Report => cmd_report(&ctx),
    }
}

fn cmd_pretrain(ctx: &Ctx) -> Result<Value> {
    let m = ctx.cfg.pretrain_manifest()?;
    let out = pretrain(&ctx.store, &m)?;
    Ok(json!({
        "run_id": out.run_id,
        "reused": out.reused,
        "checkpoints": out.record.checkpoints,
        "run_dir": ctx.store.run_dir(&out.run_id),
    }))
}

fn sweep_key(template: &crate::harness::FinetuneManifest) -> Result<String> {
    let h = content_hash(&canonical_json(&RunManifest::Finetune(template.clone()))?);
    Ok(format!("{}-{}-{}", template.parent_run_id, template.parent_step, &h[..12]))
}

fn cmd_sweep(ctx: &Ctx) -> Result<(Value, TradeoffSet)> {
    let template = ctx.cfg.finetune_template()?;
    let set = sweep(&ctx.store, &template, &ctx.cfg.finetune.lrs, ctx.jobs)?;
    let appended = append_results_index(&ctx.store.results_index_path(), &set)?;
    let path = ctx.emit(&format!("sweeps/{}.json", sweep_key(&template)?), canonical_json_pretty(&set)?.as_bytes())?;
    let v = json!({ "sweep": path, "appended_index_rows": appended, "result": set });
    Ok((v, set))
}

fn parent_eval(ctx: &Ctx) -> Result<(String, u64, crate::model::ModelState, EvalSet)> {
    let (id, step) = ctx.cfg.parent()?;
    let state = load_parent(&ctx.store, &id, step)?;
    let e = &ctx.cfg.eval;
    let eval = EvalSet::new(&e.pt, e.batch, e.max_batches)?;
    Ok((id, step, state, eval))
}

fn run_probes(ctx: &Ctx, quant: bool) -> Result<(String, u64, Vec<ProbeResult>)> {
    let (id, step, state, eval) = parent_eval(ctx)?;
    let specs: Vec<ProbeSpec> = ctx
        .cfg
        .probe_specs()?
        .into_iter()
        .filter(|s| matches!(s, ProbeSpec::Quant { .. }) == quant)
        .collect();
    let results = ctx.pool()?.install(|| probe_sweep(&state, &specs, &eval))?;
    Ok((id, step, results))
}

fn cmd_probe(ctx: &Ctx, quant: bool) -> Result<Value> {
    let (id, step, results) = run_probes(ctx, quant)?;
    let mut buf = Vec::new();
    write_probe_csv(&mut buf, &id, &results, true)?;
    let name = if quant { "quant" } else { "noise" };
    let path = ctx.emit(&format!("probes/{id}-{step}-{name}.csv"), &buf)?;
    Ok(json!({ "csv": path, "parent_run_id": id, "parent_step": step, "results": results }))
}

fn cmd_curvature(ctx: &Ctx) -> Result<Value> {
    let (id, step, state, eval) = parent_eval(ctx)?;
    let c = &ctx.cfg.curvature;
    let owned: Vec<TokenBatch> = curvature_subsample(&eval, c.batches, c.batch_seed);
    let batches: Vec<&TokenBatch> = owned.iter().collect();
    let f = state.objective();
    let theta = state.params().as_slice();
    let trace = hessian_trace(&f, theta, c.trace_probes, &batches, c.seed)?;
    let top = lambda_max(&f, theta, c.power_iters, c.power_tol, &batches, c.seed)?;
    let est = |kind, value, probes_or_iters| CurvatureEstimate {
        kind,
        value,
        batches_used: batches.len(),
        probes_or_iters,
        seed: c.seed,
        batch_seed: c.batch_seed,
    };
    let mut rows = vec![
        est(CurvatureKind::Trace, trace.mean, c.trace_probes),
        est(CurvatureKind::LambdaMax, top.magnitude, top.iterations),
    ];

    // Direction of the canonical fine-tune, run now if the store lacks it.
    let template = ctx.cfg.finetune_template()?;
    let ft = finetune(&ctx.store, &template.with_lr(ctx.cfg.finetune.canonical_lr))?;
    let tuned = ctx.store.load_checkpoint(&ft.run.run_id, template.steps)?;
    let delta = tuned.params().sub(state.params())?;
    let prediction = if delta.norm() > 0.0 {
        rows.push(est(CurvatureKind::Directional, directional_sharpness(&f, theta, &delta, &batches)?, 1));
        Some(quadratic_forgetting_prediction(&f, theta, &delta, &batches)?)
    } else {
        log::warn!("canonical fine-tune {} did not move the weights; skipping directional sharpness", ft.run.run_id);
        None
    };

    let mut buf = Vec::new();
    write_curvature_csv(&mut buf, &id, &rows, true)?;
    let csv_path = ctx.emit(&format!("curvature/{id}-{step}.csv"), &buf)?;
    let summary = json!({
        "parent_run_id": id,
        "parent_step": step,
        "ft_run_id": ft.run.run_id,
        "trace": trace,
        "lambda_max": top,
        "estimates": rows,
        "prediction": prediction,
    });
    let json_path = ctx.emit(&format!("curvature/{id}-{step}.json"), canonical_json_pretty(&summary)?.as_bytes())?;
    Ok(json!({ "csv": csv_path, "json": json_path, "result": summary }))
}

fn cmd_pareto(ctx: &Ctx, parent: Option<String>) -> Result<Value> {
    let parent = match parent {
        Some(p) => p,
        None => ctx.cfg.parent()?.0,
    };
    let points: Vec<_> = read_results_index(&ctx.store.results_index_path())?
        .into_iter()
        .filter(|r| r.parent_run_id == parent)
        .filter_map(|r| r.point())
        .collect();
    if points.is_empty() {
        return Err(Error::NotFound(format!("no successful fine-tunes of {parent} in the results index")));
    }
    let frontier = pareto_frontier(&points, &parent)?;
    let path = ctx.emit(&format!("reports/frontier-{parent}.json"), canonical_json_pretty(&frontier)?.as_bytes())?;
    Ok(json!({ "json": path, "result": frontier }))
}

/// Every saved sweep, optionally restricted to some parents, in file-name order.
fn saved_sweeps(root: &Path, parents: &[String]) -> Result<Vec<TradeoffSet>> {
    let dir = root.join("sweeps");
    let mut files: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".config.json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    files.sort();
    let mut sets = Vec::new();
    for f in files {
        let set: TradeoffSet = serde_json::from_slice(&std::fs::read(&f)?)
            .map_err(|e| Error::Corrupt(format!("sweep file {}: {e}", f.display())))?;
        if parents.is_empty() || parents.contains(&set.parent_run_id) {
            sets.push(set);
        }
    }
    for p in parents {
        if !sets.iter().any(|s| &s.parent_run_id == p) {
            return Err(Error::NotFound(format!("no saved sweep for parent {p}")));
        }
    }
    Ok(sets)
}

fn cmd_threshold(ctx: &Ctx, parents: &[String]) -> Result<Value> {
    let sets = saved_sweeps(&ctx.root, parents)?;
    if sets.is_empty() {
        return Err(Error::NotFound("no saved sweeps".into()));
    }
    let report = matched_ft_threshold(&sets)?;
    let path = ctx.emit("reports/threshold.json", canonical_json_pretty(&report)?.as_bytes())?;
    Ok(json!({ "json": path, "result": report }))
}

fn cmd_report(ctx: &Ctx) -> Result<Value> {
    let mut frontier = csv::Writer::from_writer(Vec::new());
    frontier.write_record(["optimizer", "parent_run_id", "ft_run_id", "ft_lr", "L_FT", "L_PT"])?;
    let mut quant = csv::Writer::from_writer(Vec::new());
    quant.write_record(["optimizer", "run_id", "probe", "base_loss", "quantized_loss", "degradation"])?;
    let mut summary = Vec::new();
    for (label, choice) in [("adamw", OptimizerChoice::Adamw), ("sam", OptimizerChoice::Sam)] {
        let mut cfg = ctx.cfg.clone();
        cfg.pretrain.optimizer = choice;
        cfg.finetune.parent_run_id = None;
        let sub = Ctx { cfg, store: ctx.store.clone(), root: ctx.root.clone(), jobs: ctx.jobs };
        let pre = pretrain(&sub.store, &sub.cfg.pretrain_manifest()?)?;
        let (_, set) = cmd_sweep(&sub)?;
        let front = pareto_frontier(&set.points, &pre.run_id)?;
        for p in &front.points {
            frontier.write_record([
                label,
                &pre.run_id,
                &p.ft_run_id,
                &p.ft_lr.to_string(),
                &p.l_ft.to_string(),
                &p.l_pt.to_string(),
            ])?;
        }
        let (_, _, probes) = run_probes(&sub, true)?;
        for r in &probes {
            quant.write_record([
                label,
                &pre.run_id,
                &r.spec.kind_label(),
                &r.base_loss.to_string(),
                &r.perturbed_loss.to_string(),
                &r.degradation.to_string(),
            ])?;
        }
        summary.push(json!({ "optimizer": label, "run_id": pre.run_id, "frontier": front.points, "quant": probes }));
    }
    let bytes = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::Io(e.into_error()));
    let f = ctx.emit("reports/frontier_by_optimizer.csv", &bytes(frontier)?)?;
    let q = ctx.emit("reports/quant_by_optimizer.csv", &bytes(quant)?)?;
    Ok(json!({ "frontier_csv": f, "quant_csv": q, "optimizers": summary }))
}
