use super::manifest::{FinetuneManifest, PretrainManifest, RunManifest};
use super::store::{RunRecord, RunStatus, RunStore};
use super::tradeoff::{FailedRun, TradeoffPoint, TradeoffSet};
use crate::autodiff::{value_and_grad, LossFunction, ParamVector};
use crate::data::{EvalSet, TokenBatch, TrainSampler};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::optim::{adamw_step, fisher_diag_for_model, sam_step, AdamWState, EwcConfig, EwcObjective};
use crate::persistence::{save_checkpoint, Dtype};
use crate::schedule::{lr_at, phase_at, OptimizerTag, PhasePlan, ScheduleSpec};
use rayon::prelude::*;
use std::sync::Arc;
use std::time::Instant;

/// Pretraining validation losses below `base - ALARM_MARGIN` are flagged.
pub const ALARM_MARGIN: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub record: RunRecord,
    /// True when an earlier identical run was reused from the store.
    pub reused: bool,
}

struct TraceRow {
    step: u64,
    lr: f64,
    optimizer: OptimizerTag,
    loss: f64,
}

fn write_trace(store: &RunStore, run_id: &str, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "lr", "optimizer", "loss"])?;
    for r in rows {
        let opt = match r.optimizer {
            OptimizerTag::Adamw => "adamw",
            OptimizerTag::Sam => "sam",
        };
        w.write_record([r.step.to_string(), r.lr.to_string(), opt.to_string(), r.loss.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::persistence::write_atomic(&store.trace_path(run_id), &bytes)
}

struct LoopSpec<'a> {
    schedule: &'a ScheduleSpec,
    phases: &'a PhasePlan,
    optim: &'a crate::optim::OptimConfig,
    sam: &'a crate::optim::SamConfig,
    save_steps: &'a [u64],
}

struct LoopResult {
    params: ParamVector,
    saved: Vec<u64>,
    grad_evals: u64,
    error: Option<Error>,
}

/// The shared step loop. Stops at the first failure and reports it alongside
/// whatever checkpoints were already written.
fn train_loop<F: LossFunction<Batch = TokenBatch>>(
    store: &RunStore,
    run_id: &str,
    state: &ModelState,
    f: &F,
    sampler: &mut TrainSampler,
    spec: &LoopSpec,
) -> Result<LoopResult> {
    let mut params = state.params().clone();
    let mut opt = AdamWState::new(params.len());
    let mut trace = Vec::new();
    let mut saved = Vec::new();
    let mut grad_evals = 0;
    let save = |p: &ParamVector, opt: &AdamWState, step: u64| -> Result<()> {
        let s = state.with_params(p.clone())?;
        save_checkpoint(&store.checkpoint_path(run_id, step), &s, Some(opt), Dtype::F64)
    };
    if spec.save_steps.contains(&0) {
        save(&params, &opt, 0)?;
        saved.push(0);
    }
    let total = spec.schedule.total_steps();
    let mut error = None;
    for t in 0..total {
        let lr = lr_at(spec.schedule, t)?;
        let batch = sampler.next_batch();
        let tag = phase_at(spec.phases, t);
        let step = match tag {
            OptimizerTag::Adamw => value_and_grad(f, &params, &batch).and_then(|(loss, g)| {
                adamw_step(&mut params, &g, &mut opt, lr, spec.optim)?;
                Ok((loss, 1))
            }),
            OptimizerTag::Sam => {
                sam_step(&mut params, &batch, f, &mut opt, lr, spec.sam, spec.optim).map(|o| (o.loss, o.grad_evals))
            }
        };
        match step {
            Ok((loss, evals)) => {
                grad_evals += evals as u64;
                trace.push(TraceRow { step: t, lr, optimizer: tag, loss });
            }
            Err(e) => {
                log::error!("run {run_id} failed at step {t}: {e}");
                error = Some(e);
                break;
            }
        }
        if spec.save_steps.contains(&(t + 1)) {
            save(&params, &opt, t + 1)?;
            saved.push(t + 1);
        }
    }
    write_trace(store, run_id, &trace)?;
    Ok(LoopResult { params, saved, grad_evals, error })
}

fn reuse(store: &RunStore, run_id: &str) -> Result<Option<RunOutcome>> {
    match store.read_record(run_id)? {
        Some(r) if r.status == RunStatus::Ok => {
            log::info!("reusing run {run_id}");
            Ok(Some(RunOutcome { run_id: run_id.to_string(), record: r, reused: true }))
        }
        _ => Ok(None),
    }
}

/// Train from initialisation following the manifest's schedule and phase plan.
///
/// An identical earlier run in the store is reused. On numeric failure the
/// checkpoints written so far stay on disk and the error is returned.
pub fn pretrain(store: &RunStore, m: &PretrainManifest) -> Result<RunOutcome> {
    m.validate()?;
    let manifest = RunManifest::Pretrain(m.clone());
    let run_id = store.write_manifest(&manifest)?;
    if let Some(o) = reuse(store, &run_id)? {
        return Ok(o);
    }
    let start = Instant::now();
    let state = ModelState::init(&m.model)?;
    let stream = store.corpora().get_or_generate(&m.corpus)?;
    let mut sampler = TrainSampler::new(Arc::new(stream), m.batch, m.data_seed)?;
    let save_steps = m.save_steps();
    let spec = LoopSpec { schedule: &m.schedule, phases: &m.phases, optim: &m.optim, sam: &m.sam, save_steps: &save_steps };
    let res = train_loop(store, &run_id, &state, &state.objective(), &mut sampler, &spec)?;
    let record = RunRecord {
        run_id: run_id.clone(),
        status: if res.error.is_some() { RunStatus::Failed } else { RunStatus::Ok },
        checkpoints: res.saved,
        wall_seconds: start.elapsed().as_secs_f64(),
        grad_evals: res.grad_evals,
        error: res.error.as_ref().map(|e| e.to_string()),
        losses: None,
    };
    store.write_record(&record)?;
    match res.error {
        Some(e) => Err(e),
        None => Ok(RunOutcome { run_id, record, reused: false }),
    }
}

/// The pretraining manifest behind `run_id`.
pub fn parent_manifest(store: &RunStore, run_id: &str) -> Result<PretrainManifest> {
    match store.read_manifest(run_id)? {
        RunManifest::Pretrain(p) => Ok(p),
        RunManifest::Finetune(_) => Err(Error::Config(format!("run {run_id} is a fine-tune, not a pretraining run"))),
    }
}

/// Load a saved parent checkpoint, with a not-found error naming what is missing.
pub fn load_parent(store: &RunStore, run_id: &str, step: u64) -> Result<ModelState> {
    parent_manifest(store, run_id)?;
    let path = store.checkpoint_path(run_id, step);
    if !path.exists() {
        return Err(Error::NotFound(format!("checkpoint at step {step} of run {run_id}")));
    }
    store.load_checkpoint(run_id, step)
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub run: RunOutcome,
    pub point: TradeoffPoint,
}

/// Both validation losses of `state` under `m.eval`: `(L_FT, L_PT)`.
pub fn tradeoff_losses(state: &ModelState, m: &FinetuneManifest) -> Result<(f64, f64)> {
    let e = &m.eval;
    let ft = EvalSet::new(&e.ft, e.batch, e.max_batches)?.loss(state)?;
    let pt = EvalSet::new(&e.pt, e.batch, e.max_batches)?.loss(state)?;
    Ok((ft, pt))
}

/// AdamW with cosine decay and linear warmup from a parent checkpoint, then
/// both validation losses of the result. The final weights are saved.
pub fn finetune(store: &RunStore, m: &FinetuneManifest) -> Result<FinetuneOutcome> {
    m.validate()?;
    let run_id = store.write_manifest(&RunManifest::Finetune(m.clone()))?;
    let point = |losses: (f64, f64)| TradeoffPoint { ft_lr: m.lr, l_ft: losses.0, l_pt: losses.1, ft_run_id: run_id.clone() };
    if let Some(o) = reuse(store, &run_id)? {
        if let Some(l) = o.record.losses {
            return Ok(FinetuneOutcome { point: point(l), run: o });
        }
    }
    let start = Instant::now();
    let parent = parent_manifest(store, &m.parent_run_id)?;
    let state = load_parent(store, &m.parent_run_id, m.parent_step)?;
    let stream = store.corpora().get_or_generate(&m.corpus)?;
    let mut sampler = TrainSampler::new(Arc::new(stream), m.batch, m.data_seed)?;
    let schedule = m.schedule();
    let phases = PhasePlan::all_adamw(m.steps);
    let sam = crate::optim::SamConfig { rho: 0.0 };
    let save_steps = [m.steps];
    let spec = LoopSpec { schedule: &schedule, phases: &phases, optim: &m.optim, sam: &sam, save_steps: &save_steps };
    let objective = state.objective();
    let res = match &m.ewc {
        None => train_loop(store, &run_id, &state, &objective, &mut sampler, &spec)?,
        Some(e) => {
            let fisher = fisher_diag_for_model(&state, &parent.corpus, e.fisher_batches, e.fisher_seed, m.batch)?;
            let cfg = EwcConfig::new(e.lambda, fisher, state.params().clone())?;
            let obj = EwcObjective { inner: &objective, ewc: &cfg };
            train_loop(store, &run_id, &state, &obj, &mut sampler, &spec)?
        }
    };
    let losses = match &res.error {
        None => Some(tradeoff_losses(&state.with_params(res.params)?, m)).transpose(),
        Some(_) => Ok(None),
    };
    let (status, error, losses) = match (res.error, losses) {
        (None, Ok(l)) => (RunStatus::Ok, None, l),
        (Some(e), _) | (None, Err(e)) => (RunStatus::Failed, Some(e), None),
    };
    let record = RunRecord {
        run_id: run_id.clone(),
        status,
        checkpoints: res.saved,
        wall_seconds: start.elapsed().as_secs_f64(),
        grad_evals: res.grad_evals,
        error: error.as_ref().map(|e| e.to_string()),
        losses,
    };
    store.write_record(&record)?;
    match (error, losses) {
        (Some(e), _) => Err(e),
        (None, Some(l)) => Ok(FinetuneOutcome { point: point(l), run: RunOutcome { run_id, record, reused: false } }),
        (None, None) => unreachable!("successful fine-tunes always have losses"),
    }
}

/// One fine-tune per learning rate from the same parent. Failed runs are kept
/// in `failures` and left out of `points`; if every run fails the sweep fails.
pub fn sweep(store: &RunStore, template: &FinetuneManifest, lrs: &[f64], jobs: usize) -> Result<TradeoffSet> {
    template.validate()?;
    let parent = load_parent(store, &template.parent_run_id, template.parent_step)?;
    let (base_l_ft, base_l_pt) = tradeoff_losses(&parent, template)?;
    let run = |lr: &f64| {
        let m = template.with_lr(*lr);
        (m.clone(), finetune(store, &m))
    };
    let results: Vec<_> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| lrs.par_iter().map(run).collect())
    } else {
        lrs.iter().map(run).collect()
    };
    let mut set = TradeoffSet {
        parent_run_id: template.parent_run_id.clone(),
        parent_step: template.parent_step,
        base_l_pt,
        base_l_ft,
        points: Vec::new(),
        failures: Vec::new(),
        alarms: Vec::new(),
    };
    for (m, r) in results {
        match r {
            Ok(o) => {
                if o.point.l_pt < base_l_pt - ALARM_MARGIN {
                    let msg = format!(
                        "calibration alarm: fine-tune {} at lr {} has L_PT {:.4} below base {:.4}",
                        o.point.ft_run_id, o.point.ft_lr, o.point.l_pt, base_l_pt
                    );
                    log::warn!("{msg}");
                    set.alarms.push(msg);
                }
                set.points.push(o.point);
            }
            Err(e) => {
                set.failures.push(FailedRun { ft_lr: m.lr, ft_run_id: RunManifest::Finetune(m).run_id()?, error: e.to_string() })
            }
        }
    }
    if !lrs.is_empty() && set.points.is_empty() {
        return Err(Error::Numeric { what: format!("all {} fine-tunes of the sweep failed", lrs.len()), index: None });
    }
    Ok(set)
}
