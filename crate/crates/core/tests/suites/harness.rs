use sharplab_core::cli::config::ExperimentConfig;
use sharplab_core::data::{entropy_rate, eval_loss, BatchShape, CopyParams, CorpusSpec, Family, Markov2Params, Split};
use sharplab_core::harness::*;
use sharplab_core::model::{ModelConfig, ModelState};
use sharplab_core::optim::{OptimConfig, SamConfig};
use sharplab_core::schedule::{PhasePlan, ScheduleSpec};
use std::path::Path;

const SHAPE: BatchShape = BatchShape { batch_size: 4, seq_len: 16 };

fn tiny_model() -> ModelConfig {
    ModelConfig { layers: 1, heads: 2, hidden_dim: 16, vocab_size: 64, context_len: 16, seed: 3 }
}

fn pt_corpus() -> CorpusSpec {
    CorpusSpec::new(Family::Markov2(Markov2Params::default()), 11, 20_000, Split::Train)
}

fn ft_corpus() -> CorpusSpec {
    CorpusSpec::new(Family::CopyPattern(CopyParams::default()), 12, 20_000, Split::Train)
}

fn tiny_pretrain(steps: u64) -> PretrainManifest {
    PretrainManifest {
        model: tiny_model(),
        corpus: pt_corpus(),
        batch: SHAPE,
        data_seed: 5,
        schedule: ScheduleSpec::wsd(3e-3, steps / 10, steps, 0.2),
        phases: if steps == 0 { PhasePlan::all_adamw(0) } else { PhasePlan::sam_anneal(steps, 0.2).unwrap() },
        optim: OptimConfig::pretrain(),
        sam: SamConfig { rho: 0.05 },
        checkpoint_steps: vec![steps / 2],
    }
}

fn tiny_template(parent: &str, step: u64) -> FinetuneManifest {
    FinetuneManifest {
        parent_run_id: parent.to_string(),
        parent_step: step,
        corpus: ft_corpus(),
        batch: SHAPE,
        data_seed: 9,
        lr: 0.0,
        steps: 10,
        warmup_frac: 0.1,
        optim: OptimConfig::finetune(),
        ewc: None,
        eval: EvalSpec {
            pt: pt_corpus().with_split(Split::Val).with_tokens(2_000),
            ft: ft_corpus().with_split(Split::Val).with_tokens(2_000),
            batch: SHAPE,
            max_batches: 4,
        },
    }
}

fn replay(root: &Path) -> (RunOutcome, TradeoffSet) {
    let store = RunStore::open(root).unwrap();
    let o = pretrain(&store, &tiny_pretrain(30)).unwrap();
    let set = sweep(&store, &tiny_template(&o.run_id, 30), &[1e-4, 1e-3, 1e-2], 1).unwrap();
    append_results_index(&store.results_index_path(), &set).unwrap();
    (o, set)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn manifest_replay_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, sa) = replay(a.path());
    let (ob, sb) = replay(b.path());
    assert_eq!(oa.run_id, ob.run_id);
    assert_eq!(serde_json::to_vec(&sa).unwrap(), serde_json::to_vec(&sb).unwrap());
    let (ra, rb) = (RunStore::open(a.path()).unwrap(), RunStore::open(b.path()).unwrap());
    for step in [15, 30] {
        assert_eq!(read(&ra.checkpoint_path(&oa.run_id, step)), read(&rb.checkpoint_path(&ob.run_id, step)));
    }
    assert_eq!(read(&ra.trace_path(&oa.run_id)), read(&rb.trace_path(&ob.run_id)));
    assert_eq!(read(&ra.results_index_path()), read(&rb.results_index_path()));
    for p in &sa.points {
        assert_eq!(read(&ra.checkpoint_path(&p.ft_run_id, 10)), read(&rb.checkpoint_path(&p.ft_run_id, 10)));
        assert_eq!(read(&ra.trace_path(&p.ft_run_id)), read(&rb.trace_path(&p.ft_run_id)));
    }
    // a replay inside the same store reuses every run
    let again = pretrain(&ra, &tiny_pretrain(30)).unwrap();
    assert!(again.reused);
    assert_eq!(sweep(&ra, &tiny_template(&oa.run_id, 30), &[1e-4, 1e-3, 1e-2], 1).unwrap(), sa);
}

pub fn zero_step_run_persists_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let o = pretrain(&store, &tiny_pretrain(0)).unwrap();
    assert_eq!(o.record.checkpoints, vec![0]);
    assert_eq!(store.load_checkpoint(&o.run_id, 0).unwrap(), ModelState::init(&tiny_model()).unwrap());
}

pub fn run_id_tracks_every_input() {
    let base = RunManifest::Pretrain(tiny_pretrain(30)).run_id().unwrap();
    let mut m = tiny_pretrain(30);
    m.data_seed += 1;
    assert_ne!(RunManifest::Pretrain(m).run_id().unwrap(), base);
    let mut m = tiny_pretrain(30);
    m.sam.rho = 0.1;
    assert_ne!(RunManifest::Pretrain(m).run_id().unwrap(), base);
    assert_eq!(RunManifest::Pretrain(tiny_pretrain(30)).run_id().unwrap(), base);
}

pub fn zero_lr_finetune_reproduces_base_losses() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let o = pretrain(&store, &tiny_pretrain(20)).unwrap();
    let t = tiny_template(&o.run_id, 20);
    let parent = store.load_checkpoint(&o.run_id, 20).unwrap();
    let pt = eval_loss(&parent, &t.eval.pt, t.eval.max_batches, SHAPE).unwrap();
    let ft = eval_loss(&parent, &t.eval.ft, t.eval.max_batches, SHAPE).unwrap();
    let p = finetune(&store, &t).unwrap().point;
    assert_eq!((p.l_pt, p.l_ft), (pt, ft));
    assert_eq!(finetune(&store, &t).unwrap().point, p);

    let set = sweep(&store, &t, &[], 1).unwrap();
    assert!(set.points.is_empty() && set.failures.is_empty());
    assert_eq!((set.base_l_pt, set.base_l_ft), (pt, ft));
}

pub fn diverging_finetunes_are_recorded_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let o = pretrain(&store, &tiny_pretrain(20)).unwrap();
    let t = tiny_template(&o.run_id, 20);
    let set = sweep(&store, &t, &[1e-3, 1e300], 1).unwrap();
    assert_eq!(set.points.len(), 1);
    assert_eq!(set.failures.len(), 1);
    assert_eq!(set.failures[0].ft_lr, 1e300);
    assert_eq!(pareto_frontier(&set.points, "x").unwrap().points.len(), 1);
    assert!(sweep(&store, &t, &[1e300], 1).is_err());
}

pub fn finetune_of_a_missing_parent_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let o = pretrain(&store, &tiny_pretrain(10)).unwrap();
    assert!(matches!(finetune(&store, &tiny_template(&o.run_id, 7)), Err(sharplab_core::Error::NotFound(_))));
    assert!(finetune(&store, &tiny_template("0123456789abcdef", 10)).is_err());
}

/// Desk defaults end to end: entropy floor, sweep ordering and grid coverage.
pub fn desk_default_pretrain_and_sweep() {
    let store = RunStore::open(Path::new(env!("CARGO_TARGET_TMPDIR")).join("desk-default-store")).unwrap();
    let cfg = ExperimentConfig::default();
    let m = cfg.pretrain_manifest().unwrap();
    let o = pretrain(&store, &m).unwrap();
    let state = store.load_checkpoint(&o.run_id, m.total_steps()).unwrap();
    let val = cfg.eval.pt.clone();
    let loss = eval_loss(&state, &val, cfg.eval.max_batches, cfg.eval.batch).unwrap();
    let h = entropy_rate(&val).unwrap();
    eprintln!("entropy {h:.4} eval loss {loss:.4}");
    assert!(loss - h < 0.15, "eval loss {loss} not within 0.15 nats of entropy {h}");

    let mut t = cfg.finetune_template().unwrap();
    t.parent_run_id = o.run_id.clone();
    let set = sweep(&store, &t, &cfg.finetune.lrs, 1).unwrap();
    assert_eq!(set.points.len(), cfg.finetune.lrs.len());
    let first = &set.points[0];
    let last = &set.points[set.points.len() - 1];
    assert!(last.l_ft < first.l_ft);
    let forget: Vec<f64> = set.points.iter().map(|p| p.l_pt - set.base_l_pt).collect();
    let max = forget.iter().cloned().fold(f64::MIN, f64::max);
    let min = forget.iter().cloned().fold(f64::MAX, f64::min).max(1e-6);
    eprintln!("forgetting across grid {forget:?}");
    assert!(max > 3.0 * min);
}
