use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::autodiff::{evaluate, value_and_grad, ParamVector, Quadratic};
use sharplab_core::curvature::{
    curvature_subsample, directional_sharpness, hessian_trace, lambda_max, quadratic_forgetting_prediction,
};
use sharplab_core::data::{BatchShape, CorpusSpec, EvalSet, Family, Markov2Params, Split, TrainSampler};
use sharplab_core::model::{ModelConfig, ModelState};
use sharplab_core::optim::{adamw_step, AdamWState, OptimConfig};

fn sym(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let x = rng.gen_range(-2.0..2.0);
            a[i * n + j] = x;
            a[j * n + i] = x;
        }
    }
    a
}

/// A tiny model after a short AdamW run, with a held-out evaluation set.
fn trained_tiny() -> (ModelState, EvalSet) {
    let cfg = ModelConfig { layers: 1, heads: 2, hidden_dim: 8, vocab_size: 8, context_len: 16, seed: 4 };
    let fam = Family::Markov2(Markov2Params { states: 8, ..Default::default() });
    let spec = CorpusSpec::new(fam, 3, 20_000, Split::Train);
    let shape = BatchShape { batch_size: 4, seq_len: 16 };
    let state = ModelState::init(&cfg).unwrap();
    let f = state.objective();
    let mut theta = state.params().clone();
    let mut st = AdamWState::new(theta.len());
    let mut sampler = TrainSampler::from_spec(&spec, shape, 0).unwrap();
    for _ in 0..150 {
        let (_, g) = value_and_grad(&f, &theta, &sampler.next_batch()).unwrap();
        adamw_step(&mut theta, &g, &mut st, 1e-2, &OptimConfig::pretrain()).unwrap();
    }
    let eval = EvalSet::new(&spec.with_split(Split::Val).with_tokens(8192), shape, 16).unwrap();
    (state.with_params(theta).unwrap(), eval)
}

pub fn diagonal_quadratic_values_are_exact() {
    let q = Quadratic::diagonal(&[2.0, 4.0]);
    let b: [&(); 1] = [&()];
    assert_eq!(directional_sharpness(&q, &[0.3, 0.1], &[1.0, 0.0], &b).unwrap(), 2.0);
    let tr = hessian_trace(&q, &[0.0, 0.0], 25, &b, 1).unwrap();
    assert!(tr.per_probe.iter().all(|&x| x == 6.0));
    assert_eq!(tr.mean, 6.0);
    let e = lambda_max(&q, &[0.0, 0.0], 200, 1e-12, &b, 0).unwrap();
    assert!((e.magnitude - 4.0).abs() < 1e-8);
    let neg = Quadratic::diagonal(&[2.0, -5.0]);
    let e = lambda_max(&neg, &[0.0, 0.0], 200, 1e-12, &b, 0).unwrap();
    assert!((e.magnitude - 5.0).abs() < 1e-8 && (e.rayleigh + 5.0).abs() < 1e-8);
    let id = Quadratic::diagonal(&[1.0; 7]);
    assert_eq!(hessian_trace(&id, &[0.0; 7], 3, &b, 2).unwrap().mean, 7.0);
}

pub fn hutchinson_is_exact_on_random_diagonal_hessians() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let n = rng.gen_range(1..30);
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let exact: f64 = d.iter().sum();
        let q = Quadratic::diagonal(&d);
        let tr = hessian_trace(&q, &vec![0.5; n], 5, &[&()], rng.gen()).unwrap();
        for x in &tr.per_probe {
            assert!((x - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }
}

pub fn dense_hutchinson_within_two_standard_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = sym(&mut rng, 3);
    let exact = a[0] + a[4] + a[8];
    let q = Quadratic::new(a, vec![0.0; 3], 0.0).unwrap();
    let tr = hessian_trace(&q, &[0.0; 3], 1000, &[&()], 11).unwrap();
    assert!((tr.mean - exact).abs() <= 2.0 * tr.std_error, "{} vs {exact} (se {})", tr.mean, tr.std_error);
}

pub fn sharpness_scale_invariance_and_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 5;
    let q = Quadratic::new(sym(&mut rng, n), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0.7).unwrap();
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = [&()];
    let k = directional_sharpness(&q, &theta, &delta, &b).unwrap();
    let scaled: Vec<f64> = delta.iter().map(|x| -3.0 * x).collect();
    let k3 = directional_sharpness(&q, &theta, &scaled, &b).unwrap();
    assert!((k - k3).abs() <= 1e-10 * k.abs());
    assert!(directional_sharpness(&q, &theta, &[0.0; 5], &b).is_err());

    let p = quadratic_forgetting_prediction(&q, &theta, &delta, &b).unwrap();
    let dn2 = delta.iter().map(|x| x * x).sum::<f64>();
    assert!((0.5 * dn2 * p.sharpness.unwrap() - p.quadratic_term).abs() <= 1e-12 * p.quadratic_term.abs());
    // a quadratic is its own Taylor expansion
    assert!((p.predicted(true) - p.observed).abs() <= 1e-12 * p.observed.abs());
    let z = quadratic_forgetting_prediction(&q, &theta, &[0.0; 5], &b).unwrap();
    assert_eq!(z.predicted(false), z.base_loss);
    assert_eq!(z.predicted(true), evaluate(&q, &theta, &()).unwrap());
}

pub fn tiny_lm_sharpness_matches_second_difference() {
    let (state, eval) = trained_tiny();
    let f = state.objective();
    let theta = state.params();
    let batches = curvature_subsample(&eval, 4, 0);
    let refs: Vec<_> = batches.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let delta: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let k = directional_sharpness(&f, theta, &delta, &refs).unwrap();

    let n = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
    let h = 1e-3;
    let at = |s: f64| {
        let p: Vec<f64> = theta.iter().zip(&delta).map(|(a, d)| a + s * h * d / n).collect();
        refs.iter().map(|b| evaluate(&f, &p, b).unwrap()).sum::<f64>() / refs.len() as f64
    };
    let fd = (at(1.0) - 2.0 * at(0.0) + at(-1.0)) / (h * h);
    assert!((k - fd).abs() <= 5e-2 * k.abs(), "κ {k} vs second difference {fd}");
}

pub fn tiny_lm_power_iteration_restarts_agree() {
    let (state, eval) = trained_tiny();
    let f = state.objective();
    let batches = curvature_subsample(&eval, 4, 1);
    let refs: Vec<_> = batches.iter().collect();
    let a = lambda_max(&f, state.params(), 500, 1e-7, &refs, 1).unwrap();
    let b = lambda_max(&f, state.params(), 500, 1e-7, &refs, 2).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.magnitude - b.magnitude).abs() <= 0.01 * a.magnitude, "{} vs {}", a.magnitude, b.magnitude);
    // the top eigenvalue bounds every Rayleigh quotient
    let u = ParamVector::new(vec![1.0; state.params().len()]).unwrap();
    let k = directional_sharpness(&f, state.params(), &u, &refs).unwrap();
    assert!(k.abs() <= a.magnitude * 1.01);
}

pub fn estimates_are_deterministic() {
    let (state, eval) = trained_tiny();
    let f = state.objective();
    let batches = curvature_subsample(&eval, 3, 9);
    assert_eq!(batches, curvature_subsample(&eval, 3, 9));
    let refs: Vec<_> = batches.iter().collect();
    let t1 = hessian_trace(&f, state.params(), 3, &refs, 4).unwrap();
    let t2 = hessian_trace(&f, state.params(), 3, &refs, 4).unwrap();
    assert_eq!(t1, t2);
}
