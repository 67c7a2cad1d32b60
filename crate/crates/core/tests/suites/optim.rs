use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::autodiff::{norm, value_and_grad, LossFunction, ParamVector};
use sharplab_core::data::{BatchShape, CorpusSpec, Family, Markov2Params, Split, TokenBatch, TrainSampler};
use sharplab_core::model::{ModelConfig, ModelState};
use sharplab_core::optim::{
    adamw_step, fisher_diag_for_model, sam_perturbation, sam_step, AdamWState, EwcConfig, EwcObjective,
    OptimConfig, SamConfig,
};

fn tiny(seed: u64) -> ModelConfig {
    ModelConfig { layers: 1, heads: 2, hidden_dim: 8, vocab_size: 8, context_len: 8, seed }
}

fn corpus(seed: u64) -> CorpusSpec {
    CorpusSpec::new(Family::Markov2(Markov2Params { states: 8, ..Default::default() }), seed, 4000, Split::Train)
}

pub fn sam_with_zero_radius_is_adamw_bitwise() {
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let state = ModelState::init(&tiny(case)).unwrap();
        let f = state.objective();
        let n = f.dim();
        let theta0 = ParamVector::new(state.params().iter().map(|w| w + rng.gen_range(-0.2..0.2)).collect()).unwrap();
        let mut st0 = AdamWState::new(n);
        st0.t = rng.gen_range(0..50);
        if st0.t > 0 {
            st0.m = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
            st0.v = (0..n).map(|_| rng.gen_range(0.0..0.01)).collect();
        }
        let cfg = OptimConfig {
            beta1: rng.gen_range(0.5..0.99),
            beta2: rng.gen_range(0.9..0.999),
            adam_epsilon: 1e-8,
            weight_decay: [0.0, 0.1][case as usize % 2],
        };
        let lr = rng.gen_range(0.0..1e-2);
        let tokens = (0..16).map(|_| rng.gen_range(0..8)).collect();
        let batch = TokenBatch::new(2, 8, tokens).unwrap();

        let (mut a, mut sa) = (theta0.clone(), st0.clone());
        let (_, g) = value_and_grad(&f, &a, &batch).unwrap();
        adamw_step(&mut a, &g, &mut sa, lr, &cfg).unwrap();

        let (mut b, mut sb) = (theta0.clone(), st0.clone());
        let out = sam_step(&mut b, &batch, &f, &mut sb, lr, &SamConfig { rho: 0.0 }, &cfg).unwrap();
        assert_eq!(out.grad_evals, 1);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()), "case {case}: weights differ");
        assert!(sa.m.iter().zip(&sb.m).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(sa.v.iter().zip(&sb.v).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(sa.t, sb.t);
    }
}

pub fn adamw_matches_hand_computation() {
    // First step, g = 1: m̂ = v̂ = 1, so the step is lr / (1 + ε).
    let cfg = OptimConfig { beta1: 0.9, beta2: 0.95, adam_epsilon: 1e-8, weight_decay: 0.0 };
    let mut th = ParamVector::new(vec![0.5]).unwrap();
    let mut st = AdamWState::new(1);
    adamw_step(&mut th, &[1.0], &mut st, 1e-3, &cfg).unwrap();
    assert_eq!(th[0], 0.5 - 1e-3 / (1.0 + 1e-8));

    // Two steps with decay, written out term by term.
    let cfg = OptimConfig { weight_decay: 0.1, ..cfg };
    let (lr, g1, g2, p0) = (0.01, -2.0, 0.5, 1.5);
    let mut th = ParamVector::new(vec![p0]).unwrap();
    let mut st = AdamWState::new(1);
    adamw_step(&mut th, &[g1], &mut st, lr, &cfg).unwrap();
    adamw_step(&mut th, &[g2], &mut st, lr, &cfg).unwrap();
    let m1 = 0.1 * g1;
    let v1 = 0.05 * g1 * g1;
    let p1 = p0 - lr * (m1 / 0.1) / ((v1 / 0.05f64).sqrt() + 1e-8) - lr * 0.1 * p0;
    let m2 = 0.9 * m1 + 0.1 * g2;
    let v2 = 0.95 * v1 + 0.05 * g2 * g2;
    let (c1, c2) = (1.0 - 0.81, 1.0 - 0.9025);
    let p2 = p1 - lr * (m2 / c1) / ((v2 / c2).sqrt() + 1e-8) - lr * 0.1 * p1;
    assert!((th[0] - p2).abs() < 1e-15, "{} vs {p2}", th[0]);
    assert!((st.m[0] - m2).abs() < 1e-15 && (st.v[0] - v2).abs() < 1e-15);
    assert_eq!(st.t, 2);
}

pub fn ascent_step_has_radius_rho() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(1..500);
        let scale = 10f64.powf(rng.gen_range(-6.0..6.0));
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let rho = rng.gen_range(1e-3..1.0);
        let eps = sam_perturbation(&g, rho).unwrap();
        assert!((norm(&eps) - rho).abs() <= 1e-12 * rho);
    }
}

pub fn fisher_over_eight_batches_is_the_direct_average() {
    let state = ModelState::init(&tiny(1)).unwrap();
    let spec = corpus(5);
    let shape = BatchShape { batch_size: 2, seq_len: 8 };
    let fisher = fisher_diag_for_model(&state, &spec, 8, 9, shape).unwrap();

    let mut sampler = TrainSampler::from_spec(&spec, shape, 9).unwrap();
    let f = state.objective();
    let mut acc = vec![0.0; f.dim()];
    for _ in 0..8 {
        let (_, g) = value_and_grad(&f, state.params(), &sampler.next_batch()).unwrap();
        for (a, x) in acc.iter_mut().zip(g.iter()) {
            *a += x * x / 8.0;
        }
    }
    for (a, b) in fisher.iter().zip(&acc) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300) + 1e-300, "{a} vs {b}");
        assert!(*a >= 0.0);
    }
    let one = fisher_diag_for_model(&state, &spec, 1, 9, shape).unwrap();
    let mut s = TrainSampler::from_spec(&spec, shape, 9).unwrap();
    let (_, g) = value_and_grad(&f, state.params(), &s.next_batch()).unwrap();
    assert!(one.iter().zip(g.iter()).all(|(a, x)| *a == x * x));
}

pub fn strong_ewc_pulls_back_to_the_anchor() {
    let state = ModelState::init(&tiny(2)).unwrap();
    let spec = corpus(6);
    let shape = BatchShape { batch_size: 2, seq_len: 8 };
    let fisher = fisher_diag_for_model(&state, &spec, 4, 0, shape).unwrap();
    let anchor = state.params().clone();
    let ewc = EwcConfig::new(1e6, fisher.clone(), anchor.clone()).unwrap();
    let inner = state.objective();
    let obj = EwcObjective { inner: &inner, ewc: &ewc };

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut theta = ParamVector::new(anchor.iter().map(|a| a + rng.gen_range(-0.05..0.05)).collect()).unwrap();
    let masked = |t: &ParamVector| {
        t.iter().zip(anchor.iter()).zip(fisher.iter()).filter(|(_, f)| **f > 0.0).map(|((a, b), _)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut sampler = TrainSampler::from_spec(&corpus(7), shape, 1).unwrap();
    let mut st = AdamWState::new(theta.len());
    let mut dists = vec![masked(&theta)];
    for step in 1..=100 {
        let (_, g) = value_and_grad(&obj, &theta, &sampler.next_batch()).unwrap();
        adamw_step(&mut theta, &g, &mut st, 1e-4, &OptimConfig::finetune()).unwrap();
        if step % 10 == 0 {
            dists.push(masked(&theta));
        }
    }
    assert!(dists.windows(2).all(|w| w[1] < w[0]), "{dists:?}");
}
