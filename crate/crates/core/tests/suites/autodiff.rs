use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::autodiff::{dot, evaluate, grad_and_hvp, hvp, hvp_finite_difference, value_and_grad, Quadratic};
use sharplab_core::data::TokenBatch;
use sharplab_core::model::{LmObjective, ModelConfig, ModelState};

/// A random tiny transformer with weights jittered away from initialisation, and a random batch.
fn random_net(seed: u64) -> (LmObjective, Vec<f64>, TokenBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = [1, 2][rng.gen_range(0..2)];
    let cfg = ModelConfig {
        layers: rng.gen_range(1..=2),
        heads,
        hidden_dim: heads * rng.gen_range(2..=4),
        vocab_size: rng.gen_range(3..=8),
        context_len: 6,
        seed,
    };
    let state = ModelState::init(&cfg).unwrap();
    let theta: Vec<f64> = state.params().iter().map(|w| w + rng.gen_range(-0.3..0.3)).collect();
    let (b, t) = (rng.gen_range(1..=3), rng.gen_range(2..=6));
    let tokens = (0..b * t).map(|_| rng.gen_range(0..cfg.vocab_size as u32)).collect();
    (state.objective(), theta, TokenBatch::new(b, t, tokens).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn gradients_match_central_differences_on_random_nets() {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (f, theta, batch) = random_net(seed);
        let (loss, g) = value_and_grad(&f, &theta, &batch).unwrap();
        assert_eq!(loss, evaluate(&f, &theta, &batch).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..10 {
            let i = rng.gen_range(0..theta.len());
            let (mut p, mut m) = (theta.clone(), theta.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (evaluate(&f, &p, &batch).unwrap() - evaluate(&f, &m, &batch).unwrap()) / (2.0 * h);
            let e = rel(g[i], fd);
            worst = worst.max(e);
            assert!(e < 1e-4, "seed {seed} coord {i}: analytic {} vs fd {fd}", g[i]);
        }
    }
    eprintln!("worst gradient relative error {worst:e}");
}

pub fn hvp_matches_gradient_differences_and_is_symmetric() {
    for seed in 0..100 {
        let (f, theta, batch) = random_net(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = hvp(&f, &theta, &v, &batch).unwrap();
        let fd = hvp_finite_difference(&f, &theta, &v, &batch, 1e-4).unwrap();
        let err = hv.iter().zip(fd.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / hv.norm().max(1e-6) < 1e-3, "seed {seed}: relative error {}", err / hv.norm());

        let hw = hvp(&f, &theta, &w, &batch).unwrap();
        let (a, b) = (dot(&v, &hw), dot(&w, &hv));
        assert!(rel(a, b) < 1e-6, "seed {seed}: vᵀHw {a} vs wᵀHv {b}");

        let so = grad_and_hvp(&f, &theta, &v, &batch).unwrap();
        assert_eq!(so.hv, hv);
        assert_eq!(so.grad, value_and_grad(&f, &theta, &batch).unwrap().1);
    }
}

pub fn hvp_linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 6;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let x = rng.gen_range(-1.0..1.0);
            a[i * n + j] = x;
            a[j * n + i] = x;
        }
    }
    let q = Quadratic::new(a, vec![0.5; n], 0.0).unwrap();
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..20 {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| s * x + t * y).collect();
        let lhs = hvp(&q, &theta, &comb, &()).unwrap();
        let hv = hvp(&q, &theta, &v, &()).unwrap();
        let hw = hvp(&q, &theta, &w, &()).unwrap();
        for i in 0..n {
            let rhs = s * hv[i] + t * hw[i];
            assert!((lhs[i] - rhs).abs() <= 1e-8 * rhs.abs().max(1.0));
        }
    }

    // and on a network, to a looser tolerance
    let (f, theta, batch) = random_net(3);
    let v: Vec<f64> = (0..theta.len()).map(|i| (i as f64 * 0.7).sin()).collect();
    let w: Vec<f64> = (0..theta.len()).map(|i| (i as f64 * 0.3).cos()).collect();
    let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
    let lhs = hvp(&f, &theta, &comb, &batch).unwrap();
    let (hv, hw) = (hvp(&f, &theta, &v, &batch).unwrap(), hvp(&f, &theta, &w, &batch).unwrap());
    for i in 0..theta.len() {
        let rhs = 2.0 * hv[i] - 0.5 * hw[i];
        assert!((lhs[i] - rhs).abs() <= 1e-8 * rhs.abs().max(1.0));
    }
}

pub fn repeated_evaluation_is_bitwise_identical() {
    let (f, theta, batch) = random_net(11);
    let v: Vec<f64> = vec![0.25; theta.len()];
    let a = grad_and_hvp(&f, &theta, &v, &batch).unwrap();
    let b = grad_and_hvp(&f, &theta, &v, &batch).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.grad, b.grad);
    assert_eq!(a.hv, b.hv);
}
