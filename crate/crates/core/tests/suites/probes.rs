use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::autodiff::{norm, ParamVector};
use sharplab_core::data::{BatchShape, CorpusSpec, EvalSet, Family, Markov2Params, Split};
use sharplab_core::model::{ModelConfig, ModelState, TensorRole};
use sharplab_core::probes::{
    exempt_tensors, gaussian_perturb, is_exempt, probe_sweep, quantize, quantize_block, quantize_values, ProbeSpec,
    QuantBits, DEFAULT_BLOCK_SIZE, GAMMA_GRID,
};

/// A default-size model with weights jittered so blocks are not all alike.
fn model(seed: u64) -> ModelState {
    let s = ModelState::init(&ModelConfig { seed, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = s.params().iter().map(|w| w + rng.gen_range(-0.05..0.05)).collect();
    s.with_params(ParamVector::new(p).unwrap()).unwrap()
}

fn max_half_gap(levels: &[f64]) -> f64 {
    levels.windows(2).map(|w| (w[1] - w[0]) / 2.0).fold(0.0, f64::max)
}

pub fn gaussian_noise_has_exact_relative_norm_per_tensor() {
    let s = model(1);
    for &gamma in &GAMMA_GRID {
        for seed in 0..3 {
            let p = gaussian_perturb(&s, gamma, seed).unwrap();
            for spec in s.layout().tensors() {
                let w = s.tensor(&spec.name).unwrap();
                let d: Vec<f64> = p.tensor(&spec.name).unwrap().iter().zip(w).map(|(a, b)| a - b).collect();
                let ratio = norm(&d) / norm(w);
                assert!((ratio - gamma).abs() <= 1e-10 * gamma, "{} at γ {gamma}: {ratio}", spec.name);
            }
            assert_eq!(p, gaussian_perturb(&s, gamma, seed).unwrap());
        }
    }
    assert_eq!(gaussian_perturb(&s, 0.0, 5).unwrap(), s);
}

pub fn quantisation_is_idempotent() {
    for seed in 0..5 {
        let s = model(seed);
        for bits in [QuantBits::Four, QuantBits::Eight] {
            let once = quantize(&s, bits, DEFAULT_BLOCK_SIZE).unwrap();
            let twice = quantize(&once, bits, DEFAULT_BLOCK_SIZE).unwrap();
            assert!(once.params().iter().zip(twice.params().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.gen_range(1..300);
        let scale = 10f64.powf(rng.gen_range(-4.0..2.0));
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let block = rng.gen_range(2..100);
        for bits in [QuantBits::Four, QuantBits::Eight] {
            let a = quantize_values(&x, bits, block).unwrap();
            assert_eq!(a, quantize_values(&a, bits, block).unwrap());
        }
    }
}

pub fn round_trip_error_within_half_the_widest_level_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for bits in [QuantBits::Four, QuantBits::Eight] {
        let levels = bits.levels();
        let bound = max_half_gap(&levels);
        for _ in 0..500 {
            let n = rng.gen_range(2..=64);
            let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
            let orig: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let absmax = orig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut q = orig.clone();
            quantize_block(&mut q, bits);
            for (o, d) in orig.iter().zip(&q) {
                assert!((o - d).abs() <= absmax * bound * (1.0 + 1e-12), "{bits:?}: {o} -> {d}");
                // and the chosen level is a nearest one, by exhaustive search
                let best = levels.iter().map(|l| (o / absmax - l).abs()).fold(f64::INFINITY, f64::min);
                assert!(((o - d).abs() / absmax - best).abs() <= 1e-12);
            }
        }
    }
}

pub fn grid_and_constant_blocks_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for scale in [0.013, 1.0, 3.7e-4] {
        let mut block: Vec<f64> = (0..62).map(|_| rng.gen_range(-127..=127) as f64 * scale).collect();
        block.push(127.0 * scale);
        block.push(-127.0 * scale);
        let mut q = block.clone();
        quantize_block(&mut q, QuantBits::Eight);
        for (a, b) in block.iter().zip(&q) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }
    for c in [0.37, -2.5] {
        let mut q = vec![c; 64];
        quantize_block(&mut q, QuantBits::Four);
        assert!(q.iter().all(|&x| x == c));
    }
    let mut z = vec![0.0; 10];
    quantize_block(&mut z, QuantBits::Four);
    assert!(z.iter().all(|&x| x == 0.0));
}

pub fn exempt_tensors_are_untouched() {
    let s = model(2);
    let exempt = exempt_tensors(&s);
    assert!(exempt.iter().any(|n| n.starts_with("embed.")));
    assert!(exempt.iter().any(|n| n == "lm_head.weight"));
    assert!(!exempt.iter().any(|n| n.ends_with("mlp.fc.weight")));
    for bits in [QuantBits::Four, QuantBits::Eight] {
        let q = quantize(&s, bits, DEFAULT_BLOCK_SIZE).unwrap();
        for spec in s.layout().tensors() {
            let (a, b) = (s.tensor(&spec.name).unwrap(), q.tensor(&spec.name).unwrap());
            if is_exempt(spec) {
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{} changed", spec.name);
            } else {
                assert_eq!(spec.role, TensorRole::Weight);
                assert_ne!(a, b, "{} was not quantised", spec.name);
            }
        }
    }
}

pub fn sweep_edge_cases() {
    let s = model(3);
    let spec = CorpusSpec::new(Family::Markov2(Markov2Params::default()), 1, 4096, Split::Val);
    let eval = EvalSet::new(&spec, BatchShape { batch_size: 2, seq_len: 32 }, 2).unwrap();
    assert!(probe_sweep(&s, &[], &eval).unwrap().is_empty());
    let r = probe_sweep(&s, &[ProbeSpec::gaussian(0.0, &[1, 2, 3])], &eval).unwrap();
    assert_eq!(r[0].degradation, 0.0);
    assert_eq!(r[0].per_seed.len(), 3);
    assert!(probe_sweep(&s, &[ProbeSpec::gaussian(0.01, &[1, 2])], &eval).is_err());
}
