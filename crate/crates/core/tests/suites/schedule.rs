use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::schedule::{lr_at, phase_at, OptimizerTag, PhasePlan, ScheduleSpec, ANNEAL_FRACTIONS};
use std::f64::consts::PI;

/// ⌈(100 − k) T / 100⌉ in integers, for d = k / 100.
fn switch_oracle(total: u64, k: u64) -> u64 {
    ((100 - k) * total).div_ceil(100)
}

pub fn cosine_contracts_on_random_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let total = rng.gen_range(2..3000u64);
        let warmup = rng.gen_range(0..total);
        let peak = 10f64.powf(rng.gen_range(-5.0..-1.0));
        let floor = if rng.gen_bool(0.5) { 0.0 } else { peak * rng.gen_range(0.0..1.0) };
        let s = ScheduleSpec::cosine(peak, floor, warmup, total);
        s.validate().unwrap();
        let lr: Vec<f64> = (0..=total).map(|t| lr_at(&s, t).unwrap()).collect();
        assert!(lr_at(&s, total + 1).is_err());

        assert_eq!(lr[0], if warmup == 0 { peak } else { 0.0 });
        assert!((lr[total as usize] - floor).abs() <= 1e-15 * peak);
        if warmup % 2 == 0 && warmup > 0 {
            assert!((lr[warmup as usize / 2] - peak / 2.0).abs() <= 1e-15 * peak);
        }
        if (total + warmup) % 2 == 0 {
            let mid = lr[((total + warmup) / 2) as usize];
            assert!((mid - (peak + floor) / 2.0).abs() <= 1e-12 * peak);
        }
        for t in warmup as usize..total as usize {
            assert!(lr[t + 1] <= lr[t], "cosine increased at {t}");
        }
        for t in 0..warmup as usize {
            assert!(lr[t + 1] >= lr[t]);
        }
        // one step never moves further than the steepest slope of either phase
        let quantum = if warmup > 0 { peak / warmup as f64 } else { 0.0 }
            .max((peak - floor) * PI / (2.0 * (total - warmup) as f64))
            * (1.0 + 1e-9);
        assert!(lr.windows(2).all(|w| (w[1] - w[0]).abs() <= quantum));
        for (t, x) in lr.iter().enumerate().skip(warmup as usize) {
            let frac = (t as f64 - warmup as f64) / (total - warmup) as f64;
            let want = floor + (peak - floor) * (0.5 + 0.5 * (PI * frac).cos());
            assert!((x - want).abs() <= 1e-12 * peak);
        }
    }
}

pub fn wsd_contracts_on_random_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let total = rng.gen_range(20..3000u64);
        let k = rng.gen_range(1..=100u64);
        let d = k as f64 / 100.0;
        let switch = switch_oracle(total, k);
        let warmup = rng.gen_range(0..=switch.min(total - 1));
        let peak = 10f64.powf(rng.gen_range(-5.0..-1.0));
        let s = ScheduleSpec::wsd(peak, warmup, total, d);
        s.validate().unwrap();
        let lr: Vec<f64> = (0..=total).map(|t| lr_at(&s, t).unwrap()).collect();

        assert_eq!(lr[total as usize], 0.1 * peak, "floor is a tenth of the peak");
        for t in warmup..switch {
            assert_eq!(lr[t as usize], peak, "stable phase at step {t}");
        }
        for t in warmup as usize..total as usize {
            assert!(lr[t + 1] <= lr[t]);
        }
        if switch < total {
            let quantum = 0.9 * peak / (total - switch) as f64 * (1.0 + 1e-9);
            for t in switch as usize..total as usize {
                assert!((lr[t] - lr[t + 1] - quantum / (1.0 + 1e-9)).abs() <= 1e-12 * peak, "linear decay");
            }
            assert!(lr[switch as usize] == peak);
        }
        if warmup > 0 {
            assert_eq!(lr[0], 0.0);
            assert!(lr.windows(2).take(warmup as usize).all(|w| (w[1] - w[0]).abs() <= peak / warmup as f64 * (1.0 + 1e-9)));
        }

        let plan = PhasePlan::sam_anneal(total, d).unwrap();
        assert_eq!(plan.switch_step, Some(switch));
        for t in 0..total {
            let want = if t >= switch { OptimizerTag::Sam } else { OptimizerTag::Adamw };
            assert_eq!(phase_at(&plan, t), want);
        }
    }
}

pub fn anneal_fractions_give_distinct_plans() {
    let plans: Vec<PhasePlan> = ANNEAL_FRACTIONS.iter().map(|&d| PhasePlan::sam_anneal(1000, d).unwrap()).collect();
    let switches: Vec<u64> = plans.iter().map(|p| p.switch_step.unwrap()).collect();
    assert_eq!(switches, vec![950, 900, 800]);
    assert_eq!(phase_at(&PhasePlan::sam_anneal(1000, 1.0).unwrap(), 0), OptimizerTag::Sam);
    let all = PhasePlan::all_adamw(1000);
    assert!((0..1000).all(|t| phase_at(&all, t) == OptimizerTag::Adamw));
}
