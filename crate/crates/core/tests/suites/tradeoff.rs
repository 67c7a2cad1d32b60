use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharplab_core::harness::{
    forgetting_reduction, matched_ft_threshold, pareto_frontier, TradeoffPoint, TradeoffSet,
};

fn random_points(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Vec<TradeoffPoint> {
    (0..n)
        .map(|i| {
            let (a, b) = if coarse {
                (rng.gen_range(0..15) as f64 / 4.0, rng.gen_range(0..15) as f64 / 4.0)
            } else {
                (rng.gen_range(1.0..5.0), rng.gen_range(2.0..6.0))
            };
            TradeoffPoint { ft_lr: i as f64 * 1e-5, l_ft: a, l_pt: b, ft_run_id: format!("r{i}") }
        })
        .collect()
}

fn brute_frontier(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let dominated = |p: &TradeoffPoint| {
        points.iter().any(|q| q.l_ft <= p.l_ft && q.l_pt <= p.l_pt && (q.l_ft < p.l_ft || q.l_pt < p.l_pt))
    };
    let mut keep: Vec<TradeoffPoint> = points.iter().filter(|p| !dominated(p)).cloned().collect();
    keep.sort_by(|a, b| a.l_ft.partial_cmp(&b.l_ft).unwrap());
    keep
}

fn brute_set(id: &str, points: Vec<TradeoffPoint>, base: f64) -> TradeoffSet {
    TradeoffSet {
        parent_run_id: id.into(),
        parent_step: 1,
        base_l_pt: base,
        base_l_ft: 6.0,
        points,
        failures: vec![],
        alarms: vec![],
    }
}

pub fn frontier_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for trial in 0..100 {
        let pts = random_points(&mut rng, 200, trial % 2 == 0);
        let got = pareto_frontier(&pts, "fuzz").unwrap();
        assert_eq!(got.points, brute_frontier(&pts), "trial {trial}");
        assert_eq!(got.provenance, "fuzz");
    }
}

pub fn threshold_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..100 {
        let k = rng.gen_range(1..5);
        let sets: Vec<TradeoffSet> = (0..k)
            .map(|i| {
                let n = rng.gen_range(1..40);
                let base = rng.gen_range(1.0..2.0);
                brute_set(&format!("p{i}"), random_points(&mut rng, n, trial % 3 == 0), base)
            })
            .collect();
        let report = matched_ft_threshold(&sets).unwrap();

        // the maximum over the per-checkpoint minima, computed directly
        let mut tau = f64::NEG_INFINITY;
        for s in &sets {
            let mut m = f64::INFINITY;
            for p in &s.points {
                if p.l_ft < m {
                    m = p.l_ft;
                }
            }
            if m > tau {
                tau = m;
            }
        }
        assert_eq!(report.tau, tau);
        for (s, c) in sets.iter().zip(&report.per_checkpoint) {
            let mut best = f64::INFINITY;
            for p in &s.points {
                if p.l_ft <= tau && p.l_pt < best {
                    best = p.l_pt;
                }
            }
            assert!(best.is_finite());
            assert_eq!(c.l_pt_at_tau, best);
            assert_eq!(c.forgetting, best - s.base_l_pt);
            // reading the threshold off the frontier gives the same answer
            let f = pareto_frontier(&s.points, "").unwrap();
            assert_eq!(f.points.iter().filter(|p| p.l_ft <= tau).map(|p| p.l_pt).fold(f64::INFINITY, f64::min), best);
        }
    }
}

pub fn reduction_exchange_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..200 {
        let a = pareto_frontier(&random_points(&mut rng, 30, false), "a").unwrap();
        let b = pareto_frontier(&random_points(&mut rng, 30, false), "b").unwrap();
        let tau = a.points.last().unwrap().l_ft.max(b.points.last().unwrap().l_ft);
        let (ba, bb) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let ab = forgetting_reduction(&a, &b, tau, ba, bb).unwrap();
        let ba_ = forgetting_reduction(&b, &a, tau, bb, ba).unwrap();
        if let (Some(r_ab), Some(r_ba)) = (ab, ba_) {
            assert!((r_ab - (1.0 - 1.0 / (1.0 - r_ba))).abs() <= 1e-9 * r_ab.abs().max(1.0));
            checked += 1;
        }
    }
    assert!(checked > 50);
    let a = pareto_frontier(&random_points(&mut rng, 10, false), "a").unwrap();
    let tau = a.points.last().unwrap().l_ft;
    assert_eq!(forgetting_reduction(&a, &a, tau, 0.0, 0.0).unwrap(), Some(0.0));
}
