use mdstop_core::stopping::StreamPair;
use mdstop_core::{
    run_stopping, BatchRunner, BatchSchedule, Inflation, ModelSpec, Purpose, RngStream,
    StoppingConfig, StreamId, VarianceKind,
};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn run(spec: &str, cfg: &StoppingConfig, id: StreamId) -> mdstop_core::StoppingOutcome {
    let mut model = spec.parse::<ModelSpec>().unwrap().build().unwrap();
    let mut streams = StreamPair::new(id);
    run_stopping(&mut *model, &BatchSchedule::default(), cfg, &mut streams).unwrap()
}

/// Straight-line iid normal(0,1) rule: empirical variance, no inflation,
/// two-pass moments and statrs for Phi.
fn reference(seed: u64, eps: f64, delta: f64) -> (u64, f64) {
    let id = StreamId::new(seed, Purpose::Test);
    let mut primary = RngStream::new(id);
    let phi = Normal::new(0.0, 1.0).unwrap();
    let mut t = 0u64;
    loop {
        t += 1;
        let size = t.pow(5) - (t - 1).pow(5);
        let xs: Vec<f64> = (0..size).map(|_| primary.standard_normal()).collect();
        if size < 2 {
            continue;
        }
        let n = size as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let crit = 2.0 * (1.0 - phi.cdf(eps * n.sqrt() / var.sqrt()));
        if crit <= delta {
            let mut branch = RngStream::new(id.branched());
            let resampled = (0..size).map(|_| branch.standard_normal()).sum::<f64>() / n;
            return (t, resampled);
        }
    }
}

#[test]
fn matches_reference_oracle_on_50_seeds() {
    let cfg = StoppingConfig::new(0.1, 0.05).with_inflation(Inflation::None);
    for seed in 0..50 {
        let out = run("iid:normal:0:1", &cfg, StreamId::new(seed, Purpose::Test));
        let (tau, mu_star) = reference(seed, 0.1, 0.05);
        assert_eq!(out.tau, tau, "seed {seed}");
        assert!((out.mu_star - mu_star).abs() <= 1e-12, "seed {seed}");
        assert!(!out.hit_cap);
        assert_eq!(out.total_samples, tau.pow(5) + tau.pow(5) - (tau - 1).pow(5));
    }
}

#[test]
fn mu_at_stop_is_the_original_batch_mean() {
    let cfg = StoppingConfig::new(0.1, 0.1);
    let id = StreamId::new(4, Purpose::Test);
    let out = run("arch1", &cfg, id);
    let mut model = ModelSpec::default().build().unwrap();
    let sched = BatchSchedule::default();
    let mut stream = RngStream::new(id);
    let mut runner = BatchRunner::new(&mut *model, &sched, &mut stream);
    let mut last = None;
    for _ in 0..out.tau {
        last = Some(runner.next_batch().unwrap());
    }
    let last = last.unwrap();
    assert_eq!(last.mean, out.mu_at_stop);
    assert_eq!(out.v_at_stop, last.v2sq.map(f64::sqrt));
}

#[test]
fn cap_safety() {
    let cfg = StoppingConfig::new(1e-9, 1e-9).with_t_max(4);
    for seed in 0..5 {
        let out = run("arch1", &cfg, StreamId::new(seed, Purpose::Test));
        assert!(out.tau <= 4);
        assert!(out.hit_cap);
    }
}

#[test]
fn resample_is_independent_of_original_batch() {
    // Conditional variance of iid normal(0,1) is known, so tau is the same
    // for every seed and the batch means are directly comparable.
    let cfg = StoppingConfig::new(0.2, 0.1)
        .with_variance(VarianceKind::Conditional)
        .with_inflation(Inflation::None);
    let n = 2000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|s| {
            let o = run("iid:normal:0:1", &cfg, StreamId::new(s, Purpose::Test));
            (o.mu_at_stop, o.mu_star)
        })
        .collect();
    let nf = n as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / nf,
        pairs.iter().map(|p| p.1).sum::<f64>() / nf,
    );
    let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>();
    let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>();
    let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>();
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() <= 3.0 / nf.sqrt(), "corr {corr}");
}

#[test]
fn resample_restarts_from_the_boundary_state() {
    // The resampled ARCH batch must continue from the lag at m(tau-1), not
    // from the end of the original batch: with identical streams the two
    // batches coincide.
    let id = StreamId::new(11, Purpose::Test);
    let sched = BatchSchedule::default();
    let mut model = ModelSpec::default().build().unwrap();
    let mut stream = RngStream::new(id);
    let mut runner = BatchRunner::new(&mut *model, &sched, &mut stream);
    runner.next_batch().unwrap();
    runner.next_batch().unwrap();
    let original = runner.next_batch().unwrap();
    let boundary = runner.boundary_state().clone();
    // Replay the primary stream up to m(2) so the branch sees the same draws.
    let mut replay = RngStream::new(id);
    let mut warm = ModelSpec::default().build().unwrap();
    for _ in 0..32 {
        warm.next_sample(&mut replay);
    }
    let mu = mdstop_core::branch_for_resample(runner.model(), &boundary, &mut replay, original.size)
        .unwrap();
    assert!((mu - original.mean).abs() < 1e-15);
}

fn tau(spec: &str, seed: u64, eps: f64, delta: f64, inflation: Inflation) -> u64 {
    let cfg = StoppingConfig::new(eps, delta).with_inflation(inflation);
    run(spec, &cfg, StreamId::new(seed, Purpose::Test)).tau
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tau_nonincreasing_in_eps(seed in 0u64..10_000, e1 in 0.02f64..0.3, f in 1.0f64..4.0) {
        let e2 = e1 * f;
        prop_assert!(tau("arch1", seed, e1, 0.05, Inflation::InvT) >= tau("arch1", seed, e2, 0.05, Inflation::InvT));
    }

    #[test]
    fn tau_nonincreasing_in_delta(seed in 0u64..10_000, d1 in 0.005f64..0.2, f in 1.0f64..4.0) {
        let d2 = (d1 * f).min(0.9);
        prop_assert!(tau("cv:usq_half", seed, 0.01, d1, Inflation::InvT) >= tau("cv:usq_half", seed, 0.01, d2, Inflation::InvT));
    }

    #[test]
    fn inflation_only_delays(seed in 0u64..10_000, eps in 0.02f64..0.3) {
        prop_assert!(tau("iid:normal:0:1", seed, eps, 0.05, Inflation::InvT) >= tau("iid:normal:0:1", seed, eps, 0.05, Inflation::None));
    }
}
