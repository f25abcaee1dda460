//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;

use mdstop_core::harness::GridReport;
use mdstop_core::process::Arch1Model;
use mdstop_core::stats::ScaledStudentT;
use mdstop_core::stopping::StreamPair;
use mdstop_core::{
    build_grid, evaluate, normal_cdf, normal_quantile, run_stopping, summarize, BatchRunner,
    BatchSchedule, EvalSetup, Inflation, ModelSpec, ModelState, ProcessModel, Purpose, RngStream,
    StoppingConfig, StreamId,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_grid(model: &str) -> GridReport {
    let grid = build_grid(0.01, 0.1, 0.01, 0.1, 4).unwrap();
    let setup = EvalSetup {
        model: model.parse::<ModelSpec>().unwrap(),
        runs: 500,
        base_seed: 2024,
        ..EvalSetup::default()
    };
    evaluate(&setup, &grid).unwrap()
}

fn reliability_floor(report: &GridReport, lo: f64, hi: f64) -> Outcome {
    let n = report.meta.runs as f64;
    let mut detail = Vec::new();
    let mut ok = true;
    for c in &report.cells {
        let floor = 1.0 - 3.0 * (c.delta * (1.0 - c.delta) / n).sqrt() / (1.0 - c.delta);
        if c.reliability < floor {
            ok = false;
            detail.push(format!("cell eps={:.4} delta={:.4} R={:.4} < {floor:.4}", c.eps, c.delta, c.reliability));
        }
    }
    let s = summarize(report);
    ok &= s.reliability.mean >= lo && s.reliability.mean <= hi;
    detail.insert(
        0,
        format!(
            "grid-mean R {:.4} in [{lo}, {hi}], min R {:.4}, max R {:.4}",
            s.reliability.mean, s.reliability.min, s.reliability.max
        ),
    );
    check(ok, detail.join("; "))
}

fn criterion_1(arch: &GridReport) -> Outcome {
    reliability_floor(arch, 1.00, 1.08)
}

fn criterion_2(arch: &GridReport, cv: &GridReport) -> Outcome {
    let floor = reliability_floor(cv, 1.00, 1.09);
    let (cm_cv, cm_arch) = (summarize(cv).complexity.mean, summarize(arch).complexity.mean);
    let ordered = cm_cv < cm_arch;
    let detail = format!(
        "{}; grid-mean CM {cm_cv:.1} (cv) < {cm_arch:.1} (arch1)",
        floor.as_ref().unwrap_or_else(|e| e)
    );
    check(floor.is_ok() && ordered, detail)
}

/// Ten batches of poly:5 (`m(10) = 10^5` samples).
fn cv_run(spec: &str) -> (f64, f64, f64) {
    let mut model = spec.parse::<ModelSpec>().unwrap().build().unwrap();
    let sched = BatchSchedule::default();
    let mut stream = RngStream::new(StreamId::new(31, Purpose::Test));
    let mut runner = BatchRunner::new(&mut *model, &sched, &mut stream);
    let mut total = 0.0;
    let mut last = None;
    for _ in 0..10 {
        let b = runner.next_batch().unwrap();
        total += b.mean * b.size as f64;
        last = Some(b);
    }
    let theta = match runner.model().checkpoint() {
        ModelState::ControlVariate { theta, .. } => theta[0],
        other => panic!("unexpected state {other:?}"),
    };
    (theta, last.unwrap().v2sq.unwrap(), total / 1e5)
}

fn criterion_3() -> Outcome {
    let (theta, var, mu_hat) = cv_run("cv:usq_half");
    let (_, crude_var, _) = cv_run("cv:usq_half:crude");
    let bound = 4.0 * (var / 1e5).sqrt();
    let ok = (theta + 0.5).abs() <= 0.02
        && (1.25e-3..=1.55e-3).contains(&var)
        && (0.021..=0.024).contains(&crude_var)
        && (mu_hat - 1.0 / 6.0).abs() <= bound;
    check(
        ok,
        format!(
            "theta {theta:.5}, variance {var:.4e}, crude variance {crude_var:.4e}, |mu_hat - 1/6| {:.2e} <= {bound:.2e}",
            (mu_hat - 1.0 / 6.0).abs()
        ),
    )
}

fn criterion_4() -> Outcome {
    let n = 2000u64;
    let cfg = StoppingConfig::new(0.2, 0.1);
    let spec: ModelSpec = "iid:normal:0:1".parse().unwrap();
    let (mut star, mut orig) = (Vec::new(), Vec::new());
    for run in 0..n {
        let mut model = spec.build().unwrap();
        let mut streams = StreamPair::new(StreamId::new(4, Purpose::Test).with_run(run));
        let o = run_stopping(&mut *model, &BatchSchedule::default(), &cfg, &mut streams).unwrap();
        star.push(o.mu_star);
        orig.push(o.mu_at_stop);
    }
    let stats = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, (v / n as f64).sqrt())
    };
    let (m, se) = stats(&star);
    let (mo, seo) = stats(&orig);
    check(
        m.abs() <= 3.0 * se,
        format!("mean mu* {m:.3e}, 3 SE {:.3e} (diagnostic: mean mu(tau) {mo:.3e}, 3 SE {:.3e})", 3.0 * se, 3.0 * seo),
    )
}

/// `Phi` on an ascending grid by integrating the density outward from 0,
/// 5-point Gauss-Legendre per grid interval.
fn phi_oracle(xs: &[f64]) -> Vec<f64> {
    const NODES: [f64; 3] = [0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 3] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let gl = |a: f64, b: f64| {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * (WEIGHTS[0] * pdf(m)
            + WEIGHTS[1] * (pdf(m - h * NODES[1]) + pdf(m + h * NODES[1]))
            + WEIGHTS[2] * (pdf(m - h * NODES[2]) + pdf(m + h * NODES[2])))
    };
    let split = xs.partition_point(|&x| x < 0.0);
    let mut out = vec![0.0; xs.len()];
    let (mut acc, mut prev) = (0.5, 0.0);
    for i in split..xs.len() {
        acc += gl(prev, xs[i]);
        prev = xs[i];
        out[i] = acc;
    }
    let (mut acc, mut prev) = (0.5, 0.0);
    for i in (0..split).rev() {
        acc -= gl(xs[i], prev);
        prev = xs[i];
        out[i] = acc;
    }
    out
}

fn criterion_5() -> Outcome {
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|i| -8.0 + 16.0 * i as f64 / (n - 1) as f64).collect();
    let max_err = xs
        .iter()
        .zip(phi_oracle(&xs))
        .map(|(&x, o)| (normal_cdf(x) - o).abs())
        .fold(0.0, f64::max);
    let inv_err = (0..=12_000)
        .map(|i| -6.0 + i as f64 / 1000.0)
        .map(|x| (normal_quantile(normal_cdf(x)).unwrap() - x).abs())
        .fold(0.0, f64::max);
    let q = normal_quantile(0.975).unwrap();
    check(
        max_err <= 1e-12 && inv_err <= 1e-6 && (q - 1.959_963_984_5).abs() <= 1e-9,
        format!("max |Phi - oracle| {max_err:.2e}, max round trip {inv_err:.2e}, Phi^-1(0.975) {q:.12}"),
    )
}

fn criterion_6() -> Outcome {
    let t = ScaledStudentT::new(6).unwrap();
    let mut s = RngStream::new(StreamId::new(6, Purpose::Test));
    let (mut m2, mut m4) = (0.0, 0.0);
    let n = 1_000_000;
    for _ in 0..n {
        let x2 = t.sample(&mut s).powi(2);
        m2 += x2;
        m4 += x2 * x2;
    }
    let (m2, m4) = (m2 / n as f64, m4 / n as f64);
    check(
        (0.99..=1.01).contains(&m2) && (5.1..=6.9).contains(&m4),
        format!("second moment {m2:.4}, fourth moment {m4:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let mut m = Arch1Model::new(0.03, 0.3, 6).unwrap();
    let mut s = RngStream::new(StreamId::new(7, Purpose::Test));
    for _ in 0..1000 {
        m.next_sample(&mut s);
    }
    let n = 1_000_000;
    let xs: Vec<f64> = (0..n).map(|_| m.next_sample(&mut s).value).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
    check(
        (0.309278 * 0.98..=0.309278 * 1.02).contains(&var) && (0.57651 * 0.8..=0.57651 * 1.2).contains(&m4),
        format!("variance {var:.5}, fourth moment {m4:.5}"),
    )
}

fn median_tau(eps: f64, runs: u64) -> f64 {
    let cfg = StoppingConfig::new(eps, 0.05).with_inflation(Inflation::None);
    let spec: ModelSpec = "iid:normal:0:1".parse().unwrap();
    let mut taus: Vec<u64> = (0..runs)
        .map(|run| {
            let mut model = spec.build().unwrap();
            let mut streams = StreamPair::new(StreamId::new(8, Purpose::Test).with_run(run));
            run_stopping(&mut *model, &BatchSchedule::default(), &cfg, &mut streams)
                .unwrap()
                .tau
        })
        .collect();
    taus.sort_unstable();
    let k = taus.len();
    (taus[(k - 1) / 2] + taus[k / 2]) as f64 / 2.0
}

fn criterion_8() -> Outcome {
    let (coarse, fine) = (median_tau(0.02, 500), median_tau(0.005, 500));
    let ratio = fine / coarse;
    check(
        (1.6..=2.4).contains(&ratio),
        format!("median tau {fine} (eps 0.005) / {coarse} (eps 0.02) = {ratio:.3}"),
    )
}

fn mdstop(args: &[&str], out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_mdstop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    assert!(status.success(), "mdstop {args:?} failed");
    std::fs::read(out).unwrap()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 4] = [
        &["run", "--seed", "9", "--epsilon", "0.03"],
        &["trace", "--seed", "9", "--model", "cv:usq_half", "--t-max", "8"],
        &[
            "evaluate", "--seed", "9", "--runs", "40", "--grid-points", "3",
            "--grid-eps", "0.02:0.1", "--grid-delta", "0.02:0.1",
        ],
        &["verify", "--seed", "9"],
    ];
    let mut bad = Vec::new();
    for args in commands {
        let outputs: Vec<Vec<u8>> = ["1", "3", "1"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let mut a = args.to_vec();
                a.extend(["--threads", threads]);
                mdstop(&a, &dir.path().join(format!("{}-{i}.out", args[0])))
            })
            .collect();
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            bad.push(args[0]);
        }
        if args[0] == "evaluate" {
            let summaries: Vec<Vec<u8>> = (0..3)
                .map(|i| std::fs::read(dir.path().join(format!("evaluate-{i}.summary.json"))).unwrap())
                .collect();
            if summaries.windows(2).any(|w| w[0] != w[1]) {
                bad.push("evaluate summary");
            }
        }
    }
    check(
        bad.is_empty(),
        format!("run, trace, evaluate, verify with --threads 1/3/1; differing: {bad:?}"),
    )
}

fn criterion_10() -> Outcome {
    let sched = BatchSchedule::default();
    let tau = |seed: u64, eps: f64, delta: f64, inflation: Inflation| {
        let cfg = StoppingConfig::new(eps, delta).with_inflation(inflation);
        let mut model = ModelSpec::default().build().unwrap();
        let mut streams = StreamPair::new(StreamId::new(seed, Purpose::Test).with_grid(10));
        run_stopping(&mut *model, &sched, &cfg, &mut streams).unwrap().tau
    };
    let eps = [0.01, 0.02, 0.05, 0.1, 0.2];
    let deltas = [0.01, 0.03, 0.1, 0.3];
    let mut violations = 0;
    for seed in 0..100 {
        for &d in &deltas {
            let ts: Vec<u64> = eps.iter().map(|&e| tau(seed, e, d, Inflation::InvT)).collect();
            violations += ts.windows(2).filter(|w| w[1] > w[0]).count();
        }
        for &e in &eps {
            let ts: Vec<u64> = deltas.iter().map(|&d| tau(seed, e, d, Inflation::InvT)).collect();
            violations += ts.windows(2).filter(|w| w[1] > w[0]).count();
            if tau(seed, e, 0.05, Inflation::InvT) < tau(seed, e, 0.05, Inflation::None) {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations over 100 seeds"))
}

fn main() {
    // Criteria 1 and 2 share the ARCH(1) grid.
    let arch = desk_grid("arch1");
    let cv = desk_grid("cv:usq_half");
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1(&arch)),
        (2, criterion_2(&arch, &cv)),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2}: PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
