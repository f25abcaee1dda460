//! Numerical checks against independent oracles, run by `mdstop verify`.

use serde::Serialize;

use crate::process::{Arch1Model, Integrand, ModelSpec, ProcessModel};
use crate::schedule::BatchSchedule;
use crate::stats::{
    normal_cdf, normal_pdf, normal_quantile, BatchAccumulator, Purpose, RngStream, ScaledStudentT,
    StreamId,
};
use crate::stopping::{run_stopping, StoppingConfig, StreamPair};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: String,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, measured: f64, expected: String, passed: bool) -> Self {
        Check {
            name: name.to_string(),
            measured,
            expected,
            passed,
        }
    }

    fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Check::new(name, measured, format!("[{lo}, {hi}]"), measured >= lo && measured <= hi)
    }

    fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Check::new(name, measured, format!("<= {bound}"), measured <= bound)
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss-Legendre rule on `[a, b]`.
pub fn quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let panel: f64 = GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * f(mid + 0.5 * h * x))
            .sum();
        total += 0.5 * h * panel;
    }
    total
}

/// `Phi(x)` by integrating the density from 0, independent of the erf code.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let half = quadrature(normal_pdf, 0.0, x.abs(), 64);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

fn kernel_checks() -> Vec<Check> {
    let mut out = vec![Check::within("Phi(0)", normal_cdf(0.0), 0.5, 0.5)];
    let grid = (0..=4000).map(|i| -8.0 + 16.0 * i as f64 / 4000.0);
    let cdf_err = grid
        .clone()
        .map(|x| (normal_cdf(x) - normal_cdf_quadrature(x)).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most("max |Phi - quadrature| on [-8, 8]", cdf_err, 1e-12));
    let inv_err = (0..=1200)
        .map(|i| -6.0 + 12.0 * i as f64 / 1200.0)
        .map(|x| (normal_quantile(normal_cdf(x)).unwrap() - x).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most("max |Phi^-1(Phi(x)) - x| on [-6, 6]", inv_err, 1e-6));
    let q = normal_quantile(0.975).unwrap();
    out.push(Check::within(
        "Phi^-1(0.975)",
        q,
        1.959_963_984_5 - 1e-9,
        1.959_963_984_5 + 1e-9,
    ));
    out
}

fn scaled_t_checks(seed: u64, draws: u64) -> Vec<Check> {
    let t = ScaledStudentT::new(6).expect("dof 6 is valid");
    let mut s = RngStream::new(StreamId::new(seed, Purpose::Verify).with_grid(1));
    let (mut m2, mut m4) = (0.0, 0.0);
    for _ in 0..draws {
        let x = t.sample(&mut s);
        let x2 = x * x;
        m2 += x2;
        m4 += x2 * x2;
    }
    let n = draws as f64;
    vec![
        Check::within("scaled t(6) second moment", m2 / n, 0.99, 1.01),
        Check::within("scaled t(6) fourth moment", m4 / n, 5.1, 6.9),
    ]
}

fn arch_checks(seed: u64, draws: u64) -> Vec<Check> {
    let mut m = Arch1Model::new(0.03, 0.3, 6).expect("default ARCH parameters are valid");
    let mut out = vec![Check::at_most(
        "ARCH stability 3 alpha^2 (n-2)/(n-4)",
        m.stability_index(),
        1.0 - f64::EPSILON,
    )];
    let var_target = 0.3 / 0.97;
    let kappa = 3.0 * 4.0 / 2.0;
    let fourth_target =
        kappa * 0.09 * 1.03 / (0.97 * (1.0 - kappa * 0.03 * 0.03));
    let mut s = RngStream::new(StreamId::new(seed, Purpose::Verify).with_grid(2));
    for _ in 0..1000 {
        m.next_sample(&mut s);
    }
    let mut acc = BatchAccumulator::new();
    let mut m4 = 0.0;
    for _ in 0..draws {
        let x = m.next_sample(&mut s).value;
        acc.push(x);
        m4 += x.powi(4);
    }
    let var = acc.variance_unbiased().unwrap_or(f64::NAN);
    out.push(Check::within(
        "ARCH sample variance",
        var,
        0.98 * var_target,
        1.02 * var_target,
    ));
    out.push(Check::within(
        "ARCH sample fourth moment",
        m4 / draws as f64,
        0.8 * fourth_target,
        1.2 * fourth_target,
    ));
    let sched = BatchSchedule::default();
    let v0 = m.theoretical_batch_variance(&sched, 8).unwrap_or(f64::NAN);
    out.push(Check::within("ARCH v0^2(8)", v0, var_target - 1e-12, var_target + 1e-12));
    out
}

fn control_variate_checks() -> Vec<Check> {
    let psi = |u: f64| 0.5 * u * u;
    let mu = quadrature(psi, 0.0, 1.0, 8);
    let cross = quadrature(|u| psi(u) * (u - 0.5), 0.0, 1.0, 8);
    let theta_star = -12.0 * cross;
    let v_star = quadrature(|u| (psi(u) + theta_star * (u - 0.5)).powi(2), 0.0, 1.0, 8) - mu * mu;
    let v_crude = quadrature(|u| psi(u).powi(2), 0.0, 1.0, 8) - mu * mu;
    let integrand = Integrand::usq_half();
    let tol = 1e-12;
    let near = |name: &str, got: f64, want: f64| Check::within(name, got, want - tol, want + tol);
    vec![
        near("CV mu by quadrature", mu, 1.0 / 6.0),
        near("CV theta* by quadrature", theta_star, -0.5),
        near("CV theta* closed form", integrand.optimal_theta()[0], theta_star),
        near("CV V(theta*) - mu^2 by quadrature", v_star, 1.0 / 720.0),
        near("CV V(theta*) - mu^2 closed form", integrand.variance_at(&[theta_star]), v_star),
        near("CV V(0) - mu^2 by quadrature", v_crude, 1.0 / 45.0),
    ]
}

fn unbiasedness_check(seed: u64, runs: u64) -> Check {
    let spec: ModelSpec = "iid:normal:0:1".parse().expect("valid model");
    let cfg = StoppingConfig::new(0.2, 0.1);
    let sched = BatchSchedule::default();
    let mut acc = BatchAccumulator::new();
    for run in 0..runs {
        let mut model = spec.build().expect("valid model");
        let mut streams = StreamPair::new(StreamId::new(seed, Purpose::Verify).with_grid(3).with_run(run));
        let out = run_stopping(&mut *model, &sched, &cfg, &mut streams).expect("valid run");
        acc.push(out.mu_star);
    }
    let mean = acc.mean().unwrap_or(f64::NAN);
    let se = (acc.variance_unbiased().unwrap_or(f64::NAN) / runs as f64).sqrt();
    Check::new(
        "mean of mu* over iid normal runs",
        mean,
        format!("|x| <= 3 SE = {:.3e}", 3.0 * se),
        mean.abs() <= 3.0 * se,
    )
}

/// Every check, with the given seed for the Monte Carlo ones.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = kernel_checks();
    out.extend(scaled_t_checks(seed, 1_000_000));
    out.extend(arch_checks(seed, 1_000_000));
    out.extend(control_variate_checks());
    out.push(unbiasedness_check(seed, 2000));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_exact_for_low_degree() {
        let got = quadrature(|u| u.powi(9), 0.0, 1.0, 1);
        assert!((got - 0.1).abs() < 1e-15);
        let got = quadrature(|u| u.powi(8) - 3.0 * u, -1.0, 2.0, 3);
        let want = (512.0 + 1.0) / 9.0 - 1.5 * (4.0 - 1.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn quadrature_cdf_oracle() {
        assert_eq!(normal_cdf_quadrature(0.0), 0.5);
        assert!((normal_cdf_quadrature(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
        assert!((normal_cdf_quadrature(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn deterministic_checks_pass() {
        for c in kernel_checks().into_iter().chain(control_variate_checks()) {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn stability_value() {
        let c = &arch_checks(1, 10)[0];
        assert!((c.measured - 0.0054).abs() < 1e-15 && c.passed);
    }
}
