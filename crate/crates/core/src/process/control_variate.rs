use std::fmt;

use super::{ModelState, ProcessError, ProcessModel, Sample};
use crate::schedule::BatchSchedule;
use crate::stats::RngStream;

/// Integrand `Psi: (0,1)^d -> R` of additive form `Psi(u) = sum_j p_j(u_j)`
/// with each `p_j` a polynomial. Every moment the model needs is then
/// available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrand {
    /// `Psi(u) = u^2 / 2` on `(0, 1)`.
    UsqHalf,
    /// One coefficient list `[c0, c1, ...]` per coordinate.
    Polynomials(Vec<Vec<f64>>),
}

const USQ_HALF: [f64; 3] = [0.0, 0.0, 0.5];

impl Integrand {
    pub fn usq_half() -> Self {
        Integrand::UsqHalf
    }

    pub fn polynomials(components: Vec<Vec<f64>>) -> Result<Self, ProcessError> {
        if components.is_empty() || components.iter().any(|c| c.is_empty()) {
            return Err(ProcessError::InvalidParameter(
                "integrand needs at least one non-empty coefficient list".into(),
            ));
        }
        if components.iter().flatten().any(|c| !c.is_finite()) {
            return Err(ProcessError::InvalidParameter(
                "integrand coefficients must be finite".into(),
            ));
        }
        Ok(Integrand::Polynomials(components))
    }

    /// Parses `c0,c1,...;c0,c1,...` (one list per coordinate).
    pub fn parse_polynomials(s: &str) -> Result<Self, ProcessError> {
        let components = s
            .split(';')
            .map(|list| {
                list.split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ProcessError::Parse(format!("cv:poly:{s}")))?;
        Integrand::polynomials(components)
    }

    fn components(&self) -> Vec<&[f64]> {
        match self {
            Integrand::UsqHalf => vec![&USQ_HALF[..]],
            Integrand::Polynomials(c) => c.iter().map(Vec::as_slice).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Integrand::UsqHalf => 1,
            Integrand::Polynomials(c) => c.len(),
        }
    }

    fn eval_component(coeffs: &[f64], u: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.components()
            .iter()
            .zip(u)
            .map(|(c, &x)| Self::eval_component(c, x))
            .sum()
    }

    /// `mu = int Psi(u) du`.
    pub fn mean(&self) -> f64 {
        self.components().iter().map(|c| integral(c)).sum()
    }

    /// `int Psi(u) (u - 1/2) du`, one entry per coordinate.
    pub fn cross_moment(&self) -> Vec<f64> {
        self.components()
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(i, &ci)| ci * (1.0 / (i as f64 + 2.0) - 0.5 / (i as f64 + 1.0)))
                    .sum()
            })
            .collect()
    }

    /// `V(0) - mu^2`, the variance of a crude sample.
    pub fn variance(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| {
                let m = integral(c);
                let sq: f64 = c
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &ci)| {
                        c.iter()
                            .enumerate()
                            .map(move |(k, &ck)| ci * ck / (i + k + 1) as f64)
                    })
                    .sum();
                sq - m * m
            })
            .sum()
    }

    /// `V(0) = int Psi(u)^2 du`.
    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean().powi(2)
    }

    /// `theta* = -12 int Psi(u) (u - 1/2) du`.
    pub fn optimal_theta(&self) -> Vec<f64> {
        self.cross_moment().iter().map(|c| -12.0 * c).collect()
    }

    /// `V(theta) - mu^2 = Var(Psi) + 2 <theta, cross> + |theta|^2 / 12`.
    pub fn variance_at(&self, theta: &[f64]) -> f64 {
        let cross = self.cross_moment();
        let dot: f64 = theta.iter().zip(&cross).map(|(t, c)| t * c).sum();
        let norm2: f64 = theta.iter().map(|t| t * t).sum();
        self.variance() + 2.0 * dot + norm2 / 12.0
    }
}

fn integral(coeffs: &[f64]) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| c / (i as f64 + 1.0))
        .sum()
}

impl fmt::Display for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integrand::UsqHalf => f.write_str("usq_half"),
            Integrand::Polynomials(components) => {
                f.write_str("poly:")?;
                for (j, c) in components.iter().enumerate() {
                    if j > 0 {
                        f.write_str(";")?;
                    }
                    for (i, v) in c.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{v}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Adaptive control variates: `X_k = Psi(U_k) + <theta(t-1), U_k - 1/2>` with
/// `theta` frozen within a batch and refreshed after it as
/// `theta(t) = -12 * mean_{k in M(t)} Psi(U_k)(U_k - 1/2)`.
#[derive(Debug, Clone)]
pub struct ControlVariateModel {
    integrand: Integrand,
    adaptive: bool,
    theta: Vec<f64>,
    cross_sum: Vec<f64>,
    count: u64,
    cond_var: f64,
    scratch: Vec<f64>,
}

impl ControlVariateModel {
    pub fn new(integrand: Integrand) -> Self {
        let d = integrand.dimension();
        let cond_var = integrand.variance();
        ControlVariateModel {
            integrand,
            adaptive: true,
            theta: vec![0.0; d],
            cross_sum: vec![0.0; d],
            count: 0,
            cond_var,
            scratch: vec![0.0; d],
        }
    }

    /// Crude Monte Carlo: `theta` stays at zero.
    pub fn crude(mut self) -> Self {
        self.adaptive = false;
        self
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn integrand(&self) -> &Integrand {
        &self.integrand
    }

    fn refresh_cond_var(&mut self) {
        self.cond_var = self.integrand.variance_at(&self.theta);
    }
}

impl ProcessModel for ControlVariateModel {
    fn kind(&self) -> &'static str {
        "cv"
    }

    fn next_sample(&mut self, stream: &mut RngStream) -> Sample {
        for u in self.scratch.iter_mut() {
            *u = stream.uniform();
        }
        let psi = self.integrand.eval(&self.scratch);
        let mut value = psi;
        for (j, &u) in self.scratch.iter().enumerate() {
            value += self.theta[j] * (u - 0.5);
            if self.adaptive {
                self.cross_sum[j] += psi * (u - 0.5);
            }
        }
        self.count += 1;
        Sample {
            value,
            cond_var: Some(self.cond_var),
        }
    }

    fn checkpoint(&self) -> ModelState {
        ModelState::ControlVariate {
            theta: self.theta.clone(),
            cross_sum: self.cross_sum.clone(),
            count: self.count,
        }
    }

    fn restore(&mut self, state: &ModelState) -> Result<(), ProcessError> {
        match state {
            ModelState::ControlVariate {
                theta,
                cross_sum,
                count,
            } => {
                let d = self.integrand.dimension();
                if theta.len() != d || cross_sum.len() != d {
                    return Err(ProcessError::InvalidParameter(format!(
                        "checkpoint dimension {} does not match integrand dimension {d}",
                        theta.len()
                    )));
                }
                self.theta.clone_from(theta);
                self.cross_sum.clone_from(cross_sum);
                self.count = *count;
                self.refresh_cond_var();
                Ok(())
            }
            other => Err(ProcessError::StateMismatch {
                expected: "cv",
                found: other.kind(),
            }),
        }
    }

    fn on_batch_end(&mut self) {
        if self.adaptive && self.count > 0 {
            let n = self.count as f64;
            for (theta, sum) in self.theta.iter_mut().zip(self.cross_sum.iter_mut()) {
                *theta = -12.0 * *sum / n;
                *sum = 0.0;
            }
            self.refresh_cond_var();
        }
        self.count = 0;
    }

    fn has_conditional_variance(&self) -> bool {
        true
    }

    /// Depends on the law of the random `theta` path; not available.
    fn theoretical_batch_variance(&self, _schedule: &BatchSchedule, _t: u64) -> Option<f64> {
        None
    }

    fn fork(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
