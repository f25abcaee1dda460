use super::{ModelState, ProcessError, ProcessModel, Sample};
use crate::schedule::BatchSchedule;
use crate::stats::{RngStream, ScaledStudentT};

/// ARCH(1): `X_k = sqrt(beta + alpha * X_{k-1}^2) * V_k`, `X_0 = 0`, with
/// `V_k` iid unit-variance Student-t.
#[derive(Debug, Clone)]
pub struct Arch1Model {
    alpha: f64,
    beta: f64,
    innovations: ScaledStudentT,
    lag: f64,
}

impl Arch1Model {
    pub fn new(alpha: f64, beta: f64, dof: u32) -> Result<Self, ProcessError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ProcessError::InvalidParameter(format!(
                "alpha {alpha} must lie in (0, 1)"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ProcessError::InvalidParameter(format!(
                "beta {beta} must be positive"
            )));
        }
        let innovations = ScaledStudentT::new(dof)?;
        let model = Arch1Model {
            alpha,
            beta,
            innovations,
            lag: 0.0,
        };
        // Bounded fourth moment of the stationary law.
        if model.stability_index() >= 1.0 {
            return Err(ProcessError::InvalidParameter(format!(
                "3 alpha^2 (n-2)/(n-4) = {} must be below 1",
                model.stability_index()
            )));
        }
        Ok(model)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn set_lag(&mut self, lag: f64) {
        self.lag = lag;
    }

    /// `alpha^2 * E[V^4] = 3 alpha^2 (n-2)/(n-4)`.
    pub fn stability_index(&self) -> f64 {
        self.alpha * self.alpha * self.innovations.fourth_moment()
    }

    /// `Var_0(X_k) = beta (1 - alpha^k) / (1 - alpha)`.
    pub fn unconditional_variance(&self, k: u64) -> f64 {
        self.beta * (1.0 - self.alpha.powf(k as f64)) / (1.0 - self.alpha)
    }

    /// `beta / (1 - alpha)`.
    pub fn stationary_variance(&self) -> f64 {
        self.beta / (1.0 - self.alpha)
    }

    /// Limit of `E[X_k^4]`:
    /// `kappa beta^2 (1 + alpha) / ((1 - alpha)(1 - kappa alpha^2))` with `kappa = E[V^4]`.
    pub fn stationary_fourth_moment(&self) -> f64 {
        let kappa = self.innovations.fourth_moment();
        let (a, b) = (self.alpha, self.beta);
        kappa * b * b * (1.0 + a) / ((1.0 - a) * (1.0 - kappa * a * a))
    }

    /// The expression `beta/(1-alpha) * (1 - (alpha^{m(t-1)+1} - alpha^{m(t)}) / 2)`.
    /// It differs from the exact batch average of `Var_0(X_k)` returned by
    /// [`ProcessModel::theoretical_batch_variance`] and is kept only so that
    /// reports can show both side by side.
    pub fn half_difference_batch_variance(&self, schedule: &BatchSchedule, t: u64) -> Option<f64> {
        let lo = schedule.batch_bound(t.checked_sub(1)?).ok()?;
        let hi = schedule.batch_bound(t).ok()?;
        let a = self.alpha;
        Some(self.stationary_variance() * (1.0 - (a.powf((lo + 1) as f64) - a.powf(hi as f64)) / 2.0))
    }
}

impl ProcessModel for Arch1Model {
    fn kind(&self) -> &'static str {
        "arch1"
    }

    fn next_sample(&mut self, stream: &mut RngStream) -> Sample {
        let cond_var = self.beta + self.alpha * self.lag * self.lag;
        let value = cond_var.sqrt() * self.innovations.sample(stream);
        self.lag = value;
        Sample {
            value,
            cond_var: Some(cond_var),
        }
    }

    fn checkpoint(&self) -> ModelState {
        ModelState::Arch1 { lag: self.lag }
    }

    fn restore(&mut self, state: &ModelState) -> Result<(), ProcessError> {
        match state {
            ModelState::Arch1 { lag } => {
                self.lag = *lag;
                Ok(())
            }
            other => Err(ProcessError::StateMismatch {
                expected: "arch1",
                found: other.kind(),
            }),
        }
    }

    fn has_conditional_variance(&self) -> bool {
        true
    }

    /// Average of `beta (1 - alpha^k) / (1 - alpha)` over `k in M(t)`, with the
    /// geometric part `sum alpha^k` summed in closed form.
    fn theoretical_batch_variance(&self, schedule: &BatchSchedule, t: u64) -> Option<f64> {
        let first = schedule.batch_bound(t.checked_sub(1)?).ok()? + 1;
        let size = schedule.batch_size(t).ok()?;
        let a = self.alpha;
        let geometric = a.powf(first as f64) * (1.0 - a.powf(size as f64)) / (1.0 - a);
        Some(self.stationary_variance() * (1.0 - geometric / size as f64))
    }

    fn fork(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
