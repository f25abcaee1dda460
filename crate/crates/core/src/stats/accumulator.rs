use serde::Serialize;

use super::StatsError;

/// Single-pass moments of one batch.
///
/// The mean is reported as `sum / n`, matching the plain batch average. The
/// centered sum of squares uses Welford's update so that batches with
/// millions of samples keep full precision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchAccumulator {
    count: u64,
    sum: f64,
    running_mean: f64,
    m2: f64,
    cond_var_sum: f64,
    cond_var_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance_unbiased: f64,
    pub variance_biased: f64,
    pub count: u64,
}

impl BatchAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        let delta = x - self.running_mean;
        self.running_mean += delta / self.count as f64;
        self.m2 += delta * (x - self.running_mean);
    }

    /// Records `Var_{k-1}(X_k)` for the most recent sample.
    pub fn push_cond_var(&mut self, v: f64) {
        self.cond_var_sum += v;
        self.cond_var_count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn mean(&self) -> Result<f64, StatsError> {
        if self.count == 0 {
            return Err(StatsError::TooFewSamples {
                needed: 1,
                have: 0,
            });
        }
        Ok(self.sum / self.count as f64)
    }

    /// `(1/(n-1)) * sum (x_k - mean)^2`.
    pub fn variance_unbiased(&self) -> Result<f64, StatsError> {
        self.need_two()?;
        Ok(self.m2 / (self.count - 1) as f64)
    }

    /// `(1/n) * sum x_k^2 - mean^2`, evaluated as the centered sum over `n`.
    pub fn variance_biased(&self) -> Result<f64, StatsError> {
        self.need_two()?;
        Ok(self.m2 / self.count as f64)
    }

    /// Average of the recorded conditional variances, present only when
    /// every sample in the batch supplied one.
    pub fn conditional_variance(&self) -> Option<f64> {
        (self.count > 0 && self.cond_var_count == self.count)
            .then(|| self.cond_var_sum / self.count as f64)
    }

    pub fn finalize(&self) -> Result<Moments, StatsError> {
        Ok(Moments {
            mean: self.mean()?,
            variance_unbiased: self.variance_unbiased()?,
            variance_biased: self.variance_biased()?,
            count: self.count,
        })
    }

    fn need_two(&self) -> Result<(), StatsError> {
        if self.count < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                have: self.count,
            });
        }
        Ok(())
    }
}

impl Extend<f64> for BatchAccumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for BatchAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = BatchAccumulator::new();
        acc.extend(iter);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        (mean, ss / (n - 1.0))
    }

    #[test]
    fn small_examples() {
        let acc: BatchAccumulator = [1.0, 2.0, 3.0].into_iter().collect();
        let m = acc.finalize().unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.variance_unbiased, 1.0);
        assert!((m.variance_biased - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.count, 3);

        let acc: BatchAccumulator = [5.0; 4].into_iter().collect();
        assert_eq!(acc.variance_unbiased().unwrap(), 0.0);
    }

    #[test]
    fn too_few_samples() {
        let mut acc = BatchAccumulator::new();
        assert!(acc.mean().is_err());
        acc.push(1.5);
        assert_eq!(acc.mean().unwrap(), 1.5);
        assert_eq!(
            acc.variance_unbiased(),
            Err(StatsError::TooFewSamples { needed: 2, have: 1 })
        );
        assert!(acc.finalize().is_err());
    }

    #[test]
    fn conditional_variance_requires_every_sample() {
        let mut acc = BatchAccumulator::new();
        assert_eq!(acc.conditional_variance(), None);
        acc.push(1.0);
        acc.push_cond_var(0.3);
        acc.push(2.0);
        assert_eq!(acc.conditional_variance(), None);
        acc.push_cond_var(0.5);
        assert_eq!(acc.conditional_variance(), Some(0.4));
    }

    #[test]
    fn large_offset_is_stable() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1e9 + (i % 7) as f64).collect();
        let acc: BatchAccumulator = xs.iter().copied().collect();
        let (_, var) = two_pass(&xs);
        let rel = (acc.variance_unbiased().unwrap() - var).abs() / var;
        assert!(rel < 1e-8, "rel {rel}");
    }

    proptest! {
        #[test]
        fn matches_two_pass(xs in proptest::collection::vec(-1e6f64..1e6, 2..400)) {
            let acc: BatchAccumulator = xs.iter().copied().collect();
            let (mean, var) = two_pass(&xs);
            prop_assert_eq!(acc.mean().unwrap(), xs.iter().sum::<f64>() / xs.len() as f64);
            prop_assert!((acc.mean().unwrap() - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            let got = acc.variance_unbiased().unwrap();
            prop_assert!((got - var).abs() <= 1e-12 * var.max(1e-300), "{} vs {}", got, var);
        }

        #[test]
        fn order_independent(mut xs in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let a: BatchAccumulator = xs.iter().copied().collect();
            xs.reverse();
            let k = xs.len() / 3;
            xs.rotate_left(k);
            let b: BatchAccumulator = xs.iter().copied().collect();
            let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
            let (va, vb) = (a.variance_unbiased().unwrap(), b.variance_unbiased().unwrap());
            prop_assert!((ma - mb).abs() <= 1e-10 * ma.abs().max(1e-10));
            prop_assert!((va - vb).abs() <= 1e-10 * va.max(1e-10));
        }
    }
}
