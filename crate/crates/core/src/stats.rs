//! Sample-mean estimators with standard errors.

use serde::{Deserialize, Serialize};

/// A sample mean with its standard error `s/√n` (`s` uses the n−1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl CorrelationEstimate {
    /// From the integer sums `Σx` and `Σx²` of `n` integer-valued samples.
    pub fn from_int_sums(sum: i64, sum_sq: i64, n: u64) -> Self {
        Self::from_sums(sum as f64, sum_sq as f64, n)
    }

    pub fn from_sums(sum: f64, sum_sq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let stderr = if n >= 2 {
            let var = ((sum_sq - sum * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr, n }
    }

    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0u64);
        for x in samples {
            sum += x;
            sum_sq += x * x;
            n += 1;
        }
        Self::from_sums(sum, sum_sq, n)
    }

    /// An affine image `offset + scale·X` of the estimate.
    pub fn affine(&self, offset: f64, scale: f64) -> Self {
        Self {
            mean: offset + scale * self.mean,
            stderr: scale.abs() * self.stderr,
            n: self.n,
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}
