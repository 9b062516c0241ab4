use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population central-moment summary of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub variance: f64,
    /// `m3 / m2^1.5`; `None` when the variance is zero.
    pub skew: Option<f64>,
    /// `m4 / m2^2 - 3`; `None` when the variance is zero.
    pub excess_kurtosis: Option<f64>,
}

/// Streaming accumulator for the first four central moments
/// (Terriberry's single-pass update).
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Result<Moments> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "moments need at least 2 values, got {}",
                self.n
            )));
        }
        let n = self.n as f64;
        let variance = self.m2 / n;
        if variance <= 0.0 {
            return Ok(Moments {
                variance: 0.0,
                skew: None,
                excess_kurtosis: None,
            });
        }
        Ok(Moments {
            variance,
            skew: Some((self.m3 / n) / variance.powf(1.5)),
            excess_kurtosis: Some((self.m4 / n) / (variance * variance) - 3.0),
        })
    }
}

pub fn moments(values: &[f64]) -> Result<Moments> {
    let mut acc = MomentAccumulator::default();
    values.iter().for_each(|&x| acc.push(x));
    acc.finish()
}
