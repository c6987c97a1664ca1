//! Smooth surrogates for the Heaviside step and the pointwise maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothMaxVariant {
    ExpWeightedAverage,
    LogSumExp,
    PNorm,
}

impl std::str::FromStr for SmoothMaxVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp-weighted-average" => Ok(Self::ExpWeightedAverage),
            "log-sum-exp" => Ok(Self::LogSumExp),
            "p-norm" => Ok(Self::PNorm),
            other => Err(Error::Config(format!("unknown smooth-max variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for SmoothMaxVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ExpWeightedAverage => "exp-weighted-average",
            Self::LogSumExp => "log-sum-exp",
            Self::PNorm => "p-norm",
        })
    }
}

/// Heaviside steepness `delta` and smooth-max sharpness `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub delta: f64,
    pub gamma: f64,
    pub variant: SmoothMaxVariant,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            delta: 1.0,
            gamma: 10.0,
            variant: SmoothMaxVariant::LogSumExp,
        }
    }
}

impl SmoothParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Argument(format!(
                "smooth params need delta > 0 and gamma > 0 (got {}, {})",
                self.delta, self.gamma
            )));
        }
        Ok(())
    }
}

/// Logistic step `1 / (1 + exp(-x / delta))`.
#[inline]
pub fn smooth_heaviside(x: f64, delta: f64) -> f64 {
    let t = x / delta;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`smooth_heaviside`] with respect to `x`.
#[inline]
pub fn smooth_heaviside_deriv(x: f64, delta: f64) -> f64 {
    let h = smooth_heaviside(x, delta);
    h * (1.0 - h) / delta
}

pub fn smooth_max(values: &[f64], params: &SmoothParams) -> Result<f64> {
    let mut scratch = vec![0.0; values.len()];
    smooth_max_with_grad(values, params, &mut scratch)
}

/// Smooth maximum of `values`, writing `dS/dx_i` into `grad`.
///
/// The exponential variants are evaluated relative to `max(values)` so large
/// `gamma` does not overflow. At the all-zero point the p-norm is not
/// differentiable for `gamma > 1`; the gradient is reported as zero there.
pub fn smooth_max_with_grad(values: &[f64], params: &SmoothParams, grad: &mut [f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("smooth max of an empty sequence".into()));
    }
    debug_assert_eq!(values.len(), grad.len());
    let gamma = params.gamma;
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match params.variant {
        SmoothMaxVariant::LogSumExp => {
            let mut z = 0.0;
            for (g, &x) in grad.iter_mut().zip(values) {
                *g = (gamma * (x - m)).exp();
                z += *g;
            }
            for g in grad.iter_mut() {
                *g /= z;
            }
            Ok(m + z.ln() / gamma)
        }
        SmoothMaxVariant::ExpWeightedAverage => {
            let mut z = 0.0;
            let mut num = 0.0;
            for (g, &x) in grad.iter_mut().zip(values) {
                *g = (gamma * (x - m)).exp();
                z += *g;
                num += x * *g;
            }
            let s = num / z;
            for (g, &x) in grad.iter_mut().zip(values) {
                *g = *g / z * (1.0 + gamma * (x - s));
            }
            Ok(s)
        }
        SmoothMaxVariant::PNorm => {
            if let Some(x) = values.iter().find(|&&x| x < 0.0) {
                return Err(Error::Argument(format!(
                    "p-norm smooth max needs non-negative inputs, got {x}"
                )));
            }
            if m == 0.0 {
                grad.fill(if gamma == 1.0 { 1.0 } else { 0.0 });
                return Ok(0.0);
            }
            let sum: f64 = values.iter().map(|&x| (x / m).powf(gamma)).sum();
            let s = m * sum.powf(1.0 / gamma);
            for (g, &x) in grad.iter_mut().zip(values) {
                *g = (x / s).powf(gamma - 1.0);
            }
            Ok(s)
        }
    }
}
