use crate::error::{Error, Result};

use super::ShapeCode;

/// Gaussian kernel density estimate over training shape codes.
#[derive(Clone, Debug, PartialEq)]
pub struct KdePrior {
    pub codes: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Set when the bandwidth rule degenerated and `sigma` fell back to 1.
    pub sigma_fallback: bool,
}

/// Builds the prior. Without an explicit `sigma`, the bandwidth is the mean
/// distance from each code to its nearest other code.
pub fn fit_kde(codes: &[ShapeCode], sigma: Option<f64>) -> Result<KdePrior> {
    if codes.len() < 2 {
        return Err(Error::Argument("kernel density prior needs at least 2 codes".into()));
    }
    let c = codes[0].len();
    if codes.iter().any(|a| a.len() != c) {
        return Err(Error::Dimension("shape codes differ in length".into()));
    }
    let stored: Vec<Vec<f64>> = codes.iter().map(|a| a.0.clone()).collect();
    if let Some(s) = sigma {
        if !(s > 0.0) {
            return Err(Error::Argument(format!("kde sigma must be > 0, got {s}")));
        }
        return Ok(KdePrior {
            codes: stored,
            sigma: s,
            sigma_fallback: false,
        });
    }
    let n = stored.len();
    let mut total = 0.0;
    for i in 0..n {
        let nearest = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist2(&stored[i], &stored[j]))
            .fold(f64::INFINITY, f64::min);
        total += nearest.sqrt();
    }
    let auto = total / n as f64;
    if auto > 0.0 {
        Ok(KdePrior {
            codes: stored,
            sigma: auto,
            sigma_fallback: false,
        })
    } else {
        log::warn!("all shape codes coincide; kde bandwidth falls back to 1.0");
        Ok(KdePrior {
            codes: stored,
            sigma: 1.0,
            sigma_fallback: true,
        })
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdePrior {
    pub fn dim(&self) -> usize {
        self.codes[0].len()
    }

    /// `log Σ_i exp(-|α - α_i|² / 2σ²)` and its gradient. The normalizing
    /// constant is omitted.
    pub fn log_prior(&self, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        if alpha.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "code has length {}, prior expects {}",
                alpha.len(),
                self.dim()
            )));
        }
        let s2 = self.sigma * self.sigma;
        let expo: Vec<f64> = self.codes.iter().map(|t| -dist2(alpha, t) / (2.0 * s2)).collect();
        let m = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = expo.iter().map(|e| (e - m).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut grad = vec![0.0; alpha.len()];
        for (w, t) in weights.iter().zip(&self.codes) {
            let w = w / z;
            for ((g, a), b) in grad.iter_mut().zip(alpha).zip(t) {
                *g -= w * (a - b) / s2;
            }
        }
        Ok((m + z.ln(), grad))
    }
}
