use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic Gaussian around the detected center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationModel {
    pub sigma_loc: f64,
}

impl Default for LocationModel {
    fn default() -> Self {
        LocationModel { sigma_loc: 3.0 }
    }
}

impl LocationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_loc > 0.0) {
            return Err(Error::Argument(format!("sigma_loc must be > 0, got {}", self.sigma_loc)));
        }
        Ok(())
    }

    /// Distance beyond which the prior is considered negligible.
    pub fn reach(&self) -> f64 {
        3.0 * self.sigma_loc
    }

    /// `-log P(center)` up to a constant, and its gradient.
    pub fn neg_log(&self, center: (f64, f64), detected: (f64, f64)) -> (f64, (f64, f64)) {
        let s2 = self.sigma_loc * self.sigma_loc;
        let dx = center.0 - detected.0;
        let dy = center.1 - detected.1;
        ((dx * dx + dy * dy) / (2.0 * s2), (dx / s2, dy / s2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum OrientationModel {
    #[default]
    Uniform,
    VonMises { mu: f64, concentration: f64 },
}


/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

impl OrientationModel {
    pub fn validate(&self) -> Result<()> {
        if let OrientationModel::VonMises { concentration, mu } = self {
            if !(*concentration >= 0.0) || !mu.is_finite() {
                return Err(Error::Argument("von Mises concentration must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// `log P_rot(kappa)` and its derivative.
    pub fn log_density(&self, kappa: f64) -> (f64, f64) {
        match *self {
            OrientationModel::Uniform => (-(2.0 * PI).ln(), 0.0),
            OrientationModel::VonMises { mu, concentration: k } => {
                let norm = (2.0 * PI * bessel_i0(k)).ln();
                (k * (kappa - mu).cos() - norm, -k * (kappa - mu).sin())
            }
        }
    }
}
