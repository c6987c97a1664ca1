//! Scene description and the energy minimized during contour evolution.
//!
//! Class 0 is background. Detections, shape states and semantic maps refer
//! to foreground classes by their index into `p_sem`.

mod energy;
mod graph;
mod priors;

pub use energy::{
    class_memberships, composite_field, image_energy_multi_class, image_energy_single_class,
    prior_energy, total_energy, total_energy_and_grad, EnergyBreakdown, EnergyEval, EnergyModel,
    PlacedField, StateGrad,
};
pub use graph::{build_interaction_graph, InteractionGraph, Rect};
pub use priors::{LocationModel, OrientationModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Smallest probability allowed inside a logarithm.
pub const PROB_CLAMP: f64 = 1e-6;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// An external object detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub center: (f64, f64),
    /// Pixels whose centers satisfy `x0 <= x <= x1`, `y0 <= y <= y1`.
    pub bbox: Rect,
    pub class_id: usize,
}

impl Detection {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let b = &self.bbox;
        if !(b.x1 > b.x0 && b.y1 > b.y0) {
            return Err(Error::Argument(format!("degenerate detection box {b:?}")));
        }
        let (cx, cy) = self.center;
        if !(cx >= 0.0 && cy >= 0.0 && cx <= (width - 1) as f64 && cy <= (height - 1) as f64) {
            return Err(Error::Argument(format!("detection center {:?} outside the image", self.center)));
        }
        if self.class_id == 0 {
            return Err(Error::Argument("detections must name a foreground class".into()));
        }
        Ok(())
    }
}

/// Semantic probabilities (one grid per class, background first), detections
/// and the shape window size of every class.
#[derive(Clone, Debug)]
pub struct SceneInputs {
    pub p_sem: Vec<Grid2D>,
    pub detections: Vec<Detection>,
    /// Indexed by class id; entry 0 is ignored.
    pub window_sizes: Vec<usize>,
}

impl SceneInputs {
    pub fn new(p_sem: Vec<Grid2D>, detections: Vec<Detection>, window_sizes: Vec<usize>) -> Result<Self> {
        let s = SceneInputs { p_sem, detections, window_sizes };
        s.validate()?;
        Ok(s)
    }

    /// Two-class scene from a foreground probability map.
    pub fn single_class(p_fg: &Grid2D, detections: Vec<Detection>, window: usize) -> Result<Self> {
        let bg = p_fg.map(|p| 1.0 - p);
        Self::new(vec![bg, p_fg.clone()], detections, vec![0, window])
    }

    pub fn dims(&self) -> (usize, usize) {
        self.p_sem[0].dims()
    }

    pub fn n_classes(&self) -> usize {
        self.p_sem.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_sem.len() < 2 {
            return Err(Error::Argument("need background and at least one foreground class".into()));
        }
        let dims = self.p_sem[0].dims();
        if self.p_sem.iter().any(|g| g.dims() != dims) {
            return Err(Error::Dimension("semantic maps differ in size".into()));
        }
        let (w, h) = dims;
        for i in 0..w * h {
            let s: f64 = self.p_sem.iter().map(|g| g.data()[i]).sum();
            if (s - 1.0).abs() > 1e-4 {
                return Err(Error::Argument(format!(
                    "class probabilities at pixel ({}, {}) sum to {s}",
                    i % w,
                    i / w
                )));
            }
        }
        if self.window_sizes.len() != self.p_sem.len() {
            return Err(Error::Argument("one window size per class required".into()));
        }
        for (c, &d) in self.window_sizes.iter().enumerate().skip(1) {
            if d == 0 || d > w || d > h {
                return Err(Error::Argument(format!("window size {d} of class {c} does not fit the image")));
            }
        }
        for d in &self.detections {
            d.validate(w, h)?;
            if d.class_id >= self.p_sem.len() {
                return Err(Error::Argument(format!("detection class {} has no semantic map", d.class_id)));
            }
        }
        Ok(())
    }

    /// Per-pixel argmax class (lowest index on ties).
    pub fn argmax_class(&self) -> Vec<usize> {
        let (w, h) = self.dims();
        (0..w * h)
            .map(|i| {
                let mut best = 0;
                for c in 1..self.p_sem.len() {
                    if self.p_sem[c].data()[i] > self.p_sem[best].data()[i] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Pose and shape of one evolving contour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeState {
    pub center: (f64, f64),
    pub kappa: f64,
    pub alpha: Vec<f64>,
    pub class_id: usize,
    /// Index of the detection this shape was initialized from.
    pub detection: usize,
}

/// Non-negative weights of the prior terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub gamma_shp: f64,
    pub gamma_loc: f64,
    pub gamma_ori: f64,
    pub gamma_ovp: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            gamma_shp: 1.0,
            gamma_loc: 0.1,
            gamma_ori: 0.0,
            gamma_ovp: 5.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma_shp, self.gamma_loc, self.gamma_ori, self.gamma_ovp];
        if all.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Argument(format!("energy weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnergyWeights {
            gamma_shp: self.gamma_shp * k,
            gamma_loc: self.gamma_loc * k,
            gamma_ori: self.gamma_ori * k,
            gamma_ovp: self.gamma_ovp * k,
        }
    }
}

#[cfg(test)]
mod tests;
