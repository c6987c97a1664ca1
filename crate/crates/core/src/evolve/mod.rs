//! End-to-end segmentation: shape initialization from detections, joint
//! L-BFGS evolution of all shapes, and extraction of disjoint masks.

mod init;
mod lbfgs;

pub use init::{crop_init_mask, init_rotation, initialize_states, rotate_mask, InitConfig};
pub use lbfgs::{minimize, LbfgsConfig, LbfgsOutcome, LbfgsStatus};

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderVariant, DecoderWeights};
use crate::error::{Error, Result};
use crate::grid::{normalize_angle, BinaryMask, SmoothParams};
use crate::scene::{
    build_interaction_graph, composite_field, total_energy, total_energy_and_grad, EnergyBreakdown, EnergyModel,
    EnergyWeights, LocationModel, OrientationModel, SceneInputs, ShapeState,
};
use crate::shape::{KpcaModel, ShapeBundle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub optimizer: LbfgsConfig,
    /// Shapes whose final mask is smaller than this many pixels are pruned.
    pub empty_shape_area_threshold: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            optimizer: LbfgsConfig::default(),
            empty_shape_area_threshold: 10,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.optimizer.max_iterations == 0 || self.empty_shape_area_threshold == 0 {
            return Err(Error::Config("max_iterations and empty_shape_area_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Final per-pixel assignment of shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMasks {
    /// One mask per kept shape, in shape order.
    pub masks: Vec<BinaryMask>,
    /// State index of each entry of `masks`.
    pub owners: Vec<usize>,
    /// Per state.
    pub pruned: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    pub masks: Vec<BinaryMask>,
    pub owners: Vec<usize>,
    pub pruned: Vec<bool>,
    pub states: Vec<ShapeState>,
    /// Energy at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub terms: EnergyBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

/// Per-parameter scale of the code block: optimizing `u` with
/// `alpha = sqrt(lambda) * u` equalizes the spread of the code components.
pub fn code_scales(kpca: &KpcaModel) -> Vec<f64> {
    kpca.lambda.iter().map(|l| l.sqrt().max(1e-12)).collect()
}

const STATE_HEAD: usize = 3;

fn flatten(states: &[ShapeState], scales: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(states.len() * (STATE_HEAD + scales.len()));
    for s in states {
        v.extend([s.center.0, s.center.1, s.kappa]);
        v.extend(s.alpha.iter().zip(scales).map(|(a, k)| a / k));
    }
    v
}

fn unflatten(v: &[f64], template: &[ShapeState], scales: &[f64]) -> Vec<ShapeState> {
    let stride = STATE_HEAD + scales.len();
    template
        .iter()
        .zip(v.chunks(stride))
        .map(|(t, p)| ShapeState {
            center: (p[0], p[1]),
            kappa: p[2],
            alpha: p[STATE_HEAD..].iter().zip(scales).map(|(u, k)| u * k).collect(),
            class_id: t.class_id,
            detection: t.detection,
        })
        .collect()
}

/// Minimizes the total energy jointly over every shape's center, angle and
/// code, starting from `states`. `scales` precondition the code block (see
/// [`code_scales`]); the gradient tolerance applies in the scaled
/// parameters.
pub fn run_evolution(
    states: &[ShapeState],
    model: &EnergyModel,
    inputs: &SceneInputs,
    scales: &[f64],
    cfg: &EvolveConfig,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    inputs.validate()?;
    model.validate()?;
    if scales.len() != model.decoder.c() {
        return Err(Error::Dimension(format!(
            "{} code scales for a decoder with c = {}",
            scales.len(),
            model.decoder.c()
        )));
    }
    let graph = build_interaction_graph(&inputs.detections, &model.location, &inputs.window_sizes);
    let stride = STATE_HEAD + scales.len();
    let fun = |v: &[f64]| -> Result<(f64, Vec<f64>)> {
        let st = unflatten(v, states, scales);
        let e = total_energy_and_grad(&st, model, inputs, &graph)?;
        let mut g = vec![0.0; v.len()];
        for (chunk, sg) in g.chunks_mut(stride).zip(&e.grads) {
            chunk[0] = sg.center.0;
            chunk[1] = sg.center.1;
            chunk[2] = sg.kappa;
            for ((o, a), k) in chunk[STATE_HEAD..].iter_mut().zip(&sg.alpha).zip(scales) {
                *o = a * k;
            }
        }
        Ok((e.energy(), g))
    };
    let x0 = flatten(states, scales);
    let run = minimize(fun, &x0, &cfg.optimizer)?;
    let final_states = if run.iterations == 0 {
        states.to_vec()
    } else {
        let mut st = unflatten(&run.x, states, scales);
        for s in &mut st {
            s.kappa = normalize_angle(s.kappa);
        }
        st
    };
    let terms = total_energy(&final_states, model, inputs, &graph)?;
    let inst = extract_instance_masks(&final_states, model.decoder, &model.smooth, inputs.dims(), cfg)?;
    Ok(SegmentationResult {
        masks: inst.masks,
        owners: inst.owners,
        pruned: inst.pruned,
        states: final_states,
        trace: run.trace,
        terms,
        iterations: run.iterations,
        evaluations: run.evaluations,
        status: run.status,
    })
}

/// Assigns each pixel to the shape with the largest field value among those
/// at least 0.5 (lower index on ties), then prunes shapes left with fewer
/// than `empty_shape_area_threshold` pixels. Pruned pixels stay unassigned.
pub fn extract_instance_masks(
    states: &[ShapeState],
    decoder: &DecoderWeights,
    smooth: &SmoothParams,
    dims: (usize, usize),
    cfg: &EvolveConfig,
) -> Result<InstanceMasks> {
    let fields = composite_field(states, decoder, smooth, dims)?;
    let (w, h) = dims;
    let mut masks: Vec<BinaryMask> = fields.iter().map(|_| BinaryMask::empty(w, h)).collect();
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(usize, f64)> = None;
            for (k, f) in fields.iter().enumerate() {
                let v = f.value(x, y);
                if v >= 0.5 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                masks[k].set(x, y, true);
            }
        }
    }
    let pruned: Vec<bool> = masks.iter().map(|m| m.area() < cfg.empty_shape_area_threshold).collect();
    let owners: Vec<usize> = (0..masks.len()).filter(|&k| !pruned[k]).collect();
    let masks = masks.into_iter().zip(&pruned).filter(|(_, p)| !**p).map(|(m, _)| m).collect();
    Ok(InstanceMasks { masks, owners, pruned })
}

/// Every setting of a segmentation run besides the models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub smooth: SmoothParams,
    pub weights: EnergyWeights,
    pub location: LocationModel,
    pub orientation: OrientationModel,
    pub init: InitConfig,
    pub evolve: EvolveConfig,
}

impl SegmentParams {
    /// Defaults, with the Heaviside width matched to the decoder's output
    /// range: signed distances in pixels for the linear decoder, values in
    /// `(-1, 1)` for the network.
    pub fn for_variant(variant: DecoderVariant) -> Self {
        let delta = match variant {
            DecoderVariant::Linear => 0.5,
            DecoderVariant::Deep => 0.1,
        };
        SegmentParams {
            smooth: SmoothParams {
                delta,
                ..SmoothParams::default()
            },
            weights: EnergyWeights::default(),
            location: LocationModel::default(),
            orientation: OrientationModel::default(),
            init: InitConfig::default(),
            evolve: EvolveConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.smooth.validate()?;
        self.weights.validate()?;
        self.location.validate()?;
        self.orientation.validate()?;
        self.init.validate()?;
        self.evolve.validate()
    }
}

/// Initializes every detection and evolves all shapes jointly.
pub fn segment(
    inputs: &SceneInputs,
    bundle: &ShapeBundle,
    decoder: &DecoderWeights,
    params: &SegmentParams,
) -> Result<SegmentationResult> {
    let states = initialize_states(inputs, &bundle.kpca, decoder, &params.orientation, &params.smooth, &params.init)?;
    let model = EnergyModel {
        decoder,
        kde: &bundle.kde,
        location: params.location,
        orientation: params.orientation,
        weights: params.weights,
        smooth: params.smooth,
    };
    run_evolution(&states, &model, inputs, &code_scales(&bundle.kpca), &params.evolve)
}

#[cfg(test)]
mod tests;
