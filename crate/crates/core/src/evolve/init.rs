use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecoderWeights};
use crate::error::{Error, Result};
use crate::grid::{normalize_angle, smooth_heaviside, window_center, BinaryMask, PlacedWarp, SmoothParams, WarpRegion};
use crate::scene::{clamp_prob, Detection, OrientationModel, SceneInputs, ShapeState};
use crate::shape::{center_mask, KpcaModel, ShapeCode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub use_rotation_init: bool,
    /// Spacing of the orientation grid search, radians.
    pub delta_kappa: f64,
    /// Detections whose initial mask has fewer pixels start from the mean
    /// shape.
    pub min_init_pixels: usize,
    /// Weight of `-log P_rot` in the orientation search.
    pub rot_prior_weight: f64,
    /// Weight of the mean per-pixel reconstruction cross-entropy.
    pub rot_recon_weight: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            use_rotation_init: false,
            delta_kappa: TAU / 24.0,
            min_init_pixels: 10,
            rot_prior_weight: 1.0,
            rot_recon_weight: 1.0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_kappa > 0.0 && self.delta_kappa <= TAU / 4.0) {
            return Err(Error::Config(format!("delta_kappa must be in (0, pi/2], got {}", self.delta_kappa)));
        }
        if !(self.rot_prior_weight >= 0.0) || !(self.rot_recon_weight >= 0.0) {
            return Err(Error::Config("rotation search weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Pixels of the detection box whose dominant class is the detected one, in
/// a `d x d` window whose center pixel sits on the rounded detected center.
pub fn crop_init_mask(inputs: &SceneInputs, det: &Detection, d: usize) -> BinaryMask {
    let (w, h) = inputs.dims();
    let argmax = inputs.argmax_class();
    let (cx, cy) = window_center(d, d);
    let ox = det.center.0.round() - cx;
    let oy = det.center.1.round() - cy;
    BinaryMask::from_fn(d, d, |u, v| {
        let x = u as f64 + ox;
        let y = v as f64 + oy;
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            return false;
        }
        det.bbox.contains(x, y) && argmax[y as usize * w + x as usize] == det.class_id
    })
}

/// `mask` rotated by `kappa` about its window center, with the same sense
/// of rotation as shape placement.
pub fn rotate_mask(mask: &BinaryMask, kappa: f64) -> BinaryMask {
    let (w, h) = mask.dims();
    let c = window_center(w, h);
    let warp = PlacedWarp {
        anchor: c,
        pivot: c,
        kappa,
    };
    warp.forward(&mask.to_grid(), WarpRegion::full(w, h), 0.0).threshold(0.5)
}

fn check_window(kpca: &KpcaModel, decoder: &DecoderWeights) -> Result<()> {
    if kpca.dims() != decoder.dims() || kpca.c() != decoder.c() {
        return Err(Error::Dimension(format!(
            "shape model ({:?}, c = {}) and decoder ({:?}, c = {}) disagree",
            kpca.dims(),
            kpca.c(),
            decoder.dims(),
            decoder.c()
        )));
    }
    Ok(())
}

/// Grid search over `κ = 0, Δκ, 2Δκ, ...` below `2π` for the rotation that
/// best turns `m_init` into a shape the model reconstructs well, scored by
/// `-w_p log P_rot(κ) + w_r BCE(H(decode(encode(M))), M)` with
/// `M = rotate_mask(m_init, κ)`. Ties go to the smallest angle.
pub fn init_rotation(
    m_init: &BinaryMask,
    kpca: &KpcaModel,
    decoder: &DecoderWeights,
    orientation: &OrientationModel,
    smooth: &SmoothParams,
    cfg: &InitConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_window(kpca, decoder)?;
    let n = (TAU / cfg.delta_kappa - 1e-9).ceil() as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..n {
        let kappa = k as f64 * cfg.delta_kappa;
        let rot = rotate_mask(m_init, kappa);
        let phi = decode(decoder, &kpca.encode(&rot)?)?;
        let bce: f64 = phi
            .data()
            .iter()
            .zip(rot.data())
            .map(|(&v, &y)| {
                let p = clamp_prob(smooth_heaviside(v, smooth.delta));
                if y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / phi.len() as f64;
        let e = -cfg.rot_prior_weight * orientation.log_density(kappa).0 + cfg.rot_recon_weight * bce;
        if e < best.1 {
            best = (kappa, e);
        }
    }
    Ok(best.0)
}

/// One state per detection: center at the detection, code from the
/// cropped initial mask moved to the window center (or the mean shape when
/// it is too small), angle 0 or from the orientation search.
pub fn initialize_states(
    inputs: &SceneInputs,
    kpca: &KpcaModel,
    decoder: &DecoderWeights,
    orientation: &OrientationModel,
    smooth: &SmoothParams,
    cfg: &InitConfig,
) -> Result<Vec<ShapeState>> {
    cfg.validate()?;
    inputs.validate()?;
    check_window(kpca, decoder)?;
    let (d, dh) = kpca.dims();
    inputs
        .detections
        .iter()
        .enumerate()
        .map(|(i, det)| {
            if inputs.window_sizes[det.class_id] != d || d != dh {
                return Err(Error::Dimension(format!(
                    "class {} window {} does not match the {d}x{dh} shape model",
                    det.class_id, inputs.window_sizes[det.class_id]
                )));
            }
            let m = center_mask(&crop_init_mask(inputs, det, d));
            let (alpha, kappa) = if m.area() < cfg.min_init_pixels {
                (ShapeCode::zeros(kpca.c()), 0.0)
            } else if cfg.use_rotation_init {
                let k = init_rotation(&m, kpca, decoder, orientation, smooth, cfg)?;
                (kpca.encode(&rotate_mask(&m, k))?, normalize_angle(-k))
            } else {
                (kpca.encode(&m)?, 0.0)
            };
            Ok(ShapeState {
                center: det.center,
                kappa,
                alpha: alpha.0,
                class_id: det.class_id,
                detection: i,
            })
        })
        .collect()
}
