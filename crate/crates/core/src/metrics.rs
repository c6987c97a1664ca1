//! Instance segmentation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{squared_distance_to, BinaryMask};

fn same_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("masks are {:?} and {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_dims(a, b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Pixels within `eps_d` of the boundary of `reference`: for each pixel the
/// distance between pixel centers to the nearest pixel of the other label.
pub fn contour_band(reference: &BinaryMask, eps_d: f64) -> Result<BinaryMask> {
    if reference.is_uniform() {
        return Err(Error::Argument("reference mask has no contour".into()));
    }
    let to_in = squared_distance_to(reference, true);
    let to_out = squared_distance_to(reference, false);
    let (w, h) = reference.dims();
    let e2 = eps_d * eps_d;
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        let d2 = if reference.get(x, y) { to_out.get(x, y) } else { to_in.get(x, y) };
        d2 <= e2
    }))
}

/// IoU restricted to the `eps_d` band around the reference contour. Not
/// symmetric: the band comes from `reference` only.
pub fn weighted_iou(pred: &BinaryMask, reference: &BinaryMask, eps_d: f64) -> Result<f64> {
    same_dims(pred, reference)?;
    let band = contour_band(reference, eps_d)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for ((&p, &r), &b) in pred.data().iter().zip(reference.data()).zip(band.data()) {
        if b == 0 {
            continue;
        }
        inter += (p & r) as usize;
        union += (p | r) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMatch {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub precision: f64,
    pub recall: f64,
    pub matches: Vec<InstanceMatch>,
    pub iou_min: f64,
}

/// All pairwise IoUs, `[pred][gt]`.
pub fn iou_matrix(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| iou(p, g)).collect())
        .collect()
}

/// Greedy one-to-one matching in order of decreasing IoU (ties go to the
/// lower prediction index, then the lower ground-truth index). Pairs below
/// `iou_min` stay unmatched.
///
/// Precision and recall are `matched / count`; with an empty side the ratio
/// is 0, except that two empty sides score 1.
pub fn match_instances(preds: &[BinaryMask], gts: &[BinaryMask], iou_min: f64) -> Result<MatchReport> {
    let m = iou_matrix(preds, gts)?;
    Ok(match_from_matrix(&m, preds.len(), gts.len(), iou_min))
}

pub fn match_from_matrix(m: &[Vec<f64>], n_pred: usize, n_gt: usize, iou_min: f64) -> MatchReport {
    let mut pairs: Vec<(usize, usize)> = (0..n_pred)
        .flat_map(|i| (0..n_gt).map(move |j| (i, j)))
        .filter(|&(i, j)| m[i][j] >= iou_min)
        .collect();
    pairs.sort_by(|a, b| m[b.0][b.1].total_cmp(&m[a.0][a.1]).then(a.cmp(b)));
    let mut pred_used = vec![false; n_pred];
    let mut gt_used = vec![false; n_gt];
    let mut matches = Vec::new();
    for (i, j) in pairs {
        if pred_used[i] || gt_used[j] {
            continue;
        }
        pred_used[i] = true;
        gt_used[j] = true;
        matches.push(InstanceMatch { pred: i, gt: j, iou: m[i][j] });
    }
    let ratio = |k: usize, n: usize| {
        if n_pred == 0 && n_gt == 0 {
            1.0
        } else if n == 0 {
            0.0
        } else {
            k as f64 / n as f64
        }
    };
    MatchReport {
        precision: ratio(matches.len(), n_pred),
        recall: ratio(matches.len(), n_gt),
        matches,
        iou_min,
    }
}
