use super::{clamp_prob, EnergyWeights, InteractionGraph, LocationModel, OrientationModel, SceneInputs, ShapeState};
use crate::decoder::{decode_grad_alpha, decode_slice, DecoderWeights};
use crate::error::{Error, Result};
use crate::grid::{
    smooth_heaviside, smooth_heaviside_deriv, smooth_max, smooth_max_with_grad, window_center, Grid2D,
    PlacedWarp, SmoothParams, WarpRegion,
};
use crate::shape::KdePrior;

/// Everything the energy needs besides the scene and the states.
#[derive(Clone, Copy, Debug)]
pub struct EnergyModel<'a> {
    pub decoder: &'a DecoderWeights,
    pub kde: &'a KdePrior,
    pub location: LocationModel,
    pub orientation: OrientationModel,
    pub weights: EnergyWeights,
    pub smooth: SmoothParams,
}

impl EnergyModel<'_> {
    pub fn validate(&self) -> Result<()> {
        self.location.validate()?;
        self.orientation.validate()?;
        self.weights.validate()?;
        self.smooth.validate()?;
        if self.kde.dim() != self.decoder.c() {
            return Err(Error::Dimension(format!(
                "prior codes have length {}, decoder expects {}",
                self.kde.dim(),
                self.decoder.c()
            )));
        }
        Ok(())
    }
}

/// A shape's soft indicator over the part of the image it can reach.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedField {
    pub region: WarpRegion,
    pub h: Grid2D,
}

impl PlacedField {
    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        if self.region.contains(x, y) {
            self.h.get(x - self.region.x0, y - self.region.y0)
        } else {
            0.0
        }
    }

    /// The field on the full image grid, zero outside the region.
    pub fn to_image(&self, width: usize, height: usize) -> Grid2D {
        Grid2D::from_fn(width, height, |x, y| self.value(x, y))
    }
}

struct ShapeEval {
    phi: Grid2D,
    g: Grid2D,
    warp: PlacedWarp,
    field: PlacedField,
}

fn evaluate_shapes(
    states: &[ShapeState],
    decoder: &DecoderWeights,
    smooth: &SmoothParams,
    dims: (usize, usize),
) -> Result<Vec<ShapeEval>> {
    let (dw, dh) = decoder.dims();
    let pivot = window_center(dw, dh);
    states
        .iter()
        .map(|s| {
            let phi = decode_slice(decoder, &s.alpha)?.into_grid();
            let g = phi.map(|v| smooth_heaviside(v, smooth.delta));
            let warp = PlacedWarp {
                anchor: s.center,
                pivot,
                kappa: s.kappa,
            };
            let region = warp.footprint(dw, dh, dims.0, dims.1);
            let h = warp.forward(&g, region, 0.0);
            Ok(ShapeEval {
                phi,
                g,
                warp,
                field: PlacedField { region, h },
            })
        })
        .collect()
}

/// Soft indicator of every shape, placed in image coordinates. Windows that
/// extend past the image are cropped at its edge.
pub fn composite_field(
    states: &[ShapeState],
    decoder: &DecoderWeights,
    smooth: &SmoothParams,
    image_dims: (usize, usize),
) -> Result<Vec<PlacedField>> {
    smooth.validate()?;
    Ok(evaluate_shapes(states, decoder, smooth, image_dims)?
        .into_iter()
        .map(|e| e.field)
        .collect())
}

/// Class memberships `S^0..S^K` at one pixel from the shape values there.
/// With `smooth = None` the exact maximum is used and background is
/// `min_k (1 - S^k)`; otherwise per-class smooth maxima and
/// `S^0 = 1 - smooth max over all shapes`.
pub fn class_memberships(
    values: &[f64],
    class_ids: &[usize],
    n_classes: usize,
    smooth: Option<&SmoothParams>,
) -> Result<Vec<f64>> {
    let mut s = vec![0.0; n_classes];
    let mut buf = Vec::new();
    for (c, slot) in s.iter_mut().enumerate().skip(1) {
        buf.clear();
        buf.extend(values.iter().zip(class_ids).filter(|(_, &k)| k == c).map(|(v, _)| *v));
        if buf.is_empty() {
            continue;
        }
        *slot = match smooth {
            None => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Some(p) => smooth_max(&buf, p)?,
        };
    }
    s[0] = match smooth {
        None => s[1..].iter().map(|v| 1.0 - v).fold(1.0, f64::min),
        Some(p) if !values.is_empty() => 1.0 - smooth_max(values, p)?,
        Some(_) => 1.0,
    };
    Ok(s)
}

/// Image term and, if requested, its gradient with respect to every placed
/// field (same layout as the fields).
fn image_term(
    fields: &[&PlacedField],
    class_ids: &[usize],
    p_sem: &[Grid2D],
    smooth: &SmoothParams,
    want_grad: bool,
) -> Result<(f64, Vec<Grid2D>)> {
    let (w, h) = p_sem[0].dims();
    let n = fields.len();
    let mut ups: Vec<Grid2D> = if want_grad {
        fields.iter().map(|f| Grid2D::zeros(f.region.width, f.region.height)).collect()
    } else {
        Vec::new()
    };
    let covered = |x: usize, y: usize| fields.iter().any(|f| f.region.contains(x, y));
    let mut vals = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut energy = 0.0;

    if p_sem.len() == 2 {
        let p_fg = &p_sem[1];
        let floor = if n == 0 { 0.0 } else { smooth_max(&vec![0.0; n], smooth)? };
        for y in 0..h {
            for x in 0..w {
                let p = clamp_prob(p_fg.get(x, y));
                let (l1, l0) = (p.ln(), (1.0 - p).ln());
                if n == 0 || !covered(x, y) {
                    energy -= floor * l1 + (1.0 - floor) * l0;
                    continue;
                }
                for (v, f) in vals.iter_mut().zip(fields) {
                    *v = f.value(x, y);
                }
                let s = smooth_max_with_grad(&vals, smooth, &mut grad)?;
                energy -= s * l1 + (1.0 - s) * l0;
                if want_grad {
                    let de_ds = l0 - l1;
                    for (k, f) in fields.iter().enumerate() {
                        if f.region.contains(x, y) {
                            let u = &mut ups[k];
                            let idx = (y - f.region.y0) * f.region.width + (x - f.region.x0);
                            u.data_mut()[idx] += de_ds * grad[k];
                        }
                    }
                }
            }
        }
        return Ok((energy, ups));
    }

    let n_classes = p_sem.len();
    let members: Vec<Vec<usize>> = (0..n_classes)
        .map(|c| (0..n).filter(|&k| class_ids[k] == c).collect())
        .collect();
    let mut s = vec![0.0; n_classes];
    let mut logs = vec![0.0; n_classes];
    let mut class_vals = Vec::new();
    let mut class_grad = Vec::new();
    let mut partial = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            for (c, l) in logs.iter_mut().enumerate() {
                *l = clamp_prob(p_sem[c].get(x, y)).ln();
            }
            for (v, f) in vals.iter_mut().zip(fields) {
                *v = f.value(x, y);
            }
            s.iter_mut().for_each(|v| *v = 0.0);
            grad.iter_mut().for_each(|g| *g = 0.0);
            // per-class smooth maxima and their partials
            for c in 1..n_classes {
                let m = &members[c];
                if m.is_empty() {
                    continue;
                }
                class_vals.clear();
                class_vals.extend(m.iter().map(|&k| vals[k]));
                class_grad.resize(m.len(), 0.0);
                s[c] = smooth_max_with_grad(&class_vals, smooth, &mut class_grad)?;
                for (j, &k) in m.iter().enumerate() {
                    partial[k] = class_grad[j];
                }
            }
            let all = if n == 0 { 0.0 } else { smooth_max_with_grad(&vals, smooth, &mut grad)? };
            s[0] = 1.0 - all;
            let z: f64 = s.iter().sum();
            let avg: f64 = s.iter().zip(&logs).map(|(a, b)| a * b).sum::<f64>() / z;
            energy -= avg;
            if want_grad && n > 0 {
                // dE/dS^j = -(L_j - avg) / Z
                let de: Vec<f64> = logs.iter().map(|l| -(l - avg) / z).collect();
                for (k, f) in fields.iter().enumerate() {
                    if !f.region.contains(x, y) {
                        continue;
                    }
                    let d = de[class_ids[k]] * partial[k] - de[0] * grad[k];
                    let idx = (y - f.region.y0) * f.region.width + (x - f.region.x0);
                    ups[k].data_mut()[idx] += d;
                }
            }
        }
    }
    Ok((energy, ups))
}

/// Cross-entropy between the smooth union of the fields and the foreground
/// probability, summed over pixels.
pub fn image_energy_single_class(fields: &[PlacedField], p_fg: &Grid2D, smooth: &SmoothParams) -> Result<f64> {
    let bg = p_fg.map(|p| 1.0 - p);
    let refs: Vec<&PlacedField> = fields.iter().collect();
    let ids = vec![1; fields.len()];
    Ok(image_term(&refs, &ids, &[bg, p_fg.clone()], smooth, false)?.0)
}

/// Cross-entropy of class pseudo-probabilities built from per-class smooth
/// maxima against the semantic map (background first). Needs at least two
/// foreground classes.
pub fn image_energy_multi_class(
    fields: &[PlacedField],
    class_ids: &[usize],
    p_sem: &[Grid2D],
    smooth: &SmoothParams,
) -> Result<f64> {
    if p_sem.len() < 3 {
        return Err(Error::Argument("multi-class energy needs at least two foreground classes".into()));
    }
    let refs: Vec<&PlacedField> = fields.iter().collect();
    Ok(image_term(&refs, class_ids, p_sem, smooth, false)?.0)
}

/// Energy split by term.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyBreakdown {
    pub image: f64,
    pub shape: f64,
    pub location: f64,
    pub orientation: f64,
    pub overlap: f64,
}

impl EnergyBreakdown {
    pub fn prior(&self) -> f64 {
        self.shape + self.location + self.orientation + self.overlap
    }

    pub fn total(&self) -> f64 {
        self.image + self.prior()
    }
}

/// Gradient of the energy with respect to one shape's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrad {
    pub center: (f64, f64),
    pub kappa: f64,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EnergyEval {
    pub terms: EnergyBreakdown,
    pub grads: Vec<StateGrad>,
}

impl EnergyEval {
    pub fn energy(&self) -> f64 {
        self.terms.total()
    }
}

fn state_index_by_detection(states: &[ShapeState], n_det: usize) -> Result<Vec<Option<usize>>> {
    let mut map = vec![None; n_det];
    for (i, s) in states.iter().enumerate() {
        if s.detection >= n_det {
            return Err(Error::Argument(format!("state {i} refers to missing detection {}", s.detection)));
        }
        if map[s.detection].replace(i).is_some() {
            return Err(Error::Argument(format!("two states share detection {}", s.detection)));
        }
    }
    Ok(map)
}

/// Overlap pairs as state indices.
fn overlap_pairs(states: &[ShapeState], graph: &InteractionGraph) -> Result<Vec<(usize, usize)>> {
    let map = state_index_by_detection(states, graph.rects.len())?;
    Ok(graph
        .edges
        .iter()
        .filter_map(|&(a, b)| Some((map[a]?, map[b]?)))
        .collect())
}

fn overlap_sum(a: &PlacedField, b: &PlacedField, mut grad: Option<(&mut Grid2D, &mut Grid2D)>, scale: f64) -> f64 {
    let r = a.region.intersect(&b.region);
    let mut total = 0.0;
    for y in r.y0..r.y0 + r.height {
        for x in r.x0..r.x0 + r.width {
            let ia = (y - a.region.y0) * a.region.width + (x - a.region.x0);
            let ib = (y - b.region.y0) * b.region.width + (x - b.region.x0);
            let (va, vb) = (a.h.data()[ia], b.h.data()[ib]);
            total += va * vb;
            if let Some((ga, gb)) = grad.as_mut() {
                ga.data_mut()[ia] += scale * vb;
                gb.data_mut()[ib] += scale * va;
            }
        }
    }
    total
}

/// Prior terms: shape density, location, orientation and pairwise overlap
/// along graph edges.
pub fn prior_energy(
    states: &[ShapeState],
    model: &EnergyModel,
    inputs: &SceneInputs,
    graph: &InteractionGraph,
    fields: &[PlacedField],
) -> Result<EnergyBreakdown> {
    let w = &model.weights;
    let mut t = EnergyBreakdown::default();
    for s in states {
        if w.gamma_shp != 0.0 {
            t.shape -= w.gamma_shp * model.kde.log_prior(&s.alpha)?.0;
        }
        let det = inputs
            .detections
            .get(s.detection)
            .ok_or_else(|| Error::Argument(format!("missing detection {}", s.detection)))?;
        t.location += w.gamma_loc * model.location.neg_log(s.center, det.center).0;
        if w.gamma_ori != 0.0 {
            t.orientation -= w.gamma_ori * model.orientation.log_density(s.kappa).0;
        }
    }
    if w.gamma_ovp != 0.0 {
        for (a, b) in overlap_pairs(states, graph)? {
            t.overlap += w.gamma_ovp * overlap_sum(&fields[a], &fields[b], None, 0.0);
        }
    }
    Ok(t)
}

fn check_states(states: &[ShapeState], model: &EnergyModel, inputs: &SceneInputs) -> Result<()> {
    model.validate()?;
    let (dw, _) = model.decoder.dims();
    for (i, s) in states.iter().enumerate() {
        if s.alpha.len() != model.decoder.c() {
            return Err(Error::Dimension(format!("state {i}: code length {}", s.alpha.len())));
        }
        if s.class_id == 0 || s.class_id >= inputs.n_classes() {
            return Err(Error::Argument(format!("state {i}: bad class {}", s.class_id)));
        }
        if inputs.window_sizes[s.class_id] != dw {
            return Err(Error::Dimension(format!(
                "class {} window {} does not match decoder extent {dw}",
                s.class_id, inputs.window_sizes[s.class_id]
            )));
        }
    }
    Ok(())
}

/// Energy terms without gradients.
pub fn total_energy(
    states: &[ShapeState],
    model: &EnergyModel,
    inputs: &SceneInputs,
    graph: &InteractionGraph,
) -> Result<EnergyBreakdown> {
    check_states(states, model, inputs)?;
    let evals = evaluate_shapes(states, model.decoder, &model.smooth, inputs.dims())?;
    let fields: Vec<PlacedField> = evals.into_iter().map(|e| e.field).collect();
    let refs: Vec<&PlacedField> = fields.iter().collect();
    let ids: Vec<usize> = states.iter().map(|s| s.class_id).collect();
    let (image, _) = image_term(&refs, &ids, &inputs.p_sem, &model.smooth, false)?;
    let mut t = prior_energy(states, model, inputs, graph, &fields)?;
    t.image = image;
    Ok(t)
}

/// Total energy and its exact gradient with respect to every shape's
/// center, angle and code.
pub fn total_energy_and_grad(
    states: &[ShapeState],
    model: &EnergyModel,
    inputs: &SceneInputs,
    graph: &InteractionGraph,
) -> Result<EnergyEval> {
    check_states(states, model, inputs)?;
    let evals = evaluate_shapes(states, model.decoder, &model.smooth, inputs.dims())?;
    let refs: Vec<&PlacedField> = evals.iter().map(|e| &e.field).collect();
    let ids: Vec<usize> = states.iter().map(|s| s.class_id).collect();
    let (image, mut ups) = image_term(&refs, &ids, &inputs.p_sem, &model.smooth, true)?;

    let w = &model.weights;
    let mut terms = EnergyBreakdown {
        image,
        ..Default::default()
    };
    if w.gamma_ovp != 0.0 {
        for (a, b) in overlap_pairs(states, graph)? {
            let (lo, hi) = (a.min(b), a.max(b));
            let (left, right) = ups.split_at_mut(hi);
            let (ga, gb) = (&mut left[lo], &mut right[0]);
            terms.overlap += w.gamma_ovp * overlap_sum(refs[lo], refs[hi], Some((ga, gb)), w.gamma_ovp);
        }
    }

    let mut grads = Vec::with_capacity(states.len());
    for ((s, e), up) in states.iter().zip(&evals).zip(&ups) {
        let wg = e.warp.backward(&e.g, e.field.region, up, 0.0);
        let mut dphi = wg.src;
        for (d, &p) in dphi.data_mut().iter_mut().zip(e.phi.data()) {
            *d *= smooth_heaviside_deriv(p, model.smooth.delta);
        }
        let mut g_alpha = decode_grad_alpha(model.decoder, &s.alpha, &dphi)?;
        if w.gamma_shp != 0.0 {
            let (lp, lg) = model.kde.log_prior(&s.alpha)?;
            terms.shape -= w.gamma_shp * lp;
            for (a, b) in g_alpha.iter_mut().zip(lg) {
                *a -= w.gamma_shp * b;
            }
        }
        let det = &inputs.detections[s.detection];
        let (lv, lgrad) = model.location.neg_log(s.center, det.center);
        terms.location += w.gamma_loc * lv;
        let mut g_kappa = wg.kappa;
        if w.gamma_ori != 0.0 {
            let (lv, ld) = model.orientation.log_density(s.kappa);
            terms.orientation -= w.gamma_ori * lv;
            g_kappa -= w.gamma_ori * ld;
        }
        grads.push(StateGrad {
            center: (wg.anchor.0 + w.gamma_loc * lgrad.0, wg.anchor.1 + w.gamma_loc * lgrad.1),
            kappa: g_kappa,
            alpha: g_alpha,
        });
    }
    Ok(EnergyEval { terms, grads })
}
