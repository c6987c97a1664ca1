//! Synthetic ground truth: irregular star-shaped blobs and rectilinear
//! building footprints, multi-instance scenes, noisy semantic maps and
//! jittered detections.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{squared_distance_to, window_center, BinaryMask, Grid2D};
use crate::scene::{Detection, Rect, SceneInputs};
use crate::shape::{center_mask, TrainingShapeSet};

/// Radius `r(θ) = R (1 + Σ_h a_h cos(hθ + φ_h))` for harmonics `h = 2..`,
/// with the amplitudes summing to `harmonic_amp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    pub base_radius: f64,
    pub n_harmonics: usize,
    pub harmonic_amp: f64,
    pub rng_seed: u64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            base_radius: 12.0,
            n_harmonics: 4,
            harmonic_amp: 0.3,
            rng_seed: 0,
        }
    }
}

impl BlobParams {
    pub fn with_seed(self, rng_seed: u64) -> Self {
        BlobParams { rng_seed, ..self }
    }

    /// Largest radius any blob with these parameters can reach.
    pub fn max_radius(&self) -> f64 {
        self.base_radius * (1.0 + self.harmonic_amp)
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_radius > 0.0) {
            return Err(Error::Argument(format!("base radius must be > 0, got {}", self.base_radius)));
        }
        if !(0.0..1.0).contains(&self.harmonic_amp) {
            return Err(Error::Argument(format!("harmonic_amp must be in [0, 1), got {}", self.harmonic_amp)));
        }
        Ok(())
    }
}

/// Radial profile of a blob.
#[derive(Clone, Debug)]
pub struct BlobShape {
    radius: f64,
    amps: Vec<f64>,
    phases: Vec<f64>,
}

impl BlobShape {
    pub fn sample(params: &BlobParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let raw: Vec<f64> = (0..params.n_harmonics).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let amps = raw.iter().map(|a| params.harmonic_amp * a / total).collect();
        let phases = (0..params.n_harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Ok(BlobShape {
            radius: params.base_radius,
            amps,
            phases,
        })
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        let wobble: f64 = self
            .amps
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| a * ((i + 2) as f64 * theta + p).cos())
            .sum();
        self.radius * (1.0 + wobble)
    }

    /// Pixels whose centers lie inside the blob placed at `center`, with the
    /// profile rotated by `kappa`.
    pub fn rasterize(&self, width: usize, height: usize, center: (f64, f64), kappa: f64) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| {
            let dx = x as f64 - center.0;
            let dy = y as f64 - center.1;
            let r = (dx * dx + dy * dy).sqrt();
            r == 0.0 || r <= self.radius_at(dy.atan2(dx) - kappa)
        })
    }
}

/// A blob rasterized in a `dims` window and recentered on the window center.
pub fn gen_blob(params: &BlobParams, dims: (usize, usize)) -> Result<BinaryMask> {
    let shape = BlobShape::sample(params)?;
    let (w, h) = dims;
    let c = window_center(w, h);
    let reach = params.max_radius();
    if c.0 - reach < 0.0 || c.1 - reach < 0.0 || c.0 + reach > (w - 1) as f64 || c.1 + reach > (h - 1) as f64 {
        return Err(Error::Argument(format!(
            "blob of radius up to {reach:.1} does not fit a {w}x{h} window"
        )));
    }
    Ok(center_mask(&shape.rasterize(w, h, c, 0.0)))
}

/// `n` blobs drawn with seeds derived from `seed`, rasterized in a square
/// window, for fitting a shape model.
pub fn blob_training_set(params: &BlobParams, n: usize, window: usize, seed: u64) -> Result<TrainingShapeSet> {
    shape_training_set(&ShapeFamily::Blob(*params), n, window, seed)
}

/// Rectangle footprints with sides drawn from `[min_side, max_side]`; with
/// probability `notch_prob` one corner is cut away, leaving an L shape.
/// Each footprint has its own random orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingParams {
    pub min_side: f64,
    pub max_side: f64,
    pub notch_prob: f64,
    pub rng_seed: u64,
}

impl Default for BuildingParams {
    fn default() -> Self {
        BuildingParams {
            min_side: 12.0,
            max_side: 32.0,
            notch_prob: 0.5,
            rng_seed: 0,
        }
    }
}

impl BuildingParams {
    pub fn with_seed(self, rng_seed: u64) -> Self {
        BuildingParams { rng_seed, ..self }
    }

    pub fn max_radius(&self) -> f64 {
        self.max_side * std::f64::consts::FRAC_1_SQRT_2
    }

    fn validate(&self) -> Result<()> {
        if !(self.min_side > 0.0 && self.max_side >= self.min_side) {
            return Err(Error::Argument(format!(
                "building sides need 0 < min_side <= max_side, got {} and {}",
                self.min_side, self.max_side
            )));
        }
        if !(0.0..=1.0).contains(&self.notch_prob) {
            return Err(Error::Argument(format!("notch_prob must be in [0, 1], got {}", self.notch_prob)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BuildingShape {
    half: (f64, f64),
    /// Removed corner rectangle in the local frame, `[x0, ∞) x [y0, ∞)`.
    notch: Option<(f64, f64)>,
    orientation: f64,
}

impl BuildingShape {
    pub fn sample(params: &BuildingParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let mut side = || {
            if params.max_side > params.min_side {
                rng.random_range(params.min_side..=params.max_side)
            } else {
                params.min_side
            }
        };
        let half = (side() / 2.0, side() / 2.0);
        let notch = (rng.random::<f64>() < params.notch_prob).then(|| {
            let fx = rng.random_range(-0.2..0.4);
            let fy = rng.random_range(-0.2..0.4);
            (fx * half.0, fy * half.1)
        });
        Ok(BuildingShape {
            half,
            notch,
            orientation: rng.random_range(0.0..2.0 * PI),
        })
    }

    fn contains(&self, lx: f64, ly: f64) -> bool {
        let inside = lx.abs() <= self.half.0 && ly.abs() <= self.half.1;
        inside && self.notch.is_none_or(|(nx, ny)| lx < nx || ly < ny)
    }

    /// Pixels whose centers lie inside the footprint placed at `center`,
    /// turned by `kappa` on top of its own orientation.
    pub fn rasterize(&self, width: usize, height: usize, center: (f64, f64), kappa: f64) -> BinaryMask {
        let (s, c) = (self.orientation + kappa).sin_cos();
        BinaryMask::from_fn(width, height, |x, y| {
            let dx = x as f64 - center.0;
            let dy = y as f64 - center.1;
            self.contains(c * dx + s * dy, -s * dx + c * dy)
        })
    }
}

/// Which kind of object synthetic scenes contain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeFamily {
    Blob(BlobParams),
    Building(BuildingParams),
}

impl ShapeFamily {
    pub fn max_radius(&self) -> f64 {
        match self {
            ShapeFamily::Blob(p) => p.max_radius(),
            ShapeFamily::Building(p) => p.max_radius(),
        }
    }

    /// One shape drawn with `seed`, placed at `center` and turned by `kappa`.
    pub fn rasterize(&self, seed: u64, dims: (usize, usize), center: (f64, f64), kappa: f64) -> Result<BinaryMask> {
        let (w, h) = dims;
        Ok(match self {
            ShapeFamily::Blob(p) => BlobShape::sample(&p.with_seed(seed))?.rasterize(w, h, center, kappa),
            ShapeFamily::Building(p) => BuildingShape::sample(&p.with_seed(seed))?.rasterize(w, h, center, kappa),
        })
    }
}

/// A shape drawn with `seed`, rasterized in a `dims` window and recentered.
pub fn gen_shape(family: &ShapeFamily, seed: u64, dims: (usize, usize)) -> Result<BinaryMask> {
    let (w, h) = dims;
    let c = window_center(w, h);
    let reach = family.max_radius();
    if c.0 - reach < 0.0 || c.1 - reach < 0.0 || c.0 + reach > (w - 1) as f64 || c.1 + reach > (h - 1) as f64 {
        return Err(Error::Argument(format!(
            "shapes of radius up to {reach:.1} do not fit a {w}x{h} window"
        )));
    }
    let m = family.rasterize(seed, dims, c, 0.0)?;
    if m.area() == 0 {
        return Err(Error::Generation("generated shape covers no pixel".into()));
    }
    Ok(center_mask(&m))
}

/// `n` shapes drawn with seeds derived from `seed`, for fitting a shape
/// model.
pub fn shape_training_set(family: &ShapeFamily, n: usize, window: usize, seed: u64) -> Result<TrainingShapeSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = (0..n)
        .map(|_| gen_shape(family, rng.random(), (window, window)))
        .collect::<Result<_>>()?;
    TrainingShapeSet::new(masks)
}

/// A horizontal bar with a round knob on its right end, centered in a
/// `window x window` mask. The knob makes every orientation distinct.
pub fn gen_keyed_bar(half_length: f64, half_width: f64, knob_radius: f64, window: usize) -> BinaryMask {
    let (c, _) = window_center(window, window);
    let bar = BinaryMask::from_fn(window, window, |x, y| {
        let dx = x as f64 - c;
        let dy = y as f64 - c;
        let in_bar = dx.abs() <= half_length && dy.abs() <= half_width;
        let kx = dx - half_length;
        in_bar || kx * kx + dy * dy <= knob_radius * knob_radius
    });
    center_mask(&bar)
}

/// Scene generator settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_shapes: usize,
    pub shape: ShapeFamily,
    /// Allowed fraction by which the bounding discs of neighbours may
    /// interpenetrate.
    pub overlap_target: f64,
    pub noise_level: f64,
    pub jitter: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 96,
            height: 96,
            n_shapes: 3,
            shape: ShapeFamily::Blob(BlobParams::default()),
            overlap_target: 0.15,
            noise_level: 0.1,
            jitter: 2.0,
        }
    }
}

/// Ground truth and the synthetic detector outputs derived from it.
#[derive(Clone, Debug)]
pub struct SceneTruth {
    pub gt_masks: Vec<BinaryMask>,
    /// Background then foreground probability.
    pub p_sem: Vec<Grid2D>,
    pub detections: Vec<Detection>,
}

impl SceneTruth {
    pub fn union(&self) -> BinaryMask {
        let (w, h) = self.p_sem[0].dims();
        BinaryMask::from_fn(w, h, |x, y| self.gt_masks.iter().any(|m| m.get(x, y)))
    }

    pub fn inputs(&self, window: usize) -> Result<SceneInputs> {
        SceneInputs::new(self.p_sem.clone(), self.detections.clone(), vec![0, window])
    }
}

const MAX_PLACEMENT_TRIES: usize = 2000;

/// Places `n_shapes` shapes, resolves overlaps into disjoint masks by the
/// deepest inside distance (lower index on ties), and derives a noisy
/// foreground map `clamp(union + N(0, noise), [0.02, 0.98])` and detections
/// at the true centroids plus jitter within a disc of radius `jitter`, with
/// boxes grown by 10%.
pub fn gen_scene(spec: &SceneSpec, seed: u64) -> Result<SceneTruth> {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = spec.shape.max_radius();
    if 2.0 * reach + 2.0 > w.min(h) as f64 {
        return Err(Error::Generation(format!("shapes of radius {reach:.1} do not fit a {w}x{h} image")));
    }
    if !(0.0..1.0).contains(&spec.overlap_target) {
        return Err(Error::Argument("overlap_target must be in [0, 1)".into()));
    }
    if !(spec.noise_level >= 0.0) || !(spec.jitter >= 0.0) {
        return Err(Error::Argument("noise_level and jitter must be >= 0".into()));
    }

    let min_dist = 2.0 * reach * (1.0 - spec.overlap_target);
    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut tries = 0;
    while centers.len() < spec.n_shapes {
        tries += 1;
        if tries > MAX_PLACEMENT_TRIES {
            return Err(Error::Generation(format!(
                "could not place {} shapes in {w}x{h} after {MAX_PLACEMENT_TRIES} tries",
                spec.n_shapes
            )));
        }
        let c = (
            rng.random_range(reach + 1.0..w as f64 - reach - 1.0).round(),
            rng.random_range(reach + 1.0..h as f64 - reach - 1.0).round(),
        );
        if centers.iter().all(|o| ((o.0 - c.0).powi(2) + (o.1 - c.1).powi(2)).sqrt() >= min_dist) {
            centers.push(c);
        }
    }

    let raw: Vec<BinaryMask> = centers
        .iter()
        .map(|&c| {
            let seed = rng.random();
            let kappa = rng.random_range(0.0..2.0 * PI);
            spec.shape.rasterize(seed, (w, h), c, kappa)
        })
        .collect::<Result<_>>()?;
    let depth: Vec<Grid2D> = raw.iter().map(|m| squared_distance_to(m, false)).collect();
    let mut gt: Vec<BinaryMask> = raw.iter().map(|_| BinaryMask::empty(w, h)).collect();
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<usize> = None;
            for k in 0..raw.len() {
                if raw[k].get(x, y) && best.is_none_or(|b| depth[k].get(x, y) > depth[b].get(x, y)) {
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                gt[k].set(x, y, true);
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise_level.max(f64::MIN_POSITIVE)).expect("valid std");
    let union = BinaryMask::from_fn(w, h, |x, y| gt.iter().any(|m| m.get(x, y)));
    let mut fg = Grid2D::zeros(w, h);
    for (v, &u) in fg.data_mut().iter_mut().zip(union.data()) {
        let n = if spec.noise_level > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        *v = (u as f64 + n).clamp(0.02, 0.98);
    }
    let bg = fg.map(|p| 1.0 - p);

    let mut detections = Vec::with_capacity(gt.len());
    for m in &gt {
        let (cx, cy) = m
            .centroid()
            .ok_or_else(|| Error::Generation("a shape vanished during overlap resolution".into()))?;
        let (jx, jy) = if spec.jitter > 0.0 {
            let r = spec.jitter * rng.random::<f64>().sqrt();
            let t = rng.random_range(0.0..2.0 * PI);
            (r * t.cos(), r * t.sin())
        } else {
            (0.0, 0.0)
        };
        let (x0, y0, x1, y1) = m.bbox().expect("non-empty");
        let (bw, bh) = ((x1 - x0) as f64 + 1.0, (y1 - y0) as f64 + 1.0);
        detections.push(Detection {
            center: ((cx + jx).clamp(0.0, (w - 1) as f64), (cy + jy).clamp(0.0, (h - 1) as f64)),
            bbox: Rect {
                x0: x0 as f64 - 0.05 * bw,
                y0: y0 as f64 - 0.05 * bh,
                x1: (x1 as f64) + 0.05 * bw,
                y1: (y1 as f64) + 0.05 * bh,
            },
            class_id: 1,
        });
    }
    Ok(SceneTruth {
        gt_masks: gt,
        p_sem: vec![bg, fg],
        detections,
    })
}
