//! Finite-difference checks of every analytic gradient on small seeded
//! problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_backward, decode_slice, DecoderWeights, DeepDecoderSpec, DeepWeights, LinearWeights};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, PlacedWarp, SmoothMaxVariant, SmoothParams, WarpRegion};
use crate::scene::{
    build_interaction_graph, total_energy, total_energy_and_grad, Detection, EnergyModel, EnergyWeights,
    LocationModel, OrientationModel, Rect, SceneInputs, ShapeState,
};
use crate::shape::{fit_kde, KdePrior, ShapeCode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub n_scenes: usize,
    pub size: usize,
    pub n_shapes: usize,
    pub c: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            n_scenes: 5,
            size: 32,
            n_shapes: 3,
            c: 8,
            step: 1e-6,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub suite: String,
    pub seed: u64,
    pub n_params: usize,
    /// `||g_fd - g|| / ||g_fd||` over all parameters.
    pub rel_error: f64,
    pub passed: bool,
}

/// Relative error between an analytic gradient and central differences of
/// `f` around `x`.
pub fn fd_relative_error(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], grad: &[f64], step: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + step;
        let a = f(&p)?;
        p[i] = x[i] - step;
        let b = f(&p)?;
        p[i] = x[i];
        let fd = (a - b) / (2.0 * step);
        num += (fd - grad[i]).powi(2);
        den += fd * fd;
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// A toy network decoder with weights large enough to give a varied output.
pub fn toy_deep_decoder(c: usize, rng: &mut ChaCha8Rng) -> Result<DecoderWeights> {
    let spec = DeepDecoderSpec {
        c,
        d_f: 3,
        n_conv0: 8,
        d0: 2,
        d_out: 16,
    };
    Ok(DecoderWeights::Deep(DeepWeights::init_with_std(spec, 0.3, rng)?))
}

fn toy_linear_decoder(c: usize, d: usize, rng: &mut ChaCha8Rng) -> DecoderWeights {
    let m = (d / 2) as f64;
    let mean = Grid2D::from_fn(d, d, |x, y| 0.3 * m - (x as f64 - m).hypot(y as f64 - m));
    let fields = (0..c)
        .map(|_| {
            let (a, b) = (rng.random_range(0.2..0.6), rng.random_range(0.0..6.0));
            Grid2D::from_fn(d, d, |x, y| 0.7 * ((a * x as f64 + b).sin() + (a * y as f64 - b).cos()))
        })
        .collect();
    DecoderWeights::Linear(LinearWeights { mean_phi: mean, fields })
}

fn toy_kde(c: usize, rng: &mut ChaCha8Rng) -> Result<KdePrior> {
    let codes: Vec<ShapeCode> = (0..6).map(|_| ShapeCode((0..c).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
    fit_kde(&codes, Some(1.5))
}

/// Random semantic maps (`n_fg` foreground classes), one detection per
/// shape and states near the detections.
fn toy_scene(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig, window: usize, n_fg: usize) -> Result<(SceneInputs, Vec<ShapeState>)> {
    let n = cfg.size;
    let mut raw: Vec<Grid2D> = (0..=n_fg)
        .map(|_| {
            let (a, b) = (rng.random_range(0.1..0.4), rng.random_range(0.0..6.0));
            Grid2D::from_fn(n, n, |x, y| 1.0 + (a * x as f64 + b).sin() * (a * y as f64).cos())
        })
        .collect();
    for i in 0..n * n {
        let s: f64 = raw.iter().map(|g| g.data()[i]).sum();
        raw.iter_mut().for_each(|g| g.data_mut()[i] /= s);
    }
    let lo = 0.3 * n as f64;
    let hi = 0.7 * n as f64;
    let mut dets = Vec::new();
    let mut states = Vec::new();
    for k in 0..cfg.n_shapes {
        let class_id = 1 + k % n_fg;
        let c = (rng.random_range(lo..hi), rng.random_range(lo..hi));
        dets.push(Detection {
            center: c,
            bbox: Rect { x0: c.0 - 4.0, y0: c.1 - 4.0, x1: c.0 + 4.0, y1: c.1 + 4.0 },
            class_id,
        });
        states.push(ShapeState {
            center: (c.0 + rng.random_range(-1.5..1.5), c.1 + rng.random_range(-1.5..1.5)),
            kappa: rng.random_range(0.0..std::f64::consts::TAU),
            alpha: (0..cfg.c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            class_id,
            detection: k,
        });
    }
    let mut windows = vec![window; n_fg + 1];
    windows[0] = 0;
    Ok((SceneInputs::new(raw, dets, windows)?, states))
}

fn flatten(states: &[ShapeState]) -> Vec<f64> {
    states
        .iter()
        .flat_map(|s| [s.center.0, s.center.1, s.kappa].into_iter().chain(s.alpha.iter().copied()))
        .collect()
}

fn unflatten(template: &[ShapeState], v: &[f64]) -> Vec<ShapeState> {
    let stride = 3 + template[0].alpha.len();
    template
        .iter()
        .zip(v.chunks(stride))
        .map(|(t, p)| ShapeState {
            center: (p[0], p[1]),
            kappa: p[2],
            alpha: p[3..].to_vec(),
            ..t.clone()
        })
        .collect()
}

fn energy_case(
    decoder: &DecoderWeights,
    kde: &KdePrior,
    delta: f64,
    inputs: &SceneInputs,
    states: &[ShapeState],
    step: f64,
) -> Result<(usize, f64)> {
    let location = LocationModel { sigma_loc: 2.0 };
    let model = EnergyModel {
        decoder,
        kde,
        location,
        orientation: OrientationModel::VonMises { mu: 0.5, concentration: 1.0 },
        weights: EnergyWeights { gamma_shp: 1.0, gamma_loc: 0.1, gamma_ori: 0.3, gamma_ovp: 5.0 },
        smooth: SmoothParams { delta, gamma: 10.0, variant: SmoothMaxVariant::LogSumExp },
    };
    let graph = build_interaction_graph(&inputs.detections, &location, &inputs.window_sizes);
    let eval = total_energy_and_grad(states, &model, inputs, &graph)?;
    let g = flatten(
        &eval
            .grads
            .iter()
            .zip(states)
            .map(|(g, s)| ShapeState { center: g.center, kappa: g.kappa, alpha: g.alpha.clone(), ..s.clone() })
            .collect::<Vec<_>>(),
    );
    let x = flatten(states);
    let f = |v: &[f64]| -> Result<f64> { Ok(total_energy(&unflatten(states, v), &model, inputs, &graph)?.total()) };
    Ok((x.len(), fd_relative_error(f, &x, &g, step)?))
}

fn decoder_case(decoder: &DecoderWeights, rng: &mut ChaCha8Rng, c: usize, step: f64) -> Result<(usize, f64)> {
    let (w, h) = decoder.dims();
    let alpha: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up = Grid2D::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0));
    let (g, _) = decode_backward(decoder, &alpha, &up)?;
    let f = |a: &[f64]| -> Result<f64> {
        let phi = decode_slice(decoder, a)?;
        Ok(phi.data().iter().zip(up.data()).map(|(p, u)| p * u).sum())
    };
    Ok((c, fd_relative_error(f, &alpha, &g, step)?))
}

fn warp_case(rng: &mut ChaCha8Rng, step: f64) -> Result<(usize, f64)> {
    let src = Grid2D::from_fn(12, 12, |x, y| ((x as f64) * 0.7).sin() + ((y as f64) * 0.4).cos());
    let (ow, oh) = (20, 20);
    let up = Grid2D::from_fn(ow, oh, |_, _| rng.random_range(-1.0..1.0));
    let p = [rng.random_range(8.0..12.0), rng.random_range(8.0..12.0), rng.random_range(0.0..std::f64::consts::TAU)];
    let warp = |p: &[f64]| PlacedWarp { anchor: (p[0], p[1]), pivot: (6.0, 6.0), kappa: p[2] };
    let region = WarpRegion::full(ow, oh);
    let wg = warp(&p).backward(&src, region, &up, 0.0);
    let g = [wg.anchor.0, wg.anchor.1, wg.kappa];
    let f = |q: &[f64]| -> Result<f64> {
        let out = warp(q).forward(&src, region, 0.0);
        Ok(out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
    };
    Ok((3, fd_relative_error(f, &p, &g, step)?))
}

/// Runs every suite. The `energy` suite is the full scene energy with the
/// toy network decoder on `n_scenes` seeded scenes; the others cover the
/// linear decoder with several classes, the decoder input gradient and the
/// placement warp.
pub fn run_gradcheck(cfg: &GradcheckConfig, seed: u64) -> Result<Vec<GradcheckCase>> {
    if cfg.n_scenes == 0 || cfg.n_shapes == 0 || cfg.c == 0 || cfg.size < 16 {
        return Err(Error::Config(format!("bad gradcheck settings {cfg:?}")));
    }
    let mut cases = Vec::new();
    let mut push = |suite: &str, s: u64, (n_params, rel_error): (usize, f64)| {
        cases.push(GradcheckCase {
            suite: suite.to_string(),
            seed: s,
            n_params,
            rel_error,
            passed: rel_error < cfg.tolerance,
        });
    };
    for k in 0..cfg.n_scenes as u64 {
        let s = seed.wrapping_add(k);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dec = toy_deep_decoder(cfg.c, &mut rng)?;
        let kde = toy_kde(cfg.c, &mut rng)?;
        let (inputs, states) = toy_scene(&mut rng, cfg, 16, 1)?;
        push("energy", s, energy_case(&dec, &kde, 0.1, &inputs, &states, cfg.step)?);
    }
    for k in 0..2u64 {
        let s = seed.wrapping_add(1000 + k);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dec = toy_linear_decoder(cfg.c, 16, &mut rng);
        let kde = toy_kde(cfg.c, &mut rng)?;
        let (inputs, states) = toy_scene(&mut rng, cfg, 16, 2)?;
        push("energy-linear-multiclass", s, energy_case(&dec, &kde, 1.0, &inputs, &states, cfg.step)?);

        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dec = toy_deep_decoder(cfg.c, &mut rng)?;
        push("decoder", s, decoder_case(&dec, &mut rng, cfg.c, cfg.step)?);
        push("warp", s, warp_case(&mut rng, cfg.step)?);
    }
    Ok(cases)
}
