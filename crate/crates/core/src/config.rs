//! Flat `section.key = value` configuration with a default for every key.
//!
//! ```text
//! # comments and blank lines are ignored
//! shape.c = 16
//! smooth.delta = auto
//! orientation.kind = von-mises
//! ```
//!
//! Unknown keys and malformed values are errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderVariant, DeepDecoderSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::evolve::{EvolveConfig, InitConfig, LbfgsConfig, SegmentParams};
use crate::gradcheck::GradcheckConfig;
use crate::grid::{SmoothMaxVariant, SmoothParams};
use crate::scene::{EnergyWeights, LocationModel, OrientationModel};
use crate::shape::{KernelKind, ShapeKernelSpec};
use crate::synth::{BlobParams, BuildingParams, SceneSpec, ShapeFamily};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeModelConfig {
    pub kernel: KernelKind,
    pub c: usize,
    pub clamp: f64,
    pub rbf_scale: f64,
}

impl ShapeModelConfig {
    pub fn kernel_spec(&self) -> ShapeKernelSpec {
        match self.kernel {
            KernelKind::LinearOnSignedDistance => ShapeKernelSpec::linear(self.clamp),
            KernelKind::RbfOnSignedDistance => ShapeKernelSpec::rbf(self.rbf_scale, self.clamp),
        }
    }
}

/// Network layout; the code length and output size come from the shape
/// model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpecConfig {
    pub d_f: usize,
    pub n_conv0: usize,
    pub d0: usize,
}

impl DecoderSpecConfig {
    pub fn spec(&self, c: usize, d_out: usize) -> DeepDecoderSpec {
        DeepDecoderSpec {
            c,
            d_f: self.d_f,
            n_conv0: self.n_conv0,
            d0: self.d0,
            d_out,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// `false` for blobs, `true` for building footprints.
    pub buildings: bool,
    pub width: usize,
    pub height: usize,
    pub n_shapes: usize,
    pub window: usize,
    pub n_train_shapes: usize,
    pub base_radius: f64,
    pub n_harmonics: usize,
    pub harmonic_amp: f64,
    pub min_side: f64,
    pub max_side: f64,
    pub notch_prob: f64,
    pub overlap_target: f64,
    pub noise_level: f64,
    pub jitter: f64,
}

impl SynthConfig {
    pub fn blob(&self) -> BlobParams {
        BlobParams {
            base_radius: self.base_radius,
            n_harmonics: self.n_harmonics,
            harmonic_amp: self.harmonic_amp,
            rng_seed: 0,
        }
    }

    pub fn family(&self) -> ShapeFamily {
        if self.buildings {
            ShapeFamily::Building(BuildingParams {
                min_side: self.min_side,
                max_side: self.max_side,
                notch_prob: self.notch_prob,
                rng_seed: 0,
            })
        } else {
            ShapeFamily::Blob(self.blob())
        }
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            width: self.width,
            height: self.height,
            n_shapes: self.n_shapes,
            shape: self.family(),
            overlap_target: self.overlap_target,
            noise_level: self.noise_level,
            jitter: self.jitter,
        }
    }
}

/// Rotation prior; `mu` and `concentration` only matter for von Mises.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationConfig {
    pub von_mises: bool,
    pub mu: f64,
    pub concentration: f64,
}

impl OrientationConfig {
    pub fn model(&self) -> OrientationModel {
        if self.von_mises {
            OrientationModel::VonMises {
                mu: self.mu,
                concentration: self.concentration,
            }
        } else {
            OrientationModel::Uniform
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub eps_d: f64,
    pub iou_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub shape: ShapeModelConfig,
    /// `None` picks the bandwidth from the training codes.
    pub kde_sigma: Option<f64>,
    pub decoder: DecoderSpecConfig,
    pub train: TrainConfig,
    /// `None` picks the Heaviside width from the decoder variant.
    pub smooth_delta: Option<f64>,
    pub smooth_gamma: f64,
    pub smooth_variant: SmoothMaxVariant,
    pub weights: EnergyWeights,
    pub location: LocationModel,
    pub orientation: OrientationConfig,
    pub init: InitConfig,
    pub optimizer: LbfgsConfig,
    pub empty_shape_area_threshold: usize,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        let paper = DeepDecoderSpec::paper_default(1);
        let smooth = SmoothParams::default();
        Config {
            shape: ShapeModelConfig {
                kernel: KernelKind::LinearOnSignedDistance,
                c: 32,
                clamp: 10.0,
                rbf_scale: 100.0,
            },
            kde_sigma: None,
            decoder: DecoderSpecConfig {
                d_f: paper.d_f,
                n_conv0: paper.n_conv0,
                d0: paper.d0,
            },
            train: TrainConfig::default(),
            smooth_delta: None,
            smooth_gamma: smooth.gamma,
            smooth_variant: smooth.variant,
            weights: EnergyWeights::default(),
            location: LocationModel::default(),
            orientation: OrientationConfig {
                von_mises: false,
                mu: 0.0,
                concentration: 1.0,
            },
            init: InitConfig::default(),
            optimizer: LbfgsConfig::default(),
            empty_shape_area_threshold: EvolveConfig::default().empty_shape_area_threshold,
            synth: SynthConfig {
                buildings: false,
                width: 192,
                height: 192,
                n_shapes: 4,
                window: 96,
                n_train_shapes: 100,
                base_radius: 24.0,
                n_harmonics: 3,
                harmonic_amp: 0.3,
                min_side: 24.0,
                max_side: 64.0,
                notch_prob: 0.5,
                overlap_target: 0.15,
                noise_level: 0.1,
                jitter: 2.0,
            },
            eval: EvalConfig { eps_d: 3.0, iou_min: 0.7 },
            gradcheck: GradcheckConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected 'section.key = value'", n + 1)));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "shape.kernel" => self.shape.kernel = v.parse()?,
            "shape.c" => self.shape.c = parse(k, v)?,
            "shape.clamp" => self.shape.clamp = parse(k, v)?,
            "shape.rbf_scale" => self.shape.rbf_scale = parse(k, v)?,
            "kde.sigma" => self.kde_sigma = parse_auto(k, v)?,
            "decoder-spec.d_f" => self.decoder.d_f = parse(k, v)?,
            "decoder-spec.n_conv0" => self.decoder.n_conv0 = parse(k, v)?,
            "decoder-spec.d0" => self.decoder.d0 = parse(k, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(k, v)?,
            "train.beta1" => self.train.beta1 = parse(k, v)?,
            "train.beta2" => self.train.beta2 = parse(k, v)?,
            "train.epsilon" => self.train.epsilon = parse(k, v)?,
            "train.epochs" => self.train.epochs = parse(k, v)?,
            "train.batch_size" => self.train.batch_size = parse(k, v)?,
            "smooth.delta" => self.smooth_delta = parse_auto(k, v)?,
            "smooth.gamma" => self.smooth_gamma = parse(k, v)?,
            "smooth.variant" => self.smooth_variant = v.parse()?,
            "energy-weights.gamma_shp" => self.weights.gamma_shp = parse(k, v)?,
            "energy-weights.gamma_loc" => self.weights.gamma_loc = parse(k, v)?,
            "energy-weights.gamma_ori" => self.weights.gamma_ori = parse(k, v)?,
            "energy-weights.gamma_ovp" => self.weights.gamma_ovp = parse(k, v)?,
            "location.sigma_loc" => self.location.sigma_loc = parse(k, v)?,
            "orientation.kind" => {
                self.orientation.von_mises = match v {
                    "uniform" => false,
                    "von-mises" => true,
                    other => return Err(Error::Config(format!("unknown orientation kind '{other}'"))),
                }
            }
            "orientation.mu" => self.orientation.mu = parse(k, v)?,
            "orientation.concentration" => self.orientation.concentration = parse(k, v)?,
            "init.use_rotation_init" => self.init.use_rotation_init = parse(k, v)?,
            "init.delta_kappa" => self.init.delta_kappa = parse(k, v)?,
            "init.min_init_pixels" => self.init.min_init_pixels = parse(k, v)?,
            "init.rot_prior_weight" => self.init.rot_prior_weight = parse(k, v)?,
            "init.rot_recon_weight" => self.init.rot_recon_weight = parse(k, v)?,
            "optimizer.memory" => self.optimizer.memory = parse(k, v)?,
            "optimizer.max_iterations" => self.optimizer.max_iterations = parse(k, v)?,
            "optimizer.grad_tolerance" => self.optimizer.grad_tolerance = parse(k, v)?,
            "optimizer.f_rel_tolerance" => self.optimizer.f_rel_tolerance = parse(k, v)?,
            "optimizer.c1" => self.optimizer.c1 = parse(k, v)?,
            "optimizer.c2" => self.optimizer.c2 = parse(k, v)?,
            "optimizer.max_line_search" => self.optimizer.max_line_search = parse(k, v)?,
            "evolve.empty_shape_area_threshold" => self.empty_shape_area_threshold = parse(k, v)?,
            "synth.family" => {
                self.synth.buildings = match v {
                    "blob" => false,
                    "building" => true,
                    other => return Err(Error::Config(format!("unknown shape family '{other}'"))),
                }
            }
            "synth.min_side" => self.synth.min_side = parse(k, v)?,
            "synth.max_side" => self.synth.max_side = parse(k, v)?,
            "synth.notch_prob" => self.synth.notch_prob = parse(k, v)?,
            "synth.width" => self.synth.width = parse(k, v)?,
            "synth.height" => self.synth.height = parse(k, v)?,
            "synth.n_shapes" => self.synth.n_shapes = parse(k, v)?,
            "synth.window" => self.synth.window = parse(k, v)?,
            "synth.n_train_shapes" => self.synth.n_train_shapes = parse(k, v)?,
            "synth.base_radius" => self.synth.base_radius = parse(k, v)?,
            "synth.n_harmonics" => self.synth.n_harmonics = parse(k, v)?,
            "synth.harmonic_amp" => self.synth.harmonic_amp = parse(k, v)?,
            "synth.overlap_target" => self.synth.overlap_target = parse(k, v)?,
            "synth.noise_level" => self.synth.noise_level = parse(k, v)?,
            "synth.jitter" => self.synth.jitter = parse(k, v)?,
            "eval.eps_d" => self.eval.eps_d = parse(k, v)?,
            "eval.iou_min" => self.eval.iou_min = parse(k, v)?,
            "gradcheck.n_scenes" => self.gradcheck.n_scenes = parse(k, v)?,
            "gradcheck.size" => self.gradcheck.size = parse(k, v)?,
            "gradcheck.n_shapes" => self.gradcheck.n_shapes = parse(k, v)?,
            "gradcheck.c" => self.gradcheck.c = parse(k, v)?,
            "gradcheck.step" => self.gradcheck.step = parse(k, v)?,
            "gradcheck.tolerance" => self.gradcheck.tolerance = parse(k, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let kernel = match self.shape.kernel {
            KernelKind::LinearOnSignedDistance => "linear",
            KernelKind::RbfOnSignedDistance => "rbf",
        };
        put("shape.kernel", kernel.into());
        put("shape.c", self.shape.c.to_string());
        put("shape.clamp", self.shape.clamp.to_string());
        put("shape.rbf_scale", self.shape.rbf_scale.to_string());
        put("kde.sigma", show_auto(self.kde_sigma));
        put("decoder-spec.d_f", self.decoder.d_f.to_string());
        put("decoder-spec.n_conv0", self.decoder.n_conv0.to_string());
        put("decoder-spec.d0", self.decoder.d0.to_string());
        put("train.learning_rate", self.train.learning_rate.to_string());
        put("train.beta1", self.train.beta1.to_string());
        put("train.beta2", self.train.beta2.to_string());
        put("train.epsilon", self.train.epsilon.to_string());
        put("train.epochs", self.train.epochs.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("smooth.delta", show_auto(self.smooth_delta));
        put("smooth.gamma", self.smooth_gamma.to_string());
        put("smooth.variant", self.smooth_variant.to_string());
        put("energy-weights.gamma_shp", self.weights.gamma_shp.to_string());
        put("energy-weights.gamma_loc", self.weights.gamma_loc.to_string());
        put("energy-weights.gamma_ori", self.weights.gamma_ori.to_string());
        put("energy-weights.gamma_ovp", self.weights.gamma_ovp.to_string());
        put("location.sigma_loc", self.location.sigma_loc.to_string());
        let kind = if self.orientation.von_mises { "von-mises" } else { "uniform" };
        put("orientation.kind", kind.into());
        put("orientation.mu", self.orientation.mu.to_string());
        put("orientation.concentration", self.orientation.concentration.to_string());
        put("init.use_rotation_init", self.init.use_rotation_init.to_string());
        put("init.delta_kappa", self.init.delta_kappa.to_string());
        put("init.min_init_pixels", self.init.min_init_pixels.to_string());
        put("init.rot_prior_weight", self.init.rot_prior_weight.to_string());
        put("init.rot_recon_weight", self.init.rot_recon_weight.to_string());
        put("optimizer.memory", self.optimizer.memory.to_string());
        put("optimizer.max_iterations", self.optimizer.max_iterations.to_string());
        put("optimizer.grad_tolerance", self.optimizer.grad_tolerance.to_string());
        put("optimizer.f_rel_tolerance", self.optimizer.f_rel_tolerance.to_string());
        put("optimizer.c1", self.optimizer.c1.to_string());
        put("optimizer.c2", self.optimizer.c2.to_string());
        put("optimizer.max_line_search", self.optimizer.max_line_search.to_string());
        put("evolve.empty_shape_area_threshold", self.empty_shape_area_threshold.to_string());
        put("synth.family", if self.synth.buildings { "building" } else { "blob" }.into());
        put("synth.min_side", self.synth.min_side.to_string());
        put("synth.max_side", self.synth.max_side.to_string());
        put("synth.notch_prob", self.synth.notch_prob.to_string());
        put("synth.width", self.synth.width.to_string());
        put("synth.height", self.synth.height.to_string());
        put("synth.n_shapes", self.synth.n_shapes.to_string());
        put("synth.window", self.synth.window.to_string());
        put("synth.n_train_shapes", self.synth.n_train_shapes.to_string());
        put("synth.base_radius", self.synth.base_radius.to_string());
        put("synth.n_harmonics", self.synth.n_harmonics.to_string());
        put("synth.harmonic_amp", self.synth.harmonic_amp.to_string());
        put("synth.overlap_target", self.synth.overlap_target.to_string());
        put("synth.noise_level", self.synth.noise_level.to_string());
        put("synth.jitter", self.synth.jitter.to_string());
        put("eval.eps_d", self.eval.eps_d.to_string());
        put("eval.iou_min", self.eval.iou_min.to_string());
        put("gradcheck.n_scenes", self.gradcheck.n_scenes.to_string());
        put("gradcheck.size", self.gradcheck.size.to_string());
        put("gradcheck.n_shapes", self.gradcheck.n_shapes.to_string());
        put("gradcheck.c", self.gradcheck.c.to_string());
        put("gradcheck.step", self.gradcheck.step.to_string());
        put("gradcheck.tolerance", self.gradcheck.tolerance.to_string());
        m
    }

    /// The configuration as parseable text.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.shape.c == 0 || !(self.shape.clamp > 0.0) || !(self.shape.rbf_scale > 0.0) {
            return bad("shape.c, shape.clamp and shape.rbf_scale must be positive");
        }
        if matches!(self.kde_sigma, Some(s) if !(s > 0.0)) || matches!(self.smooth_delta, Some(d) if !(d > 0.0)) {
            return bad("kde.sigma and smooth.delta must be positive or auto");
        }
        if self.decoder.d_f.is_multiple_of(2) || self.decoder.n_conv0 == 0 || self.decoder.d0 == 0 {
            return bad("decoder-spec needs an odd d_f and positive n_conv0, d0");
        }
        if !(self.eval.eps_d >= 0.0) || !(0.0..=1.0).contains(&self.eval.iou_min) {
            return bad("eval.eps_d must be >= 0 and eval.iou_min in [0, 1]");
        }
        self.train.validate()?;
        self.segment_params(DecoderVariant::Linear).validate()
    }

    pub fn smooth(&self, variant: DecoderVariant) -> SmoothParams {
        let auto = SegmentParams::for_variant(variant).smooth.delta;
        SmoothParams {
            delta: self.smooth_delta.unwrap_or(auto),
            gamma: self.smooth_gamma,
            variant: self.smooth_variant,
        }
    }

    pub fn segment_params(&self, variant: DecoderVariant) -> SegmentParams {
        SegmentParams {
            smooth: self.smooth(variant),
            weights: self.weights,
            location: self.location,
            orientation: self.orientation.model(),
            init: self.init,
            evolve: EvolveConfig {
                optimizer: self.optimizer,
                empty_shape_area_threshold: self.empty_shape_area_threshold,
            },
        }
    }
}
