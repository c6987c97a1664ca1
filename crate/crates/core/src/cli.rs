//! Subcommands of the `contour-fusion` binary. Each command reads a
//! [`Config`] and a seed, writes its outputs plus a [`RunManifest`] into one
//! directory, and records wall-clock time separately in `timing.json` so
//! that reruns produce identical bytes everywhere else.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::decoder::{load_weights, save_weights, train_decoder, DecoderVariant, DecoderWeights, LinearWeights};
use crate::error::{Error, Result};
use crate::evolve::{segment, LbfgsStatus};
use crate::files::{
    create_dir, list_masks, overlay_ppm, read_json, read_mask_dir, read_scene, write_json, write_mask_dir,
    write_scene, write_timing, RunManifest, SCENE_FILE,
};
use crate::gradcheck::{run_gradcheck, GradcheckCase};
use crate::grid::BinaryMask;
use crate::metrics::{iou_matrix, match_from_matrix, weighted_iou};
use crate::scene::{EnergyBreakdown, ShapeState};
use crate::shape::{center_mask, fit_shape_bundle, ShapeBundle, TrainingShapeSet};
use crate::synth::{gen_scene, shape_training_set};
use crate::tensor::{read_mask, write_mask};

#[derive(Debug, Parser)]
#[command(name = "contour-fusion", version, about = "Multi-contour level-set instance segmentation")]
pub struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a kernel-PCA shape model and code prior to a directory of masks.
    FitShapeModel {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive eigenshape weights or train the network decoder.
    TrainDecoder {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        variant: DecoderVariant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate training shapes and synthetic scenes with ground truth.
    Synth {
        #[arg(long)]
        n_scenes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment one scene file, or every scene under a directory.
    Segment {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score predicted instance masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        eps_d: Option<f64>,
        #[arg(long)]
        iou_min: Option<f64>,
        /// Report directory; the JSON report goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed;
    match &cli.command {
        Command::FitShapeModel { masks, out } => fit_shape_model(masks, out, &cfg, seed).map(|_| ()),
        Command::TrainDecoder { model, variant, out } => {
            train_decoder_cmd(model, *variant, out, &cfg, seed).map(|_| ())
        }
        Command::Synth { n_scenes, out } => synth(*n_scenes, out, &cfg, seed),
        Command::Segment {
            scene,
            model,
            weights,
            out,
            jobs,
        } => segment_cmd(scene, model, weights, out, *jobs, &cfg, seed),
        Command::Eval {
            pred,
            gt,
            eps_d,
            iou_min,
            out,
            jobs,
        } => {
            let mut cfg = cfg;
            cfg.eval.eps_d = eps_d.unwrap_or(cfg.eval.eps_d);
            cfg.eval.iou_min = iou_min.unwrap_or(cfg.eval.iou_min);
            cfg.validate()?;
            let report = eval(pred, gt, out.as_deref(), *jobs, &cfg, seed)?;
            if out.is_none() {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!(
                    "scenes {}  mean IoU {:.4}  mean wIoU {:.4}  precision {:.4}  recall {:.4}",
                    report.n_scenes, report.mean_iou, report.mean_wiou, report.precision, report.recall
                );
            }
            Ok(())
        }
        Command::Gradcheck { out } => gradcheck(out.as_deref(), &cfg, seed).map(|_| ()),
    }
}

/// Applies `f` to every item on up to `jobs` threads; results keep the item
/// order whatever the thread count.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let mut slots: Vec<Option<R>> = items.iter().map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                s.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(j)
                        .step_by(jobs)
                        .map(|(i, t)| (i, f(t)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Reads and centers every mask in `masks`, fits the shape model and
/// writes the bundle to `out`.
pub fn fit_shape_model(masks: &Path, out: &Path, cfg: &Config, seed: u64) -> Result<ShapeBundle> {
    let start = Instant::now();
    cfg.validate()?;
    let files = list_masks(masks)?;
    if files.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 shapes, found {} mask files in {}",
            files.len(),
            masks.display()
        )));
    }
    let mut set = Vec::with_capacity(files.len());
    for f in &files {
        let m = read_mask(f)?;
        if m.area() == 0 {
            return Err(Error::format(f, "mask is empty"));
        }
        set.push(center_mask(&m));
    }
    let shapes = TrainingShapeSet::new(set).map_err(|e| match e {
        Error::Dimension(m) | Error::Argument(m) => Error::Dimension(format!("{m} (files in {})", masks.display())),
        other => other,
    })?;
    let c = cfg.shape.c.min(shapes.len() - 1);
    let bundle = fit_shape_bundle(&shapes, cfg.shape.kernel_spec(), c, cfg.kde_sigma)?;
    bundle.save(out)?;
    let mut manifest = RunManifest::new("fit-shape-model", seed, cfg.entries());
    manifest.add_input("masks", masks)?;
    manifest.finish(out)?;
    write_timing(out, "fit-shape-model", start.elapsed().as_secs_f64())?;
    Ok(bundle)
}

/// Eigenshape weights come straight from the shape model; the network is
/// trained on the model's training shapes and their codes, and its loss
/// per epoch goes to `loss.csv`.
pub fn train_decoder_cmd(
    model: &Path,
    variant: DecoderVariant,
    out: &Path,
    cfg: &Config,
    seed: u64,
) -> Result<DecoderWeights> {
    let start = Instant::now();
    cfg.validate()?;
    let bundle = ShapeBundle::load(model)?;
    let kpca = &bundle.kpca;
    let (weights, loss) = match variant {
        DecoderVariant::Linear => (DecoderWeights::Linear(LinearWeights::from_kpca(kpca)?), None),
        DecoderVariant::Deep => {
            let (w, h) = kpca.dims();
            if w != h {
                return Err(Error::Dimension(format!("network decoder needs a square window, model is {w}x{h}")));
            }
            let pairs: Vec<_> = (0..kpca.n_train())
                .map(|i| {
                    let m = BinaryMask::from_fn(w, h, |x, y| kpca.train_phi[i][y * w + x] > 0.0);
                    (kpca.train_code(i), m)
                })
                .collect();
            let mut train = cfg.train.clone();
            train.rng_seed = seed;
            let (weights, loss) = train_decoder(cfg.decoder.spec(kpca.c(), w), &pairs, &train)?;
            (weights, Some(loss))
        }
    };
    save_weights(&weights, out)?;
    if let Some(loss) = loss {
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in loss.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", e + 1));
        }
        let p = out.join("loss.csv");
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    }
    let mut manifest = RunManifest::new("train-decoder", seed, cfg.entries());
    manifest.add_input("model", model)?;
    manifest.finish(out)?;
    write_timing(out, "train-decoder", start.elapsed().as_secs_f64())?;
    Ok(weights)
}

/// Writes `train_masks/shape_XXX.cft` and `scenes/scene_XXXX/` with scene
/// file, probabilities and ground truth under `gt/`.
pub fn synth(n_scenes: usize, out: &Path, cfg: &Config, seed: u64) -> Result<()> {
    let start = Instant::now();
    cfg.validate()?;
    let s = &cfg.synth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = shape_training_set(&s.family(), s.n_train_shapes, s.window, rng.next_u64())?;
    write_mask_dir(&out.join("train_masks"), "shape", train.masks())?;
    let spec = s.scene_spec();
    for i in 0..n_scenes {
        let truth = gen_scene(&spec, rng.next_u64())?;
        let dir = out.join("scenes").join(format!("scene_{i:04}"));
        write_scene(&dir, &truth.inputs(s.window)?)?;
        write_mask_dir(&dir.join("gt"), "instance", &truth.gt_masks)?;
    }
    RunManifest::new("synth", seed, cfg.entries()).finish(out)?;
    write_timing(out, "synth", start.elapsed().as_secs_f64())
}

/// Contents of `result.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentReport {
    pub variant: DecoderVariant,
    pub states: Vec<ShapeState>,
    /// Energy at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub terms: EnergyBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Per state: whether its mask fell below the area threshold.
    pub pruned: Vec<bool>,
    /// Mask file of each kept state, in state order.
    pub masks: Vec<String>,
}

/// Scene files to segment: `scene` itself, `scene/scene.json`, or the
/// scene file of every subdirectory.
fn scene_files(scene: &Path) -> Result<Vec<(Option<String>, PathBuf)>> {
    if scene.is_file() {
        return Ok(vec![(None, scene.to_path_buf())]);
    }
    if scene.join(SCENE_FILE).is_file() {
        return Ok(vec![(None, scene.join(SCENE_FILE))]);
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(scene).map_err(|e| Error::io(scene, e))? {
        let p = e.map_err(|e| Error::io(scene, e))?.path();
        if p.join(SCENE_FILE).is_file() {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
            out.push((name, p.join(SCENE_FILE)));
        }
    }
    if out.is_empty() {
        return Err(Error::Argument(format!("no {SCENE_FILE} found under {}", scene.display())));
    }
    out.sort();
    Ok(out)
}

pub fn segment_cmd(
    scene: &Path,
    model: &Path,
    weights: &Path,
    out: &Path,
    jobs: usize,
    cfg: &Config,
    seed: u64,
) -> Result<()> {
    cfg.validate()?;
    let bundle = ShapeBundle::load(model)?;
    let decoder = load_weights(weights)?;
    let files = scene_files(scene)?;
    let results = par_map(&files, jobs, |(name, file)| {
        let dir = name.as_ref().map_or_else(|| out.to_path_buf(), |n| out.join(n));
        segment_scene(file, model, weights, &bundle, &decoder, &dir, cfg, seed)
    });
    for ((_, file), r) in files.iter().zip(results) {
        let report = r?;
        log::info!(
            "{}: {} shapes, {} iterations, {:?}",
            file.display(),
            report.masks.len(),
            report.iterations,
            report.status
        );
    }
    Ok(())
}

/// Segments one scene into `out`: `result.json`, `masks/instance_XXX.cft`,
/// `overlay.ppm` and the manifest.
#[allow(clippy::too_many_arguments)]
pub fn segment_scene(
    scene_file: &Path,
    model_dir: &Path,
    weights_dir: &Path,
    bundle: &ShapeBundle,
    decoder: &DecoderWeights,
    out: &Path,
    cfg: &Config,
    seed: u64,
) -> Result<SegmentReport> {
    let start = Instant::now();
    let (inputs, p_path) = read_scene(scene_file)?;
    let params = cfg.segment_params(decoder.variant());
    let res = segment(&inputs, bundle, decoder, &params)?;
    create_dir(out)?;
    write_mask_dir(&out.join("masks"), "instance", &res.masks)?;
    let ppm = overlay_ppm(&inputs.p_sem[0], &res.masks, seed);
    let ppm_path = out.join("overlay.ppm");
    std::fs::write(&ppm_path, ppm).map_err(|e| Error::io(&ppm_path, e))?;
    let report = SegmentReport {
        variant: decoder.variant(),
        states: res.states,
        trace: res.trace,
        terms: res.terms,
        iterations: res.iterations,
        evaluations: res.evaluations,
        status: res.status,
        pruned: res.pruned,
        masks: (0..res.masks.len()).map(|i| format!("masks/instance_{i:03}.cft")).collect(),
    };
    write_json(&out.join("result.json"), &report)?;
    let mut manifest = RunManifest::new("segment", seed, cfg.entries());
    manifest.add_input("scene", scene_file)?;
    manifest.add_input("scene", &p_path)?;
    manifest.add_input("model", model_dir)?;
    manifest.add_input("weights", weights_dir)?;
    manifest.finish(out)?;
    write_timing(out, "segment", start.elapsed().as_secs_f64())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub gt: usize,
    /// Prediction with the highest IoU against this instance.
    pub pred: Option<usize>,
    pub iou: f64,
    pub wiou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub name: String,
    pub n_pred: usize,
    pub n_gt: usize,
    pub instances: Vec<InstanceScore>,
    /// Matched pairs at each cutoff of the report's curve.
    pub matched: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub iou_cutoff: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eps_d: f64,
    pub iou_min: f64,
    pub n_scenes: usize,
    pub n_gt: usize,
    pub n_pred: usize,
    /// Means over ground-truth instances of the best-matching IoU and wIoU.
    pub mean_iou: f64,
    pub mean_wiou: f64,
    /// One-to-one matching at `iou_min`.
    pub precision: f64,
    pub recall: f64,
    pub pr_curve: Vec<PrPoint>,
    pub scenes: Vec<SceneScore>,
}

/// The directory holding a scene's masks: `masks/` (segment output), `gt/`
/// (synth output) or `dir` itself.
fn mask_set(dir: &Path) -> Option<PathBuf> {
    for sub in ["masks", "gt"] {
        if dir.join(sub).is_dir() {
            return Some(dir.join(sub));
        }
    }
    let has_masks = list_masks(dir).map(|v| !v.is_empty()).unwrap_or(false);
    has_masks.then(|| dir.to_path_buf())
}

fn is_scene_dir(dir: &Path) -> bool {
    mask_set(dir).is_some() || dir.join(SCENE_FILE).is_file() || dir.join("result.json").is_file()
}

/// `(name, pred masks dir, gt masks dir)`.
type EvalPair = (String, Option<PathBuf>, Option<PathBuf>);

/// A directory whose subdirectories are scenes is a corpus; scenes pair up
/// by name.
fn eval_pairs(pred: &Path, gt: &Path) -> Result<Vec<EvalPair>> {
    let subdirs = |d: &Path| -> Result<Vec<String>> {
        let mut v = Vec::new();
        for e in std::fs::read_dir(d).map_err(|e| Error::io(d, e))? {
            let p = e.map_err(|e| Error::io(d, e))?.path();
            if p.is_dir() && is_scene_dir(&p) {
                v.push(p.file_name().expect("entry has a name").to_string_lossy().into_owned());
            }
        }
        v.sort();
        Ok(v)
    };
    if is_scene_dir(gt) {
        return Ok(vec![(String::new(), mask_set(pred), mask_set(gt))]);
    }
    let gts = subdirs(gt)?;
    if gts.is_empty() {
        return Err(Error::Argument(format!("no ground-truth masks under {}", gt.display())));
    }
    let preds = subdirs(pred)?;
    if let Some(extra) = preds.iter().find(|p| !gts.contains(p)) {
        return Err(Error::Argument(format!("prediction {extra} has no ground truth")));
    }
    Ok(gts
        .into_iter()
        .map(|n| {
            let p = pred.join(&n);
            let g = gt.join(&n);
            (n, mask_set(&p), mask_set(&g))
        })
        .collect())
}

pub const PR_CUTOFFS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

fn score_scene(name: &str, preds: &[BinaryMask], gts: &[BinaryMask], eps_d: f64, cutoffs: &[f64]) -> Result<SceneScore> {
    let m = iou_matrix(preds, gts)?;
    let mut instances = Vec::with_capacity(gts.len());
    for (j, g) in gts.iter().enumerate() {
        let best = (0..preds.len()).fold(None, |b: Option<usize>, i| match b {
            Some(k) if m[k][j] >= m[i][j] => Some(k),
            _ => Some(i),
        });
        let (iou, wiou) = match best {
            Some(i) => (m[i][j], weighted_iou(&preds[i], g, eps_d)?),
            None => (0.0, 0.0),
        };
        instances.push(InstanceScore { gt: j, pred: best, iou, wiou });
    }
    let matched = cutoffs
        .iter()
        .map(|&t| match_from_matrix(&m, preds.len(), gts.len(), t).matches.len())
        .collect();
    Ok(SceneScore {
        name: name.to_string(),
        n_pred: preds.len(),
        n_gt: gts.len(),
        instances,
        matched,
    })
}

fn ratio(k: usize, n: usize, both_empty: bool) -> f64 {
    if both_empty {
        1.0
    } else if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Scores one scene or a corpus. With `out`, writes `eval.json`,
/// `instances.csv`, `pr_curve.csv` and the manifest there.
pub fn eval(pred: &Path, gt: &Path, out: Option<&Path>, jobs: usize, cfg: &Config, seed: u64) -> Result<EvalReport> {
    let start = Instant::now();
    let (eps_d, iou_min) = (cfg.eval.eps_d, cfg.eval.iou_min);
    let mut cutoffs = PR_CUTOFFS.to_vec();
    if !cutoffs.contains(&iou_min) {
        cutoffs.push(iou_min);
    }
    let pairs = eval_pairs(pred, gt)?;
    let scenes = par_map(&pairs, jobs, |(name, p, g)| -> Result<SceneScore> {
        let preds = p.as_deref().map(read_mask_dir).transpose()?.unwrap_or_default();
        let gts = g.as_deref().map(read_mask_dir).transpose()?.unwrap_or_default();
        score_scene(name, &preds, &gts, eps_d, &cutoffs)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n_gt: usize = scenes.iter().map(|s| s.n_gt).sum();
    let n_pred: usize = scenes.iter().map(|s| s.n_pred).sum();
    let all: Vec<&InstanceScore> = scenes.iter().flat_map(|s| &s.instances).collect();
    let mean = |f: fn(&InstanceScore) -> f64| {
        if all.is_empty() {
            if n_pred == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            all.iter().map(|s| f(s)).sum::<f64>() / all.len() as f64
        }
    };
    let both_empty = n_gt == 0 && n_pred == 0;
    let point = |k: usize| {
        let tp: usize = scenes.iter().map(|s| s.matched[k]).sum();
        PrPoint {
            iou_cutoff: cutoffs[k],
            precision: ratio(tp, n_pred, both_empty),
            recall: ratio(tp, n_gt, both_empty),
        }
    };
    let at_min = point(cutoffs.iter().position(|&t| t == iou_min).expect("iou_min is a cutoff"));
    let report = EvalReport {
        eps_d,
        iou_min,
        n_scenes: scenes.len(),
        n_gt,
        n_pred,
        mean_iou: mean(|s| s.iou),
        mean_wiou: mean(|s| s.wiou),
        precision: at_min.precision,
        recall: at_min.recall,
        pr_curve: (0..PR_CUTOFFS.len()).map(point).collect(),
        scenes,
    };
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join("eval.json"), &report)?;
        let mut csv = String::from("scene,gt,pred,iou,wiou\n");
        for s in &report.scenes {
            for i in &s.instances {
                let p = i.pred.map_or_else(String::new, |p| p.to_string());
                csv.push_str(&format!("{},{},{p},{},{}\n", s.name, i.gt, i.iou, i.wiou));
            }
        }
        let p = out.join("instances.csv");
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
        let mut csv = String::from("iou_cutoff,precision,recall\n");
        for q in &report.pr_curve {
            csv.push_str(&format!("{},{},{}\n", q.iou_cutoff, q.precision, q.recall));
        }
        let p = out.join("pr_curve.csv");
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
        let mut manifest = RunManifest::new("eval", seed, cfg.entries());
        manifest.add_input("pred", pred)?;
        manifest.add_input("gt", gt)?;
        manifest.finish(out)?;
        write_timing(out, "eval", start.elapsed().as_secs_f64())?;
    }
    Ok(report)
}

/// Runs every gradient suite and prints one line per case. Fails with a
/// check error, after writing the report, if any case is out of tolerance.
pub fn gradcheck(out: Option<&Path>, cfg: &Config, seed: u64) -> Result<Vec<GradcheckCase>> {
    let start = Instant::now();
    cfg.validate()?;
    let cases = run_gradcheck(&cfg.gradcheck, seed)?;
    for c in &cases {
        println!(
            "{:<26} seed {:<6} params {:<5} rel err {:.3e}  {}",
            c.suite,
            c.seed,
            c.n_params,
            c.rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join("gradcheck.json"), &cases)?;
        RunManifest::new("gradcheck", seed, cfg.entries()).finish(out)?;
        write_timing(out, "gradcheck", start.elapsed().as_secs_f64())?;
    }
    let failed = cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::Check(format!(
            "{failed} of {} gradient checks exceed relative error {:e}",
            cases.len(),
            cfg.gradcheck.tolerance
        )));
    }
    Ok(cases)
}

/// Reads the masks written by [`segment_scene`].
pub fn read_segment_masks(dir: &Path) -> Result<Vec<BinaryMask>> {
    let report: SegmentReport = read_json(&dir.join("result.json"))?;
    report.masks.iter().map(|m| read_mask(&dir.join(m))).collect()
}

/// Writes a set of masks so that `fit-shape-model` can read them.
pub fn write_training_masks(dir: &Path, masks: &[BinaryMask]) -> Result<()> {
    create_dir(dir)?;
    for (i, m) in masks.iter().enumerate() {
        write_mask(&dir.join(format!("shape_{i:04}.cft")), m)?;
    }
    Ok(())
}
