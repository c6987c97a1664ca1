use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contour_fusion::decoder::{load_weights, save_weights};
use contour_fusion::files::{list_tree, read_run_manifest, sha256_file, MANIFEST_FILE};
use contour_fusion::grid::BinaryMask;
use contour_fusion::shape::ShapeBundle;
use contour_fusion::tensor::write_mask;

const SMALL: &str = "\
synth.width = 64
synth.height = 64
synth.n_shapes = 2
synth.window = 32
synth.n_train_shapes = 20
synth.base_radius = 6
shape.c = 4
train.epochs = 50
train.batch_size = 8
train.learning_rate = 0.001
decoder-spec.n_conv0 = 8
decoder-spec.d0 = 4
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contour-fusion")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: PathBuf,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = root.join("small.cfg");
        fs::write(&cfg, SMALL).unwrap();
        Work { _dir: dir, root, cfg }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all: Vec<&str> = args.to_vec();
        all.extend(["--config", s(&self.cfg), "--seed", "4"]);
        bin(&all)
    }

    fn ok(&self, args: &[&str]) -> Output {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    }
}

fn disk(r: f64, cx: f64) -> BinaryMask {
    BinaryMask::from_fn(16, 16, |x, y| (x as f64 - cx).powi(2) + (y as f64 - 7.5).powi(2) <= r * r)
}

#[test]
fn two_masks_give_one_component() {
    let w = Work::new();
    fs::create_dir(w.p("masks")).unwrap();
    write_mask(&w.p("masks/a.cft"), &disk(4.0, 7.5)).unwrap();
    write_mask(&w.p("masks/b.cft"), &disk(6.0, 6.0)).unwrap();
    w.ok(&["fit-shape-model", "--masks", s(&w.p("masks")), "--out", s(&w.p("model"))]);
    let b = ShapeBundle::load(&w.p("model")).unwrap();
    assert_eq!(b.kpca.c(), 1);
    assert_eq!(b.kpca.n_train(), 2);
}

#[test]
fn one_mask_is_rejected() {
    let w = Work::new();
    fs::create_dir(w.p("masks")).unwrap();
    write_mask(&w.p("masks/a.cft"), &disk(4.0, 7.5)).unwrap();
    let o = w.run(&["fit-shape-model", "--masks", s(&w.p("masks")), "--out", s(&w.p("model"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need at least 2 shapes"));
}

#[test]
fn malformed_mask_is_named() {
    let w = Work::new();
    fs::create_dir(w.p("masks")).unwrap();
    write_mask(&w.p("masks/a.cft"), &disk(4.0, 7.5)).unwrap();
    fs::write(w.p("masks/broken.cft"), b"not a tensor").unwrap();
    let o = w.run(&["fit-shape-model", "--masks", s(&w.p("masks")), "--out", s(&w.p("model"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.cft"));
}

#[test]
fn config_errors_are_usage_errors() {
    let w = Work::new();
    fs::write(w.p("bad.cfg"), "smooth.nonsense = 1\n").unwrap();
    let o = bin(&["gradcheck", "--config", s(&w.p("bad.cfg"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("smooth.nonsense"));
    let o = bin(&["segment", "--scene", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_bundle_fails() {
    let w = Work::new();
    let o = w.run(&["train-decoder", "--model", s(&w.p("nope")), "--variant", "linear", "--out", s(&w.p("w"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gradcheck_passes_and_reports_breaches() {
    let o = bin(&["gradcheck", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = Work::new();
    fs::write(w.p("strict.cfg"), "gradcheck.tolerance = 1e-300\ngradcheck.n_scenes = 1\n").unwrap();
    let o = bin(&["gradcheck", "--config", s(&w.p("strict.cfg")), "--out", s(&w.p("g"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(w.p("g/gradcheck.json").is_file());
}

/// Every output directory holds one manifest whose output digests cover
/// the other files and whose input digests match the inputs.
fn check_manifest(dir: &Path, inputs: &[(&str, &Path)]) {
    let m = read_run_manifest(dir).unwrap();
    let files: Vec<String> = list_tree(dir).unwrap();
    assert_eq!(files.iter().filter(|f| f.ends_with(MANIFEST_FILE)).count(), 1, "{dir:?}");
    for f in files.iter().filter(|f| *f != MANIFEST_FILE && *f != "timing.json") {
        assert_eq!(m.outputs[f], sha256_file(&dir.join(f)).unwrap(), "{f}");
    }
    for (role, path) in inputs {
        let rels = if path.is_file() {
            vec![path.file_name().unwrap().to_string_lossy().into_owned()]
        } else {
            list_tree(path).unwrap()
        };
        for rel in rels.iter().filter(|r| *r != "timing.json") {
            let file = if path.is_file() { path.to_path_buf() } else { path.join(rel) };
            assert_eq!(m.inputs[&format!("{role}/{rel}")], sha256_file(&file).unwrap(), "{role}/{rel}");
        }
    }
    assert_eq!(m.config["shape.c"], "4");
    assert_eq!(m.seed, 4);
}

#[test]
fn pipeline_round_trip() {
    let w = Work::new();
    w.ok(&["synth", "--n-scenes", "3", "--out", s(&w.p("synth"))]);
    w.ok(&["fit-shape-model", "--masks", s(&w.p("synth/train_masks")), "--out", s(&w.p("model"))]);
    w.ok(&["train-decoder", "--model", s(&w.p("model")), "--variant", "linear", "--out", s(&w.p("lin"))]);
    assert!(!w.p("lin/loss.csv").exists());
    w.ok(&["train-decoder", "--model", s(&w.p("model")), "--variant", "deep", "--out", s(&w.p("deep"))]);
    let csv = fs::read_to_string(w.p("deep/loss.csv")).unwrap();
    let rows: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows[49] < rows[0]);

    for weights in ["lin", "deep"] {
        let out = format!("seg_{weights}");
        w.ok(&[
            "segment",
            "--scene",
            s(&w.p("synth/scenes")),
            "--model",
            s(&w.p("model")),
            "--weights",
            s(&w.p(weights)),
            "--out",
            s(&w.p(&out)),
            "--jobs",
            "2",
        ]);
        let res: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(w.p(&format!("{out}/scene_0001/result.json"))).unwrap()).unwrap();
        assert_eq!(res["states"].as_array().unwrap().len(), 2);
        let ppm = fs::read(w.p(&format!("{out}/scene_0001/overlay.ppm"))).unwrap();
        assert!(ppm.starts_with(b"P6\n64 64\n255\n"));
    }
    let o = w.ok(&["eval", "--pred", s(&w.p("seg_lin")), "--gt", s(&w.p("synth/scenes")), "--out", s(&w.p("ev"))]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean IoU"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.p("ev/eval.json")).unwrap()).unwrap();
    assert_eq!(report["n_scenes"], 3);
    assert!(report["mean_iou"].as_f64().unwrap() > 0.8, "{}", report["mean_iou"]);
    assert_eq!(fs::read_to_string(w.p("ev/instances.csv")).unwrap().lines().count(), 7);

    let o = w.ok(&["eval", "--pred", s(&w.p("synth/scenes")), "--gt", s(&w.p("synth/scenes"))]);
    let same: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(same["mean_iou"], 1.0);
    assert_eq!(same["precision"], 1.0);

    check_manifest(&w.p("synth"), &[]);
    check_manifest(&w.p("model"), &[("masks", &w.p("synth/train_masks"))]);
    check_manifest(&w.p("deep"), &[("model", &w.p("model"))]);
    check_manifest(
        &w.p("seg_lin/scene_0000"),
        &[
            ("scene", &w.p("synth/scenes/scene_0000/scene.json")),
            ("scene", &w.p("synth/scenes/scene_0000/p_sem.cft")),
            ("model", &w.p("model")),
            ("weights", &w.p("lin")),
        ],
    );
    check_manifest(&w.p("ev"), &[("gt", &w.p("synth/scenes"))]);

    // Bundles written back from what was read are byte-identical.
    let b = ShapeBundle::load(&w.p("model")).unwrap();
    b.save(&w.p("model2")).unwrap();
    let weights = load_weights(&w.p("deep")).unwrap();
    save_weights(&weights, &w.p("deep2")).unwrap();
    for (a, b) in [("model", "model2"), ("deep", "deep2")] {
        for f in list_tree(&w.p(b)).unwrap() {
            if f == MANIFEST_FILE {
                continue;
            }
            assert_eq!(fs::read(w.p(a).join(&f)).unwrap(), fs::read(w.p(b).join(&f)).unwrap(), "{a}/{f}");
        }
    }
}

#[test]
fn parallel_segmentation_matches_serial() {
    let w = Work::new();
    w.ok(&["synth", "--n-scenes", "3", "--out", s(&w.p("synth"))]);
    w.ok(&["fit-shape-model", "--masks", s(&w.p("synth/train_masks")), "--out", s(&w.p("model"))]);
    w.ok(&["train-decoder", "--model", s(&w.p("model")), "--variant", "linear", "--out", s(&w.p("lin"))]);
    for jobs in ["1", "3"] {
        w.ok(&[
            "segment",
            "--scene",
            s(&w.p("synth/scenes")),
            "--model",
            s(&w.p("model")),
            "--weights",
            s(&w.p("lin")),
            "--out",
            s(&w.p(&format!("seg{jobs}"))),
            "--jobs",
            jobs,
        ]);
    }
    for f in list_tree(&w.p("seg1")).unwrap().iter().filter(|f| !f.ends_with("timing.json")) {
        assert_eq!(fs::read(w.p("seg1").join(f)).unwrap(), fs::read(w.p("seg3").join(f)).unwrap(), "{f}");
    }
}
