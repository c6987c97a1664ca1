//! On-disk formats used by the command-line tools: scene descriptions, mask
//! directories, run manifests and PPM overlays.
//!
//! A scene directory holds
//!
//! ```text
//! scene.json      {"width", "height", "window_sizes", "detections", "p_sem": "p_sem.cft"}
//! p_sem.cft       CFT1 tensor [classes, height, width], background first
//! gt/             optional ground-truth instance masks
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid2D};
use crate::scene::{Detection, SceneInputs};
use crate::tensor::{read_mask, read_tensor, write_mask, write_tensor, Tensor};

pub const SCENE_FILE: &str = "scene.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";
pub const MASK_EXT: &str = "cft";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub width: usize,
    pub height: usize,
    pub window_sizes: Vec<usize>,
    pub detections: Vec<Detection>,
    /// Path of the probability tensor, relative to the scene file.
    pub p_sem: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `scene.json` and `p_sem.cft` into `dir`.
pub fn write_scene(dir: &Path, inputs: &SceneInputs) -> Result<()> {
    create_dir(dir)?;
    let (w, h) = inputs.dims();
    let data: Vec<f64> = inputs.p_sem.iter().flat_map(|g| g.data().iter().copied()).collect();
    write_tensor(&dir.join("p_sem.cft"), &Tensor::from_f64(vec![inputs.n_classes(), h, w], &data)?)?;
    let file = SceneFile {
        width: w,
        height: h,
        window_sizes: inputs.window_sizes.clone(),
        detections: inputs.detections.clone(),
        p_sem: "p_sem.cft".into(),
    };
    write_json(&dir.join(SCENE_FILE), &file)
}

/// Reads a scene file and the probability tensor it names. Returns the
/// inputs and the tensor's path.
pub fn read_scene(path: &Path) -> Result<(SceneInputs, PathBuf)> {
    let file: SceneFile = read_json(path)?;
    let p_path = path.parent().unwrap_or(Path::new(".")).join(&file.p_sem);
    let t = read_tensor(&p_path)?;
    let expect = [file.window_sizes.len(), file.height, file.width];
    if t.shape != expect {
        return Err(Error::format(
            &p_path,
            format!("shape {:?}, scene file expects {expect:?}", t.shape),
        ));
    }
    let n = file.width * file.height;
    let grids = t
        .to_f64()
        .chunks(n)
        .map(|c| Grid2D::new(file.width, file.height, c.to_vec()))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::format(&p_path, e.to_string()))?;
    let inputs = SceneInputs::new(grids, file.detections, file.window_sizes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((inputs, p_path))
}

/// Files with the mask extension directly inside `dir`, sorted by name.
pub fn list_masks(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == MASK_EXT) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_mask_dir(dir: &Path) -> Result<Vec<BinaryMask>> {
    list_masks(dir)?.iter().map(|p| read_mask(p)).collect()
}

/// Writes `{prefix}_{i:03}.cft` for every mask.
pub fn write_mask_dir(dir: &Path, prefix: &str, masks: &[BinaryMask]) -> Result<()> {
    create_dir(dir)?;
    for (i, m) in masks.iter().enumerate() {
        write_mask(&dir.join(format!("{prefix}_{i:03}.{MASK_EXT}")), m)?;
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `root`, as sorted `/`-separated relative paths.
pub fn list_tree(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = e.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if root.is_file() {
        return Ok(vec![root.file_name().map_or_else(String::new, |n| n.to_string_lossy().into())]);
    }
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Reproducibility record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// sha256 of every input file, keyed by `role/relative path`.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of every output file except the manifest and timing record.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records `path` (a file or a directory tree) under `role`.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        if path.is_file() {
            let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            self.inputs.insert(format!("{role}/{name}"), sha256_file(path)?);
            return Ok(());
        }
        for rel in list_tree(path)? {
            if rel == TIMING_FILE {
                continue;
            }
            self.inputs.insert(format!("{role}/{rel}"), sha256_file(&path.join(&rel))?);
        }
        Ok(())
    }

    /// Hashes the files under `dir` and writes the manifest there. If `dir`
    /// already has a `manifest.json` (a model bundle), the record is added
    /// to it under the key `run`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        for rel in list_tree(dir)? {
            if rel == MANIFEST_FILE || rel == TIMING_FILE {
                continue;
            }
            self.outputs.insert(rel.clone(), sha256_file(&dir.join(&rel))?);
        }
        let path = dir.join(MANIFEST_FILE);
        let run = serde_json::to_value(&self).expect("manifest serializes");
        let doc = if path.exists() {
            let mut existing: serde_json::Value = read_json(&path)?;
            match existing.as_object_mut() {
                Some(obj) => {
                    obj.insert("run".into(), run);
                }
                None => return Err(Error::format(&path, "manifest is not a JSON object")),
            }
            existing
        } else {
            run
        };
        write_json(&path, &doc)
    }
}

/// Reads the run record of an output directory.
pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let doc: serde_json::Value = read_json(&path)?;
    let run = doc.get("run").cloned().unwrap_or(doc);
    serde_json::from_value(run).map_err(|e| Error::format(&path, e.to_string()))
}

#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    wall_clock_seconds: f64,
}

pub fn write_timing(dir: &Path, command: &str, seconds: f64) -> Result<()> {
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            command,
            wall_clock_seconds: seconds,
        },
    )
}

/// Gray background from `1 - p_background`, with each instance outlined in
/// a random color drawn from `seed`. Binary PPM (P6).
pub fn overlay_ppm(p_background: &Grid2D, masks: &[BinaryMask], seed: u64) -> Vec<u8> {
    let (w, h) = p_background.dims();
    let mut rgb: Vec<u8> = p_background
        .data()
        .iter()
        .flat_map(|&p| {
            let v = (40.0 + 160.0 * (1.0 - p).clamp(0.0, 1.0)).round() as u8;
            [v, v, v]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in masks {
        let color: [u8; 3] = [rng.random_range(64..=255), rng.random_range(64..=255), rng.random_range(64..=255)];
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == h
                    || !m.get(x - 1, y)
                    || !m.get(x + 1, y)
                    || !m.get(x, y - 1)
                    || !m.get(x, y + 1);
                if edge {
                    let i = 3 * (y * w + x);
                    rgb[i..i + 3].copy_from_slice(&color);
                }
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(rgb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Rect;

    fn scene() -> SceneInputs {
        let fg = Grid2D::from_fn(12, 10, |x, y| if (3..8).contains(&x) && (2..7).contains(&y) { 0.9 } else { 0.1 });
        let det = Detection {
            center: (5.0, 4.0),
            bbox: Rect { x0: 2.5, y0: 1.5, x1: 7.5, y1: 6.5 },
            class_id: 1,
        };
        SceneInputs::single_class(&fg, vec![det], 8).unwrap()
    }

    #[test]
    fn scene_round_trip_is_byte_stable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_scene(a.path(), &scene()).unwrap();
        let (back, _) = read_scene(&a.path().join(SCENE_FILE)).unwrap();
        assert_eq!(back.detections, scene().detections);
        write_scene(b.path(), &back).unwrap();
        for f in [SCENE_FILE, "p_sem.cft"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn scene_shape_mismatch_names_file() {
        let d = tempfile::tempdir().unwrap();
        write_scene(d.path(), &scene()).unwrap();
        write_tensor(&d.path().join("p_sem.cft"), &Tensor::vector(&[0.5, 0.5])).unwrap();
        let err = read_scene(&d.path().join(SCENE_FILE)).unwrap_err();
        assert!(err.to_string().contains("p_sem.cft"), "{err}");
    }

    #[test]
    fn manifest_merges_into_existing_and_skips_itself() {
        let d = tempfile::tempdir().unwrap();
        write_json(&d.path().join(MANIFEST_FILE), &serde_json::json!({"c": 3})).unwrap();
        fs::write(d.path().join("x.bin"), b"abc").unwrap();
        write_timing(d.path(), "t", 1.5).unwrap();
        RunManifest::new("t", 7, BTreeMap::new()).finish(d.path()).unwrap();
        let doc: serde_json::Value = read_json(&d.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(doc["c"], 3);
        let run = read_run_manifest(d.path()).unwrap();
        assert_eq!(run.seed, 7);
        assert_eq!(run.outputs.keys().collect::<Vec<_>>(), vec!["x.bin"]);
        assert_eq!(
            run.outputs["x.bin"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn overlay_header_and_outline() {
        let bg = Grid2D::filled(5, 4, 1.0);
        let m = BinaryMask::from_fn(5, 4, |x, y| (1..4).contains(&x) && (1..3).contains(&y));
        let ppm = overlay_ppm(&bg, &[m], 1);
        let header = b"P6\n5 4\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        assert_eq!(ppm.len(), header.len() + 5 * 4 * 3);
        let px = |x: usize, y: usize| &ppm[header.len() + 3 * (y * 5 + x)..][..3];
        assert_eq!(px(0, 0), &[40, 40, 40]);
        assert_ne!(px(1, 1), &[40, 40, 40]);
    }
}
