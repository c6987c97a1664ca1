//! On-disk shape model: `manifest.json` plus CFT1 tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KdePrior, KernelKind, KpcaModel, ShapeKernelSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, LevelSet};
use crate::tensor::{read_tensor, write_tensor, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeManifest {
    pub kernel: KernelKind,
    pub rbf_scale: f64,
    pub clamp: f64,
    pub c: usize,
    pub requested_c: usize,
    pub sigma: f64,
    pub sigma_fallback: bool,
    pub width: usize,
    pub height: usize,
    pub n_train: usize,
}

/// A fitted encoder together with its code prior.
#[derive(Clone, Debug)]
pub struct ShapeBundle {
    pub kpca: KpcaModel,
    pub kde: KdePrior,
}

impl ShapeBundle {
    pub fn manifest(&self) -> ShapeManifest {
        ShapeManifest {
            kernel: self.kpca.spec.kind,
            rbf_scale: self.kpca.spec.rbf_scale,
            clamp: self.kpca.spec.clamp,
            c: self.kpca.c(),
            requested_c: self.kpca.requested_c,
            sigma: self.kde.sigma,
            sigma_fallback: self.kde.sigma_fallback,
            width: self.kpca.width,
            height: self.kpca.height,
            n_train: self.kpca.n_train(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let m = self.manifest();
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        let mpath = dir.join("manifest.json");
        fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;

        let k = &self.kpca;
        let (n, c) = (k.n_train(), k.c());
        write_tensor(&dir.join("beta"), &Tensor::from_f64(vec![n, c], &k.beta)?)?;
        write_tensor(&dir.join("lambda"), &Tensor::vector(&k.lambda))?;
        let phi: Vec<f64> = k.train_phi.iter().flatten().copied().collect();
        write_tensor(&dir.join("train_phi"), &Tensor::from_f64(vec![n, k.height, k.width], &phi)?)?;
        write_tensor(&dir.join("mean_phi"), &Tensor::from_grid(&k.mean_phi))?;
        write_tensor(&dir.join("train_codes"), &Tensor::from_f64(vec![n, c], &k.train_codes)?)?;
        let mut centering = k.kernel_col_mean.clone();
        centering.push(k.kernel_grand_mean);
        write_tensor(&dir.join("centering"), &Tensor::vector(&centering))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: ShapeManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
        let (n, c, w, h) = (m.n_train, m.c, m.width, m.height);

        let expect = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let path = dir.join(name);
            let t = read_tensor(&path)?;
            if t.shape != shape {
                return Err(Error::format(
                    &path,
                    format!("shape {:?} does not match manifest {shape:?}", t.shape),
                ));
            }
            Ok(t.to_f64())
        };
        let beta = expect("beta", &[n, c])?;
        let lambda = expect("lambda", &[c])?;
        let phi = expect("train_phi", &[n, h, w])?;
        let mean_phi = expect("mean_phi", &[h, w])?;
        let train_codes = expect("train_codes", &[n, c])?;
        let mut centering = expect("centering", &[n + 1])?;
        let grand = centering.pop().unwrap();

        let spec = ShapeKernelSpec {
            kind: m.kernel,
            rbf_scale: m.rbf_scale,
            clamp: m.clamp,
        };
        let kpca = KpcaModel {
            spec,
            width: w,
            height: h,
            beta,
            lambda,
            train_phi: phi.chunks(w * h).map(<[f64]>::to_vec).collect(),
            kernel_col_mean: centering,
            kernel_grand_mean: grand,
            mean_phi: LevelSet(Grid2D::new(w, h, mean_phi)?),
            train_codes,
            requested_c: m.requested_c,
        };
        let codes = (0..n).map(|i| kpca.train_codes[i * c..(i + 1) * c].to_vec()).collect();
        Ok(ShapeBundle {
            kpca,
            kde: KdePrior {
                codes,
                sigma: m.sigma,
                sigma_fallback: m.sigma_fallback,
            },
        })
    }
}
