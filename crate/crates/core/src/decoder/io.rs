//! Weight bundles: `manifest.json` plus one CFT1 tensor per parameter.
//!
//! Linear bundles hold `mean_phi` `[h, w]` and `eigenshapes` `[c, h, w]`.
//! Deep bundles hold `dense.w`, `dense.b`, `stage{k}.kernel`, `stage{k}.bias`,
//! `stage{k}.bn.{gamma,beta,running_mean,running_var}`, `out.kernel` and
//! `out.bias`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DecoderVariant, DecoderWeights, DeepDecoderSpec, DeepWeights, LinearWeights};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::tensor::{read_tensor, write_tensor, Tensor};

#[derive(Debug, Serialize, Deserialize)]
struct WeightManifest {
    variant: String,
    c: usize,
    width: usize,
    height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<DeepDecoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<usize>,
}

pub fn save_weights(weights: &DecoderWeights, dir: &Path) -> Result<()> {
    weights.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (width, height) = weights.dims();
    let manifest = match weights {
        DecoderWeights::Linear(l) => WeightManifest {
            variant: "linear".into(),
            c: l.c(),
            width,
            height,
            spec: None,
            u: None,
        },
        DecoderWeights::Deep(d) => WeightManifest {
            variant: "deep".into(),
            c: d.spec.c,
            width,
            height,
            spec: Some(d.spec),
            u: Some(d.stages.len()),
        },
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    match weights {
        DecoderWeights::Linear(l) => {
            write_tensor(&dir.join("mean_phi"), &Tensor::from_grid(&l.mean_phi))?;
            let data: Vec<f64> = l.fields.iter().flat_map(|f| f.data().iter().copied()).collect();
            write_tensor(&dir.join("eigenshapes"), &Tensor::from_f64(vec![l.c(), height, width], &data)?)?;
        }
        DecoderWeights::Deep(d) => {
            for (name, shape, data) in d.tensors() {
                write_tensor(&dir.join(&name), &Tensor::from_f64(shape, data)?)?;
            }
        }
    }
    Ok(())
}

fn read_shaped(dir: &Path, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::format(&path, "tensor missing from weight bundle".to_string()));
    }
    let t = read_tensor(&path)?;
    if t.shape != shape {
        return Err(Error::format(
            &path,
            format!("tensor shape {:?}, manifest implies {shape:?}", t.shape),
        ));
    }
    Ok(t.to_f64())
}

pub fn load_weights(dir: &Path) -> Result<DecoderWeights> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: WeightManifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let variant: DecoderVariant = m
        .variant
        .parse()
        .map_err(|_| Error::format(&path, format!("unknown variant '{}'", m.variant)))?;
    let weights = match variant {
        DecoderVariant::Linear => {
            let (w, h) = (m.width, m.height);
            let mean = read_shaped(dir, "mean_phi", &[h, w])?;
            let fields = read_shaped(dir, "eigenshapes", &[m.c, h, w])?;
            DecoderWeights::Linear(LinearWeights {
                mean_phi: Grid2D::new(w, h, mean)?,
                fields: fields
                    .chunks(w * h)
                    .map(|c| Grid2D::new(w, h, c.to_vec()))
                    .collect::<Result<_>>()?,
            })
        }
        DecoderVariant::Deep => {
            let spec = m
                .spec
                .ok_or_else(|| Error::format(&path, "deep variant without a spec".to_string()))?;
            let mut d = DeepWeights::zeros(spec).map_err(|e| Error::format(&path, e.to_string()))?;
            if m.u != Some(d.stages.len()) || m.c != spec.c {
                return Err(Error::format(&path, "stage count or c disagrees with spec".to_string()));
            }
            let layout: Vec<(String, Vec<usize>)> = d.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
            for ((name, shape), slot) in layout.iter().zip(d.tensors_mut()) {
                *slot = read_shaped(dir, name, shape)?;
            }
            DecoderWeights::Deep(d)
        }
    };
    weights.validate().map_err(|e| Error::format(dir, e.to_string()))?;
    Ok(weights)
}

/// Loads a bundle and requires it to be of the given variant.
pub fn load_weights_as(dir: &Path, variant: DecoderVariant) -> Result<DecoderWeights> {
    let w = load_weights(dir)?;
    if w.variant() != variant {
        return Err(Error::format(
            dir.join("manifest.json"),
            format!("bundle holds a {} decoder, expected {variant}", w.variant()),
        ));
    }
    Ok(w)
}
