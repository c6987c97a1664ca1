//! Decoders from shape codes to level-set grids.
//!
//! The linear decoder adds weighted eigen-fields to a mean field. The deep
//! decoder is a small transposed-convolution generator whose tanh output is
//! used directly as the level set.

mod deep;
mod io;
mod layers;
mod train;

use serde::{Deserialize, Serialize};

pub use deep::{BnMode, DeepDecoderSpec, DeepWeights, ForwardCache, Stage, BN_EPS, BN_MOMENTUM};
pub use io::{load_weights, load_weights_as, save_weights};
pub use train::{bce_with_tanh, train_decoder, TrainConfig};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, LevelSet};
use crate::shape::{KpcaModel, ShapeCode};
use deep::round_f32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderVariant {
    Linear,
    Deep,
}

impl std::str::FromStr for DecoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DecoderVariant::Linear),
            "deep" => Ok(DecoderVariant::Deep),
            _ => Err(Error::Argument(format!("unknown decoder variant '{s}'"))),
        }
    }
}

impl std::fmt::Display for DecoderVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderVariant::Linear => "linear",
            DecoderVariant::Deep => "deep",
        })
    }
}

/// Mean field plus one eigen-field per code component.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearWeights {
    pub mean_phi: Grid2D,
    pub fields: Vec<Grid2D>,
}

impl LinearWeights {
    /// Takes the mean field and eigenshapes of a linear-kernel model,
    /// rounded to single precision.
    pub fn from_kpca(kpca: &KpcaModel) -> Result<Self> {
        let fields = kpca.eigenshapes()?;
        Ok(LinearWeights {
            mean_phi: kpca.mean_phi.0.map(round_f32),
            fields: fields.iter().map(|f| f.map(round_f32)).collect(),
        })
    }

    pub fn c(&self) -> usize {
        self.fields.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecoderWeights {
    Linear(LinearWeights),
    Deep(DeepWeights),
}

impl DecoderWeights {
    pub fn variant(&self) -> DecoderVariant {
        match self {
            DecoderWeights::Linear(_) => DecoderVariant::Linear,
            DecoderWeights::Deep(_) => DecoderVariant::Deep,
        }
    }

    /// Code length expected by [`decode`].
    pub fn c(&self) -> usize {
        match self {
            DecoderWeights::Linear(l) => l.c(),
            DecoderWeights::Deep(d) => d.spec.c,
        }
    }

    /// Output grid `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            DecoderWeights::Linear(l) => l.mean_phi.dims(),
            DecoderWeights::Deep(d) => (d.spec.d_out, d.spec.d_out),
        }
    }

    /// Same variant and shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        match self {
            DecoderWeights::Linear(l) => {
                let (w, h) = l.mean_phi.dims();
                DecoderWeights::Linear(LinearWeights {
                    mean_phi: Grid2D::zeros(w, h),
                    fields: vec![Grid2D::zeros(w, h); l.c()],
                })
            }
            DecoderWeights::Deep(d) => {
                DecoderWeights::Deep(DeepWeights::gradient_buffer(d.spec).expect("spec already validated"))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DecoderWeights::Linear(l) => {
                let dims = l.mean_phi.dims();
                if l.fields.iter().any(|f| f.dims() != dims) {
                    return Err(Error::Dimension("eigen-field dims differ from the mean field".into()));
                }
                Ok(())
            }
            DecoderWeights::Deep(d) => d.validate(),
        }
    }
}

fn check_alpha(weights: &DecoderWeights, alpha: &[f64]) -> Result<()> {
    if alpha.len() != weights.c() {
        return Err(Error::Dimension(format!(
            "code has length {}, decoder expects {}",
            alpha.len(),
            weights.c()
        )));
    }
    Ok(())
}

/// Maps a code to a level-set grid.
pub fn decode(weights: &DecoderWeights, alpha: &ShapeCode) -> Result<LevelSet> {
    decode_slice(weights, &alpha.0)
}

pub fn decode_slice(weights: &DecoderWeights, alpha: &[f64]) -> Result<LevelSet> {
    check_alpha(weights, alpha)?;
    match weights {
        DecoderWeights::Linear(l) => {
            let mut out = l.mean_phi.clone();
            for (a, f) in alpha.iter().zip(&l.fields) {
                if *a == 0.0 {
                    continue;
                }
                for (o, v) in out.data_mut().iter_mut().zip(f.data()) {
                    *o += a * v;
                }
            }
            Ok(LevelSet(out))
        }
        DecoderWeights::Deep(d) => {
            let n = d.spec.d_out;
            let cache = d.forward(alpha, 1, BnMode::Running);
            Ok(LevelSet(Grid2D::new(n, n, cache.output())?))
        }
    }
}

/// Gradients of `sum(upstream * decode(weights, alpha))` with respect to the
/// code and to every parameter. The parameter gradient has the same layout as
/// `weights`; running batch-norm statistics receive zero.
pub fn decode_backward(
    weights: &DecoderWeights,
    alpha: &[f64],
    upstream: &Grid2D,
) -> Result<(Vec<f64>, DecoderWeights)> {
    let (g, theta) = decode_backward_inner(weights, alpha, upstream, true)?;
    Ok((g, theta.expect("requested")))
}

/// Code gradient only; skips parameter accumulation for the linear decoder.
pub fn decode_grad_alpha(weights: &DecoderWeights, alpha: &[f64], upstream: &Grid2D) -> Result<Vec<f64>> {
    Ok(decode_backward_inner(weights, alpha, upstream, false)?.0)
}

fn decode_backward_inner(
    weights: &DecoderWeights,
    alpha: &[f64],
    upstream: &Grid2D,
    want_theta: bool,
) -> Result<(Vec<f64>, Option<DecoderWeights>)> {
    check_alpha(weights, alpha)?;
    if upstream.dims() != weights.dims() {
        return Err(Error::Dimension(format!(
            "upstream is {:?}, decoder output is {:?}",
            upstream.dims(),
            weights.dims()
        )));
    }
    match weights {
        DecoderWeights::Linear(l) => {
            let g: Vec<f64> = l
                .fields
                .iter()
                .map(|f| f.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
                .collect();
            let theta = want_theta.then(|| {
                DecoderWeights::Linear(LinearWeights {
                    mean_phi: upstream.clone(),
                    fields: alpha.iter().map(|a| upstream.map(|u| a * u)).collect(),
                })
            });
            Ok((g, theta))
        }
        DecoderWeights::Deep(d) => {
            let cache = d.forward(alpha, 1, BnMode::Running);
            let gpre: Vec<f64> = cache
                .pre
                .iter()
                .zip(upstream.data())
                .map(|(p, u)| {
                    let z = p.tanh();
                    u * (1.0 - z * z)
                })
                .collect();
            let mut grads = DeepWeights::gradient_buffer(d.spec)?;
            let g = d.backward(&cache, &gpre, &mut grads);
            Ok((g, Some(DecoderWeights::Deep(grads))))
        }
    }
}
