//! Multi-contour level-set instance segmentation with learned shape priors.
//!
//! Shapes are encoded with kernel PCA over signed-distance fields, scored by
//! a kernel density prior on their codes, and decoded back to level sets by
//! either a linear eigenshape decoder or a small transposed-convolution
//! network. Many contours evolve jointly against a semantic probability map
//! by minimizing one smooth energy with L-BFGS.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod decoder;
pub mod error;
pub mod evolve;
pub mod files;
pub mod gradcheck;
pub mod grid;
pub mod scene;
pub mod linalg;
pub mod metrics;
pub mod shape;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
