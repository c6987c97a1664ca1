//! Shape coefficient space: kernel-PCA encoder over training masks and the
//! kernel density prior on the resulting codes.

mod bundle;
mod kde;
mod kpca;

pub use bundle::{ShapeBundle, ShapeManifest};
pub use kde::{fit_kde, KdePrior};
pub use kpca::{
    center_mask, fit_kpca, KernelKind, KpcaModel, ShapeCode, ShapeKernelSpec, TrainingShapeSet,
};

/// Fits the encoder and a prior over its training codes in one step.
pub fn fit_shape_bundle(
    shapes: &TrainingShapeSet,
    spec: ShapeKernelSpec,
    c: usize,
    sigma: Option<f64>,
) -> crate::Result<ShapeBundle> {
    let kpca = fit_kpca(shapes, spec, c)?;
    let codes: Vec<ShapeCode> = (0..kpca.n_train()).map(|i| kpca.train_code(i)).collect();
    let kde = fit_kde(&codes, sigma)?;
    Ok(ShapeBundle { kpca, kde })
}
