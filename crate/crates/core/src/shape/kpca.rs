use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{signed_distance, window_center, BinaryMask, Grid2D, LevelSet};
use crate::linalg::symmetric_eigen;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    LinearOnSignedDistance,
    RbfOnSignedDistance,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear-on-signed-distance" => Ok(Self::LinearOnSignedDistance),
            "rbf" | "rbf-on-signed-distance" => Ok(Self::RbfOnSignedDistance),
            other => Err(Error::Config(format!("unknown kernel kind '{other}'"))),
        }
    }
}

/// Which Mercer kernel compares two masks, and how their signed-distance
/// features are clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeKernelSpec {
    pub kind: KernelKind,
    pub rbf_scale: f64,
    pub clamp: f64,
}

impl ShapeKernelSpec {
    pub fn linear(clamp: f64) -> Self {
        Self {
            kind: KernelKind::LinearOnSignedDistance,
            rbf_scale: 1.0,
            clamp,
        }
    }

    pub fn rbf(rbf_scale: f64, clamp: f64) -> Self {
        Self {
            kind: KernelKind::RbfOnSignedDistance,
            rbf_scale,
            clamp,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.clamp > 0.0) {
            return Err(Error::Argument(format!("kernel clamp must be > 0, got {}", self.clamp)));
        }
        if self.kind == KernelKind::RbfOnSignedDistance && !(self.rbf_scale > 0.0) {
            return Err(Error::Argument(format!(
                "rbf scale must be > 0, got {}",
                self.rbf_scale
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::LinearOnSignedDistance => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelKind::RbfOnSignedDistance => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * self.rbf_scale * self.rbf_scale)).exp()
            }
        }
    }
}

/// Centered, same-sized training masks.
#[derive(Clone, Debug)]
pub struct TrainingShapeSet {
    masks: Vec<BinaryMask>,
}

impl TrainingShapeSet {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(Error::Argument("training set is empty".into()));
        };
        let dims = first.dims();
        let (cx, cy) = window_center(dims.0, dims.1);
        for (i, m) in masks.iter().enumerate() {
            if m.dims() != dims {
                return Err(Error::Dimension(format!(
                    "mask {i} is {:?}, expected {dims:?}",
                    m.dims()
                )));
            }
            let Some((mx, my)) = m.centroid() else {
                return Err(Error::Argument(format!("mask {i} is empty")));
            };
            if (mx - cx).abs() > 0.5 + 1e-9 || (my - cy).abs() > 0.5 + 1e-9 {
                return Err(Error::Argument(format!(
                    "mask {i} centroid ({mx:.2}, {my:.2}) is not at the window center ({cx}, {cy})"
                )));
            }
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.masks[0].dims()
    }
}

/// Shifts a mask by whole pixels so its centroid is within half a pixel of
/// the window center. Already centered masks are returned unchanged; pixels
/// pushed off the window are lost.
pub fn center_mask(mask: &BinaryMask) -> BinaryMask {
    let Some((mx, my)) = mask.centroid() else {
        return mask.clone();
    };
    let (cx, cy) = window_center(mask.width(), mask.height());
    let step = |d: f64| if d.abs() <= 0.5 { 0 } else { d.round() as i64 };
    mask.shifted(step(cx - mx), step(cy - my))
}

/// A fitted kernel-PCA shape encoder.
///
/// `beta` holds the expansion coefficients of each retained eigenvector in
/// terms of the centered training features, scaled so that the feature-space
/// eigenvectors have unit norm. `lambda` are covariance eigenvalues; the
/// training codes of component `k` have variance `lambda[k]`.
#[derive(Clone, Debug)]
pub struct KpcaModel {
    pub spec: ShapeKernelSpec,
    pub width: usize,
    pub height: usize,
    /// Row-major `n_train x c`.
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub train_phi: Vec<Vec<f64>>,
    /// Column means of the uncentered kernel matrix.
    pub kernel_col_mean: Vec<f64>,
    pub kernel_grand_mean: f64,
    pub mean_phi: LevelSet,
    /// Row-major `n_train x c`.
    pub train_codes: Vec<f64>,
    /// Set when fewer than the requested components had positive eigenvalues.
    pub requested_c: usize,
}

/// Flat real vector of shape coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeCode(pub Vec<f64>);

impl ShapeCode {
    pub fn zeros(c: usize) -> Self {
        ShapeCode(vec![0.0; c])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

const EIGEN_REL_TOL: f64 = 1e-10;

impl KpcaModel {
    pub fn c(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_train(&self) -> usize {
        self.train_phi.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// True when the model kept fewer components than requested.
    pub fn is_reduced(&self) -> bool {
        self.c() < self.requested_c
    }

    pub fn train_code(&self, i: usize) -> ShapeCode {
        let c = self.c();
        ShapeCode(self.train_codes[i * c..(i + 1) * c].to_vec())
    }

    pub fn features(&self, mask: &BinaryMask) -> Result<Vec<f64>> {
        if mask.dims() != self.dims() {
            return Err(Error::Dimension(format!(
                "mask is {:?}, model expects {:?}",
                mask.dims(),
                self.dims()
            )));
        }
        Ok(signed_distance(mask, self.spec.clamp)?.into_grid().into_data())
    }

    /// Projects a mask onto the retained components.
    pub fn encode(&self, mask: &BinaryMask) -> Result<ShapeCode> {
        let phi = self.features(mask)?;
        Ok(self.encode_features(&phi))
    }

    pub fn encode_features(&self, phi: &[f64]) -> ShapeCode {
        let n = self.n_train();
        let c = self.c();
        let k: Vec<f64> = self.train_phi.iter().map(|t| self.spec.eval(t, phi)).collect();
        let mean_k = k.iter().sum::<f64>() / n as f64;
        let mut alpha = vec![0.0; c];
        for i in 0..n {
            let kc = k[i] - mean_k - self.kernel_col_mean[i] + self.kernel_grand_mean;
            for (a, b) in alpha.iter_mut().zip(&self.beta[i * c..(i + 1) * c]) {
                *a += b * kc;
            }
        }
        ShapeCode(alpha)
    }

    /// Training masks paired with their codes, in training order.
    pub fn encode_training_set(&self, shapes: &TrainingShapeSet) -> Vec<(BinaryMask, ShapeCode)> {
        shapes
            .masks()
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), self.train_code(i)))
            .collect()
    }

    /// Eigen-fields of the linear kernel, `Ψ_k = Σ_i β_ik (φ_i − φ̄)`; these
    /// are orthonormal and reproduce codes by projection.
    pub fn eigenshapes(&self) -> Result<Vec<Grid2D>> {
        if self.spec.kind != KernelKind::LinearOnSignedDistance {
            return Err(Error::Argument(
                "explicit eigenshapes exist only for the linear kernel".into(),
            ));
        }
        let c = self.c();
        let p = self.width * self.height;
        let mut out = Vec::with_capacity(c);
        for k in 0..c {
            let mut psi = vec![0.0; p];
            for (i, phi) in self.train_phi.iter().enumerate() {
                let b = self.beta[i * c + k];
                for ((o, &v), &m) in psi.iter_mut().zip(phi).zip(self.mean_phi.data()) {
                    *o += b * (v - m);
                }
            }
            out.push(Grid2D::new(self.width, self.height, psi)?);
        }
        Ok(out)
    }
}

/// Kernel PCA over the signed-distance fields of `shapes`.
///
/// Keeps the top `c` components with eigenvalues above a relative tolerance;
/// if fewer exist the model is returned with its reduced count (see
/// [`KpcaModel::is_reduced`]).
pub fn fit_kpca(shapes: &TrainingShapeSet, spec: ShapeKernelSpec, c: usize) -> Result<KpcaModel> {
    spec.validate()?;
    let n = shapes.len();
    if n < 2 {
        return Err(Error::Argument("need at least 2 shapes".into()));
    }
    if c == 0 || c > n - 1 {
        return Err(Error::Argument(format!(
            "component count {c} must be in 1..={}",
            n - 1
        )));
    }
    let (w, h) = shapes.dims();
    let phis: Vec<Vec<f64>> = shapes
        .masks()
        .iter()
        .map(|m| signed_distance(m, spec.clamp).map(|p| p.into_grid().into_data()))
        .collect::<Result<_>>()?;

    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(&phis[i], &phis[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let col_mean: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| k[i * n + j]).sum::<f64>() / n as f64)
        .collect();
    let grand = col_mean.iter().sum::<f64>() / n as f64;
    let mut kc = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            kc[i * n + j] = k[i * n + j] - col_mean[i] - col_mean[j] + grand;
        }
    }

    let eig = symmetric_eigen(&kc, n);
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = EIGEN_REL_TOL * scale;
    if let Some(&neg) = eig.values.last() {
        if neg < -1e-8 * scale {
            return Err(Error::Kernel(format!(
                "centered kernel matrix has eigenvalue {neg:e}; kernel is not positive semi-definite"
            )));
        }
    }
    let kept = eig.values.iter().take(c).filter(|&&mu| mu > tol).count();
    if kept == 0 {
        return Err(Error::Argument(
            "training shapes are identical after centering".into(),
        ));
    }
    if kept < c {
        log::warn!("kernel PCA kept {kept} of {c} requested components");
    }

    let mut beta = vec![0.0; n * kept];
    let mut lambda = Vec::with_capacity(kept);
    for col in 0..kept {
        let mu = eig.values[col];
        let mut u = eig.column(col);
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = u
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        if pivot.1 < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
        let s = 1.0 / mu.sqrt();
        for i in 0..n {
            beta[i * kept + col] = u[i] * s;
        }
        lambda.push(mu / n as f64);
    }

    let mut train_codes = vec![0.0; n * kept];
    for i in 0..n {
        for col in 0..kept {
            train_codes[i * kept + col] = (0..n).map(|j| kc[i * n + j] * beta[j * kept + col]).sum();
        }
    }

    let p = w * h;
    let mut mean = vec![0.0; p];
    for phi in &phis {
        for (m, v) in mean.iter_mut().zip(phi) {
            *m += v / n as f64;
        }
    }

    Ok(KpcaModel {
        spec,
        width: w,
        height: h,
        beta,
        lambda,
        train_phi: phis,
        kernel_col_mean: col_mean,
        kernel_grand_mean: grand,
        mean_phi: LevelSet(Grid2D::new(w, h, mean)?),
        train_codes,
        requested_c: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(n: usize, r: f64, dx: f64) -> BinaryMask {
        let c = (n / 2) as f64;
        BinaryMask::from_fn(n, n, |x, y| {
            let ex = x as f64 - c - dx;
            let ey = y as f64 - c;
            ex * ex + ey * ey <= r * r
        })
    }

    fn bar(n: usize, half_w: i64, half_h: i64) -> BinaryMask {
        let c = (n / 2) as i64;
        BinaryMask::from_fn(n, n, |x, y| {
            (x as i64 - c).abs() <= half_w && (y as i64 - c).abs() <= half_h
        })
    }

    fn set(masks: Vec<BinaryMask>) -> TrainingShapeSet {
        TrainingShapeSet::new(masks).unwrap()
    }

    #[test]
    fn mirror_pair_codes_are_symmetric() {
        let a = bar(9, 3, 1);
        let b = bar(9, 1, 3);
        let m = fit_kpca(&set(vec![a, b]), ShapeKernelSpec::linear(9.0), 1).unwrap();
        let c0 = m.train_code(0).0[0];
        let c1 = m.train_code(1).0[0];
        assert!((c0 + c1).abs() < 1e-9);
        assert!(c0.abs() > 0.1);
    }

    #[test]
    fn single_shape_rejected() {
        let e = fit_kpca(&set(vec![bar(9, 2, 2)]), ShapeKernelSpec::linear(9.0), 1).unwrap_err();
        assert!(e.to_string().contains("need at least 2 shapes"));
    }

    #[test]
    fn component_count_bounds() {
        let s = set(vec![bar(9, 2, 2), bar(9, 3, 1), bar(9, 1, 3)]);
        assert!(fit_kpca(&s, ShapeKernelSpec::linear(9.0), 3).is_err());
        assert!(fit_kpca(&s, ShapeKernelSpec::linear(9.0), 0).is_err());
    }

    #[test]
    fn duplicate_shapes_reduce_component_count() {
        let s = set(vec![bar(9, 2, 2), bar(9, 2, 2), bar(9, 3, 1), bar(9, 3, 1)]);
        let m = fit_kpca(&s, ShapeKernelSpec::linear(9.0), 3).unwrap();
        assert_eq!(m.c(), 1);
        assert!(m.is_reduced());
    }

    #[test]
    fn in_sample_encode_matches_training_codes() {
        let masks: Vec<_> = (0..6).map(|i| disk(15, 3.0 + 0.6 * i as f64, 0.0)).collect();
        let s = set(masks.into_iter().chain([bar(15, 5, 2), bar(15, 2, 5)]).collect());
        for spec in [ShapeKernelSpec::linear(15.0), ShapeKernelSpec::rbf(20.0, 15.0)] {
            let m = fit_kpca(&s, spec, 4).unwrap();
            for (i, mask) in s.masks().iter().enumerate() {
                let code = m.encode(mask).unwrap();
                for (a, b) in code.0.iter().zip(&m.train_code(i).0) {
                    assert!((a - b).abs() < 1e-8, "{spec:?}");
                }
            }
            // Normalization: beta_k^T Kc beta_k = 1 equals sum_i alpha_ik beta_ik.
            let c = m.c();
            for k in 0..c {
                let q: f64 = (0..m.n_train()).map(|i| m.beta[i * c + k] * m.train_codes[i * c + k]).sum();
                assert!((q - 1.0).abs() < 1e-8);
            }
            for w in m.lambda.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_on_encode() {
        let s = set(vec![bar(9, 2, 2), bar(9, 3, 1)]);
        let m = fit_kpca(&s, ShapeKernelSpec::linear(9.0), 1).unwrap();
        assert!(matches!(m.encode(&bar(11, 2, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn uncentered_masks_rejected() {
        let off = BinaryMask::from_fn(9, 9, |x, y| x < 3 && y < 3);
        assert!(TrainingShapeSet::new(vec![bar(9, 1, 1), off.clone()]).is_err());
        let centered = center_mask(&off);
        assert!(TrainingShapeSet::new(vec![bar(9, 1, 1), centered]).is_ok());
    }
    proptest! {
        #[test]
        fn centering_is_idempotent(x0 in 0usize..10, y0 in 0usize..10, w in 1usize..7, h in 1usize..7) {
            let m = BinaryMask::from_fn(17, 16, |x, y| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y));
            let c = center_mask(&m);
            prop_assert_eq!(c.area(), m.area());
            let (cx, cy) = c.centroid().unwrap();
            let (wx, wy) = window_center(17, 16);
            prop_assert!((cx - wx).abs() <= 0.5 && (cy - wy).abs() <= 0.5);
            prop_assert_eq!(center_mask(&c), c);
        }
    }
}
