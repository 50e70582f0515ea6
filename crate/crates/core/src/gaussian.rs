//! Closed-form 2-Wasserstein distance between Gaussians and minibatch moments.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{OtError, Result};
use crate::measures::PointCloud;
use crate::Matrix;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub covariance: Matrix,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, covariance: Matrix) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(OtError::invalid(format!(
                "covariance is {:?} but mean has length {d}",
                covariance.shape()
            )));
        }
        check_symmetric(&covariance)?;
        Ok(Self { mean, covariance })
    }

    /// `N(0, I_d)`
    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            covariance: Matrix::identity(d, d),
        }
    }

    /// `N(μ, σ² I_d)`
    pub fn isotropic(mean: DVector<f64>, sigma: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            covariance: Matrix::identity(d, d) * (sigma * sigma),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if !s.is_square() {
        return Err(OtError::invalid(format!(
            "matrix must be square, got {:?}",
            s.shape()
        )));
    }
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(OtError::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Sample mean and unbiased (`1/(M−1)`) covariance.
pub fn estimate_moments(x: &PointCloud) -> Result<GaussianParams> {
    let m = x.len();
    if m < 2 {
        return Err(OtError::invalid("covariance needs at least two points"));
    }
    let data = x.matrix();
    let mean = DVector::from_iterator(x.dim(), data.column_iter().map(|c| c.sum() / m as f64));
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let covariance = centered.transpose() * &centered / (m - 1) as f64;
    if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
        return Err(OtError::NumericInstability(
            "sample moments overflowed".into(),
        ));
    }
    Ok(GaussianParams { mean, covariance })
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition;
/// negative eigenvalues from round-off are clamped to zero.
pub fn sqrtm_psd(s: &Matrix) -> Result<Matrix> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NumericInstability(
            "matrix square root of a non-finite matrix".into(),
        ));
    }
    check_symmetric(s)?;
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Matrix::from_diagonal(&root) * v.transpose())
}

/// `W₂` between two Gaussians:
/// `sqrt(‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2 (Σ₂^{1/2} Σ₁ Σ₂^{1/2})^{1/2}))`.
pub fn w2_gaussian(g1: &GaussianParams, g2: &GaussianParams) -> Result<f64> {
    Ok(w2_gaussian_squared(g1, g2)?.sqrt())
}

/// `W₂²`; the trace term is clamped at zero.
pub fn w2_gaussian_squared(g1: &GaussianParams, g2: &GaussianParams) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    if !mean_term.is_finite() {
        return Err(OtError::NumericInstability(
            "mean difference overflowed".into(),
        ));
    }
    let root2 = sqrtm_psd(&g2.covariance)?;
    let inner = &root2 * &g1.covariance * &root2;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = sqrtm_psd(&inner)?;
    let trace = (g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross.trace()).max(0.0);
    Ok(mean_term + trace)
}
