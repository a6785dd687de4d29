use nalgebra::{DMatrix, SymmetricEigen};

use super::{FeatureStats, MetricsError};

/// Eigenvalues below `-CLAMP_TOL · λ_max` mean the matrix is not PSD.
pub const CLAMP_TOL: f64 = 1e-8;

/// Eigen-decomposition of a symmetric PSD matrix with tiny negative
/// eigenvalues clamped to zero.
fn psd_eigen(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = CLAMP_TOL * max;
    for v in eig.eigenvalues.iter_mut() {
        if *v < -tol {
            return Err(MetricsError::NotPsd {
                what: what.to_string(),
                eigenvalue: *v,
                tolerance: tol,
            });
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// Principal square root of a symmetric PSD matrix.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let eig = psd_eigen(m, "matrix")?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `Tr((Σ_a Σ_b)^½)`, computed as `Tr((√Σ_a Σ_b √Σ_a)^½)`. The inner matrix is
/// symmetric PSD and similar to `Σ_a Σ_b`, so the trace is real by construction.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let s = sqrtm_psd(a)?;
    let inner = &s * b * &s;
    let eig = psd_eigen(&inner, "covariance product")?;
    Ok(eig.eigenvalues.iter().map(|v| v.sqrt()).sum())
}

/// Fréchet distance between two Gaussian fits.
pub fn fid(a: &FeatureStats, b: &FeatureStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() || a.cov.nrows() != a.dim() || b.cov.nrows() != b.dim() {
        return Err(MetricsError::DimMismatch(a.dim(), b.dim()));
    }
    psd_eigen(&a.cov, "first covariance")?;
    psd_eigen(&b.cov, "second covariance")?;
    let diff = &a.mean - &b.mean;
    let cross = trace_sqrt_product(&a.cov, &b.cov)?;
    Ok(diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross)
}
