use nalgebra::DMatrix;

use crate::error::{Result, SppcError};

/// Largest negative eigenvalue tolerated (and clamped) before a covariance is rejected.
pub const PSD_JITTER: f64 = 1e-10;

/// Lower-triangular factor `L` with `L Lᵀ = a` for a positive semidefinite `a`.
///
/// Zero pivots are accepted (the column is left zero), which admits perfectly
/// correlated variables. Ordering matters: the factor of a matrix whose first
/// `m` variables are stocks has zeros to the right of the diagonal, so stock rows
/// never load on the Brownian coordinates reserved for later variables.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SppcError::invalid("matrix", "must be square"));
    }
    let scale = a.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(SppcError::NotPositiveSemidefinite { min_eigenvalue: d });
        }
        if d <= tol {
            // degenerate direction: the remaining entries of this column must vanish
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-9 * scale {
                    return Err(SppcError::NotPositiveSemidefinite { min_eigenvalue: d });
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Symmetric square-root style factor `F` with `F Fᵀ = cov` via the eigendecomposition.
///
/// Eigenvalues down to `-PSD_JITTER` are clamped to zero; anything more
/// negative is a modeling error and is reported.
pub fn symmetric_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_JITTER {
        return Err(SppcError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let mut f = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Spectral condition number; infinite for a singular (or empty-rank) matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
