//! Small dense linear-algebra helpers shared by the statistical modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// (m + m^T) / 2, removing floating-point asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Largest absolute deviation from symmetry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(m: &DMatrix<f64>, tol: f64, context: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(context, "matrix is not square"));
    }
    let dev = asymmetry(m);
    if dev > tol {
        return Err(Error::invalid(
            context,
            format!("matrix asymmetry {dev:.3e} exceeds {tol:.1e}"),
        ));
    }
    Ok(())
}

/// Cholesky factorization of a positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        context: context.to_string(),
    })
}

/// log det of a positive-definite matrix via its Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Factor F with F F^T = m for a symmetric PSD matrix.
///
/// Diagonal matrices factor exactly as sqrt of the diagonal (keeps
/// fixtures reproducible across platforms); otherwise Cholesky is used,
/// falling back to an eigenvalue square root for singular PSD inputs.
pub fn psd_factor(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if is_diagonal(m) {
        let mut f = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = m[(i, i)];
            if d < 0.0 {
                return Err(Error::NotPositiveDefinite {
                    context: context.to_string(),
                });
            }
            f[(i, i)] = d.sqrt();
        }
        return Ok(f);
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol.unpack());
    }
    // Singular PSD case: eigen square root, tiny negatives tolerated.
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-10 * scale.max(1.0);
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol {
            return Err(Error::NotPositiveDefinite {
                context: context.to_string(),
            });
        }
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Projection of a symmetric matrix onto the PSD cone: negative
/// eigenvalues clipped to zero.
pub fn psd_clip(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lambda.max(0.0));
    }
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Mean of a collection of equal-length vectors viewed as rows.
pub fn mean_vector(rows: impl Iterator<Item = DVector<f64>>, dim: usize) -> Option<DVector<f64>> {
    let mut sum = DVector::zeros(dim);
    let mut n = 0usize;
    for r in rows {
        sum += r;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}
