use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigen-decomposition `A = V diag(values) V*` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let deviation = a.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

fn is_real(a: &ComplexMatrix) -> bool {
    a.as_slice().iter().all(|z| z.im == 0.0)
}

// Symmetrize before handing to the solver so tiny asymmetries cannot leak in.
fn real_symmetric(a: &ComplexMatrix) -> DMatrix<f64> {
    let n = a.rows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)].re + a[(j, i)].re))
}

fn complex_hermitian(a: &ComplexMatrix) -> DMatrix<Complex64> {
    let n = a.rows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(a)?;
    if a.rows() == 0 {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = if is_real(a) {
        SymmetricEigen::new(real_symmetric(a)).eigenvalues.iter().copied().collect()
    } else {
        SymmetricEigen::new(complex_hermitian(a)).eigenvalues.iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, ascending.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen> {
    check_hermitian(a)?;
    let n = a.rows();
    let (values, vectors): (Vec<f64>, ComplexMatrix) = if is_real(a) {
        let eig = SymmetricEigen::new(real_symmetric(a));
        let v = ComplexMatrix::from_real(n, n, |i, j| eig.eigenvectors[(i, j)]);
        (eig.eigenvalues.iter().copied().collect(), v)
    } else {
        let eig = SymmetricEigen::new(complex_hermitian(a));
        let v = ComplexMatrix::from_nalgebra(&eig.eigenvectors);
        (eig.eigenvalues.iter().copied().collect(), v)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    Ok(HermitianEigen {
        values: order.iter().map(|&k| values[k]).collect(),
        vectors: ComplexMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]),
    })
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &ComplexMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    a.to_nalgebra().singular_values().iter().copied().fold(0.0, f64::max)
}
