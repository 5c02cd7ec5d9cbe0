//! Numerical kernel: complex scalar conventions, dense complex linear algebra,
//! composite Gauss-Legendre quadrature and exponential-decay regression.

mod eigen;
mod fit;
mod lu;
mod matrix;
mod quadrature;

pub use eigen::{hermitian_eigen, hermitian_eigenvalues, operator_norm, HermitianEigen};
pub use fit::{fit_exponential_decay, DecayFit, UNDERFLOW_FLOOR};
pub use lu::{lu_factor, lu_solve, LuFactorization, SINGULAR_PIVOT_RATIO};
pub use matrix::ComplexMatrix;
pub use quadrature::{
    composite_rule, gauss_legendre, integrate, Domain, Integral, QuadratureSpec, TailBound,
};

use num_complex::Complex64;

/// Square root on the branch with `Im w >= 0`.
///
/// For `z` on the positive real axis this is the positive root; for `z` on the
/// negative real axis it is `i·sqrt(|z|)`.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    let w = z.sqrt();
    if w.im < 0.0 || (w.im == 0.0 && w.re < 0.0) {
        -w
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_branch_examples() {
        let w = principal_sqrt(Complex64::new(-1.0, 0.0));
        assert!((w - Complex64::i()).norm() < 1e-15);
        let w = principal_sqrt(Complex64::i());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w - Complex64::new(h, h)).norm() < 1e-15);
        let w = principal_sqrt(Complex64::new(4.0, 0.0));
        assert_eq!(w, Complex64::new(2.0, 0.0));
    }

    #[test]
    fn sqrt_negative_zero_imaginary_part() {
        // -1 - 0i must still map to +i, not -i.
        let w = principal_sqrt(Complex64::new(-1.0, -0.0));
        assert!((w - Complex64::i()).norm() < 1e-15);
    }

    #[test]
    fn sqrt_lower_half_plane_is_conjugate_of_upper() {
        let z = Complex64::new(3.0, -2.0);
        let w = principal_sqrt(z);
        assert!(w.im > 0.0);
        assert!((w * w - z).norm() < 1e-14);
        // e^{i w r} still decays, and the conjugate of z gives -conj(w)
        let wc = principal_sqrt(z.conj());
        assert!((wc + w.conj()).norm() < 1e-14);
    }
}
