//! The Γ-matrix on the active sites and the interacting Green's function
//! `G_ω = G₀ + g_x·Γ⁻¹·g_y` built from it.

mod cell;
mod energy;

pub use cell::{
    cell_averaged_green, cell_averaged_green_batch, combes_thomas_fit, free_cell_average_envelope, CellRule, CtFitReport,
    CtFitSpec, CtPoint,
};
pub use energy::EnergyPoint;

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::DisorderConfig;
use crate::error::{Error, Result};
use crate::lattice::{dist_to_lattice, distance, site_point, Point3, Site};
use crate::numerics::{
    hermitian_eigenvalues, lu_factor, lu_solve, operator_norm, ComplexMatrix, LuFactorization,
};

/// Minimum distance from Z³ accepted for kernel evaluation points.
pub const NEAR_LATTICE_CUTOFF: f64 = 1e-6;
/// Minimum separation accepted for `x ≠ y`.
pub const COINCIDENCE_CUTOFF: f64 = 1e-12;

/// How the first factor `g_x(i)` of the interaction sum is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelConvention {
    /// `g_x(i) = G₀(x, i; z)`; symmetric in x and y.
    #[default]
    Unconjugated,
    /// `g_x(i) = conj G₀(x, i; z)`, as the formula is printed.
    LiteralConjugate,
}

/// `G₀` as a function of the separation `r > 0` and `w = √z`.
#[inline]
pub fn free_green_r(r: f64, sqrt_z: Complex64) -> Complex64 {
    (Complex64::i() * sqrt_z * r).exp() / (4.0 * PI * r)
}

/// Free Green's function `e^{i√z|x-y|} / (4π|x-y|)`.
pub fn free_green(x: &Point3, y: &Point3, z: &EnergyPoint) -> Result<Complex64> {
    let r = distance(x, y);
    if !(r > COINCIDENCE_CUTOFF) {
        return Err(Error::CoincidentPoints { separation: r });
    }
    Ok(free_green_r(r, z.sqrt_z()))
}

/// `1 / (max(E², (3π² - E)²) + κ²)`: lower bound for `λ_min(-Im Γ) / κ`.
///
/// `-Im Γ = κ·Gram(G₀(·, j; z))`; in Fourier variables its quadratic form is
/// `κ ∫_{[-π,π]³} |φ̂(p)|² Σ_n 1/((|p + 2πn|² - E)² + κ²) dp` with
/// `∫|φ̂|² = ‖φ‖²`, and the `n = 0` term is bounded below by its infimum over
/// `|p|² ∈ [0, 3π²]`.
pub fn c_num(e: f64, kappa: f64) -> f64 {
    let pi2 = PI * PI;
    1.0 / ((e * e).max((3.0 * pi2 - e).powi(2)) + kappa * kappa)
}

/// The same infimum carrying an extra `(2π)³` from a transform normalized by
/// `(2π)^{-3}` but treated as unitary. Reported only; it is not a valid bound.
pub fn c_num_unnormalized(e: f64, kappa: f64) -> f64 {
    (2.0 * PI).powi(3) * c_num(e, kappa)
}

/// `(2π)³ / (E - π²)²` for `E > π²`, a looser constant. Reported only.
pub fn c_loose(e: f64) -> f64 {
    (2.0 * PI).powi(3) / (e - PI * PI).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityCertificate {
    #[serde(rename = "E")]
    pub e: f64,
    pub kappa: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub lambda_min: f64,
    pub c_num: f64,
    pub pass: bool,
}

/// Γ(z, ω) restricted to the active set, with its LU factorization.
pub struct GammaSystem {
    config: DisorderConfig,
    energy: EnergyPoint,
    sites: Vec<Site>,
    points: Vec<Point3>,
    matrix: ComplexMatrix,
    lu: Option<LuFactorization>,
    convention: KernelConvention,
    lambda_min: OnceLock<f64>,
    inverse_norm: OnceLock<f64>,
}

/// Assembles Γ on the active set of `config` and factorizes it.
pub fn assemble_gamma(config: &DisorderConfig, z: EnergyPoint) -> Result<GammaSystem> {
    GammaSystem::assemble(config, z, KernelConvention::default())
}

/// Γ matrix on the given sites with the given couplings.
pub fn gamma_matrix(sites: &[Site], omega: &[f64], z: &EnergyPoint) -> ComplexMatrix {
    let n = sites.len();
    let w = z.sqrt_z();
    let ie = Complex64::i() * z.e_z();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Complex64::new(1.0 / omega[i], 0.0) - ie
                    } else {
                        let r = distance(&site_point(&sites[i]), &site_point(&sites[j]));
                        -free_green_r(r, w)
                    }
                })
                .collect()
        })
        .collect();
    ComplexMatrix::from_row_major(n, n, rows.into_iter().flatten().collect())
        .expect("rows have matching lengths")
}

impl GammaSystem {
    pub fn assemble(config: &DisorderConfig, z: EnergyPoint, convention: KernelConvention) -> Result<Self> {
        let idx = config.active_indices();
        let window = config.window();
        let sites: Vec<Site> = idx.iter().map(|&i| window.site(i)).collect();
        let omega: Vec<f64> = idx.iter().map(|&i| config.omega()[i]).collect();
        let matrix = gamma_matrix(&sites, &omega, &z);
        if !matrix.is_finite() {
            return Err(Error::InvalidParameter("Γ has non-finite entries".into()));
        }
        let lu = if sites.is_empty() { None } else { Some(lu_factor(&matrix)?) };
        Ok(Self {
            config: config.clone(),
            energy: z,
            points: sites.iter().map(site_point).collect(),
            sites,
            matrix,
            lu,
            convention,
            lambda_min: OnceLock::new(),
            inverse_norm: OnceLock::new(),
        })
    }

    /// Same configuration and energy with a different kernel convention.
    pub fn with_convention(&self, convention: KernelConvention) -> Self {
        Self {
            config: self.config.clone(),
            energy: self.energy,
            sites: self.sites.clone(),
            points: self.points.clone(),
            matrix: self.matrix.clone(),
            lu: self.lu.clone(),
            convention,
            lambda_min: self.lambda_min.clone(),
            inverse_norm: self.inverse_norm.clone(),
        }
    }

    pub fn config(&self) -> &DisorderConfig {
        &self.config
    }

    pub fn energy(&self) -> &EnergyPoint {
        &self.energy
    }

    pub fn convention(&self) -> KernelConvention {
        self.convention
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    /// Active sites in matrix order.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn factorization(&self) -> Option<&LuFactorization> {
        self.lu.as_ref()
    }

    /// Dense Γ⁻¹.
    pub fn inverse(&self) -> ComplexMatrix {
        match &self.lu {
            Some(lu) => lu.inverse(),
            None => ComplexMatrix::zeros(0, 0),
        }
    }

    /// The real symmetric matrix `-Im Γ`.
    pub fn neg_imag(&self) -> ComplexMatrix {
        self.matrix.map(|z| Complex64::new(-z.im, 0.0))
    }

    /// Smallest eigenvalue of `-Im Γ`.
    pub fn lambda_min(&self) -> f64 {
        *self.lambda_min.get_or_init(|| {
            if self.sites.is_empty() {
                return f64::INFINITY;
            }
            hermitian_eigenvalues(&self.neg_imag()).expect("-Im Γ is real symmetric")[0]
        })
    }

    /// `‖Γ⁻¹‖`, computed as the reciprocal of the smallest singular value of Γ.
    pub fn inverse_norm(&self) -> f64 {
        *self.inverse_norm.get_or_init(|| {
            if self.sites.is_empty() {
                return 0.0;
            }
            let sv = self.matrix.to_nalgebra().singular_values();
            1.0 / sv.iter().copied().fold(f64::INFINITY, f64::min)
        })
    }

    /// `‖Γ⁻¹‖` from the singular values of the explicitly formed inverse.
    pub fn inverse_norm_dense(&self) -> f64 {
        operator_norm(&self.inverse())
    }

    pub fn dissipativity_certificate(&self) -> DissipativityCertificate {
        let lambda_min = self.lambda_min();
        let c = c_num(self.energy.e(), self.energy.kappa());
        DissipativityCertificate {
            e: self.energy.e(),
            kappa: self.energy.kappa(),
            l: self.config.window().half_width(),
            seed: self.config.seed(),
            lambda_min,
            c_num: c,
            pass: lambda_min >= c * self.energy.kappa(),
        }
    }

    fn check_point(&self, x: &Point3) -> Result<()> {
        let d = dist_to_lattice(x);
        if !(d > NEAR_LATTICE_CUTOFF) {
            return Err(Error::NearLattice { distance: d });
        }
        Ok(())
    }

    /// `(G₀(i, x; z))_{i∈Λ}`.
    pub fn site_vector(&self, x: &Point3) -> Vec<Complex64> {
        let w = self.energy.sqrt_z();
        self.points.iter().map(|p| free_green_r(distance(p, x), w)).collect()
    }

    fn left_vector(&self, x: &Point3) -> Vec<Complex64> {
        let g = self.site_vector(x);
        match self.convention {
            KernelConvention::Unconjugated => g,
            KernelConvention::LiteralConjugate => g.into_iter().map(|v| v.conj()).collect(),
        }
    }

    /// `c = Γ⁻¹ g_y`; these are the singular coefficients of `G_ω(·, y)` at the active sites.
    pub fn coefficients(&self, y: &Point3) -> Vec<Complex64> {
        match &self.lu {
            Some(lu) => lu.solve_vec(&self.site_vector(y)),
            None => Vec::new(),
        }
    }

    /// Interaction part `Σ g_x(i) [Γ⁻¹]_{ij} G₀(j, y)`.
    pub fn interaction_term(&self, x: &Point3, y: &Point3) -> Result<Complex64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.interaction_unchecked(x, y))
    }

    fn interaction_unchecked(&self, x: &Point3, y: &Point3) -> Complex64 {
        if self.sites.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let c = self.coefficients(y);
        self.left_vector(x).iter().zip(&c).map(|(a, b)| a * b).sum()
    }

    /// `G_ω(x, y; z)`.
    pub fn green(&self, x: &Point3, y: &Point3) -> Result<Complex64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let g0 = free_green(x, y, &self.energy)?;
        Ok(g0 + self.interaction_unchecked(x, y))
    }

    /// `G_ω(x, y)` for all pairs, sharing one block solve. Entry `(a, b)` is
    /// `G_ω(xs[a], ys[b])`. Points are not checked against the lattice.
    pub fn green_block(&self, xs: &[Point3], ys: &[Point3]) -> Result<ComplexMatrix> {
        let inter = self.interaction_block(xs, ys)?;
        let w = self.energy.sqrt_z();
        let mut out = inter;
        for (a, x) in xs.iter().enumerate() {
            for (b, y) in ys.iter().enumerate() {
                let r = distance(x, y);
                if !(r > COINCIDENCE_CUTOFF) {
                    return Err(Error::CoincidentPoints { separation: r });
                }
                out[(a, b)] += free_green_r(r, w);
            }
        }
        Ok(out)
    }

    /// Interaction part for all pairs of `xs × ys`.
    pub fn interaction_block(&self, xs: &[Point3], ys: &[Point3]) -> Result<ComplexMatrix> {
        let n = self.dim();
        if n == 0 {
            return Ok(ComplexMatrix::zeros(xs.len(), ys.len()));
        }
        let lu = self.lu.as_ref().expect("nonempty system is factorized");
        let w = self.energy.sqrt_z();
        let gy = site_block(&self.points, ys, w, false);
        let v = lu.solve(&gy)?;
        let gx = site_block(&self.points, xs, w, self.convention == KernelConvention::LiteralConjugate);
        gx.transpose().matmul(&v)
    }

    /// Largest `|Γ_ij - Γ_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.matrix.sub(&self.matrix.transpose()).map(|m| m.max_abs()).unwrap_or(0.0)
    }
}

// n × m matrix of G₀(site_i, x_k).
fn site_block(points: &[Point3], xs: &[Point3], w: Complex64, conj: bool) -> ComplexMatrix {
    let cols: Vec<Vec<Complex64>> = xs
        .par_iter()
        .map(|x| {
            points
                .iter()
                .map(|p| {
                    let g = free_green_r(distance(p, x), w);
                    if conj {
                        g.conj()
                    } else {
                        g
                    }
                })
                .collect()
        })
        .collect();
    ComplexMatrix::from_fn(points.len(), xs.len(), |i, k| cols[k][i])
}

/// Singular and regular coefficients of `G_ω(·, y)` at a site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFit {
    /// Coefficient of `1/(4π|x - j|)`.
    pub q: Complex64,
    /// Constant term.
    pub r: Complex64,
}

/// Fits `G_ω(x, y) ≈ q/(4πρ) + r + s₁ρ + s₂ρ²` from direction-averaged values at
/// radii `h, 2h, 3h, 4h` around site `j`.
pub fn boundary_condition_fit(system: &GammaSystem, j: &Site, y: &Point3, h: f64) -> Result<BoundaryFit> {
    if !(h > 0.0 && h < 0.1) {
        return Err(Error::InvalidParameter(format!("fit radius {h} must lie in (0, 0.1)")));
    }
    let center = site_point(j);
    if distance(&center, y) <= 4.0 * h + 1e-9 {
        return Err(Error::InvalidParameter("y must be away from the site".into()));
    }
    let dirs: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let radii: Vec<f64> = (1..=4).map(|k| k as f64 * h).collect();
    let mut xs = Vec::with_capacity(24);
    for rho in &radii {
        for d in &dirs {
            xs.push([center[0] + rho * d[0], center[1] + rho * d[1], center[2] + rho * d[2]]);
        }
    }
    let block = system.green_block(&xs, std::slice::from_ref(y))?;
    let avg: Vec<Complex64> = (0..4)
        .map(|k| (0..6).map(|d| block[(6 * k + d, 0)]).sum::<Complex64>() / 6.0)
        .collect();
    let a = ComplexMatrix::from_fn(4, 4, |i, c| {
        let rho = radii[i];
        Complex64::new(
            match c {
                0 => 1.0 / (4.0 * PI * rho),
                1 => 1.0,
                2 => rho,
                _ => rho * rho,
            },
            0.0,
        )
    });
    let sol = lu_solve(&a, &ComplexMatrix::column_vector(&avg))
        .map_err(|e| Error::FitFailure(format!("interpolation system: {e}")))?;
    let (q, r) = (sol[(0, 0)], sol[(1, 0)]);
    if !(q.re.is_finite() && q.im.is_finite() && r.re.is_finite() && r.im.is_finite()) {
        return Err(Error::FitFailure("non-finite coefficients".into()));
    }
    Ok(BoundaryFit { q, r })
}

/// Relative mismatch `|r - q/ω| / (|r| + |q/ω|)` of the δ-coupling condition at
/// an active site.
pub fn boundary_condition_residual(system: &GammaSystem, j: &Site, y: &Point3, h: f64) -> Result<f64> {
    let window = system.config().window();
    let omega = window
        .index_of(j)
        .map(|i| system.config().omega()[i])
        .unwrap_or(0.0);
    if omega == 0.0 {
        return Err(Error::InvalidParameter(format!("site {j:?} is not active")));
    }
    let fit = boundary_condition_fit(system, j, y, h)?;
    let target = fit.q / omega;
    if fit.q.norm() == 0.0 {
        return Err(Error::FitFailure("singular coefficient vanished at an active site".into()));
    }
    Ok((fit.r - target).norm() / (fit.r.norm() + target.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::constant_config;
    use crate::lattice::LatticeWindow;

    #[test]
    fn c_num_example() {
        let e = 2.0 * PI * PI;
        let c = c_num_unnormalized(e, 0.5);
        assert!((c - 0.6362).abs() < 5e-4, "{c}");
        assert!((c_num(e, 0.5) * (2.0 * PI).powi(3) - c).abs() < 1e-14);
        assert!((c_loose(e) - 2.547).abs() < 1e-3);
    }

    #[test]
    fn single_site_gamma() {
        let w = LatticeWindow::cube(1).unwrap();
        let mut omega = vec![0.0; 27];
        omega[13] = -1.0;
        let cfg = DisorderConfig::from_omega(w, omega).unwrap();
        let z = EnergyPoint::new(3.0, 0.7).unwrap();
        let sys = assemble_gamma(&cfg, z).unwrap();
        assert_eq!(sys.dim(), 1);
        let expect = Complex64::new(-1.0, 0.0) - Complex64::i() * z.sqrt_z() / (4.0 * PI);
        assert!((sys.matrix()[(0, 0)] - expect).norm() < 1e-15);
        assert!((sys.lambda_min() - z.sqrt_z().re / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gamma_is_complex_symmetric() {
        let cfg = constant_config(LatticeWindow::cube(1).unwrap(), -1.5).unwrap();
        let sys = assemble_gamma(&cfg, EnergyPoint::new(20.0, 0.3).unwrap()).unwrap();
        assert_eq!(sys.symmetry_defect(), 0.0);
    }
}
