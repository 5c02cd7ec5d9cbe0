//! Exponential decay of inverses of exponentially decaying matrices, the
//! conjugation step behind it, the double-sum bound, and cell bounds for the
//! free Green's function.

mod sums;

pub use sums::{radial_sum, s0, s1};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma_green::{free_green_r, EnergyPoint};
use crate::lattice::{dist_to_lattice, distance, site_point, unit_cell_domain, Point3, Site, SiteNorm};
use crate::numerics::{
    fit_exponential_decay, integrate, lu_factor, operator_norm, ComplexMatrix, DecayFit, QuadratureSpec,
};

/// Relative slack allowed when comparing an entry against its bound.
pub const BOUND_SLACK: f64 = 1e-12;

fn within(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE
}

fn check_indexing(a: &ComplexMatrix, sites: &[Site]) -> Result<()> {
    if !a.is_square() || a.rows() != sites.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix indexed by {} sites",
            a.rows(),
            a.cols(),
            sites.len()
        )));
    }
    Ok(())
}

/// Parameters of a decay certificate for `A⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub c0: f64,
    pub gamma: f64,
    pub rho: f64,
    pub mu: f64,
}

impl DecayCertificate {
    /// Certificate at the largest admissible rate.
    pub fn new(c0: f64, gamma: f64, rho: f64, d: usize, norm: SiteNorm) -> Result<Self> {
        let mu = mu_star(rho, gamma, c0, d, norm)?;
        Ok(Self { c0, gamma, rho, mu })
    }

    pub fn bound(&self, dist: f64) -> f64 {
        2.0 * self.rho * (-self.mu * dist).exp()
    }
}

/// Seeded test matrix with `|A_nm| ≤ C0 e^{-γ‖n - m‖}` off the diagonal
/// (random magnitudes and phases) and diagonal entries of modulus in [1, 2].
pub fn random_decaying_matrix(sites: &[Site], c0: f64, gamma: f64, norm: SiteNorm, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sites.len();
    let mut a = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (r, theta) = (rng.random_range(0.0..1.0), rng.random_range(0.0..2.0 * PI));
            a[(i, j)] = if i == j {
                Complex64::from_polar(1.0 + r, theta)
            } else {
                Complex64::from_polar(r * c0 * (-gamma * norm.distance(&sites[i], &sites[j])).exp(), theta)
            };
        }
    }
    a
}

/// True iff `|A_nm| ≤ C0 e^{-γ‖n - m‖}` for every off-diagonal entry.
pub fn verify_offdiag_decay(a: &ComplexMatrix, sites: &[Site], c0: f64, gamma: f64, norm: SiteNorm) -> Result<bool> {
    check_indexing(a, sites)?;
    let n = sites.len();
    Ok((0..n).into_par_iter().all(|i| {
        (0..n).all(|j| i == j || within(a[(i, j)].norm(), c0 * (-gamma * norm.distance(&sites[i], &sites[j])).exp()))
    }))
}

/// `μ₀ = min(γ/2, 1/(2ρ C0 S₁(γ/2)))`, the largest rate for which the
/// conjugated perturbation has norm at most `1/(2ρ)`.
pub fn mu_star(rho: f64, gamma: f64, c0: f64, d: usize, norm: SiteNorm) -> Result<f64> {
    if !(rho > 0.0 && gamma > 0.0 && c0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mu_star needs positive arguments, got rho = {rho}, gamma = {gamma}, C0 = {c0}"
        )));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
    }
    let s = s1(d, 0.5 * gamma, norm);
    Ok((0.5 * gamma).min(1.0 / (2.0 * rho * c0 * s)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub distance: f64,
    /// Largest `|A⁻¹_nm|` over pairs at this distance.
    pub magnitude: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseDecayReport {
    pub rho: f64,
    pub mu: f64,
    pub inverse_norm: f64,
    pub worst_ratio: f64,
    pub pass: bool,
    /// Fit of the per-distance maxima of `|A⁻¹_nm|`, when at least three
    /// distances carry data above the underflow floor.
    pub fit: Option<DecayFit>,
    pub rows: Vec<DecayRow>,
}

/// Checks `|A⁻¹_nm| ≤ 2ρ e^{-μ‖n - m‖}` for every index pair.
pub fn inverse_decay_check(a: &ComplexMatrix, sites: &[Site], rho: f64, mu: f64, norm: SiteNorm) -> Result<InverseDecayReport> {
    check_indexing(a, sites)?;
    let inv = lu_factor(a)?.inverse();
    inverse_decay_report(&inv, sites, rho, mu, norm)
}

/// As [`inverse_decay_check`] for an already inverted matrix.
pub fn inverse_decay_report(inv: &ComplexMatrix, sites: &[Site], rho: f64, mu: f64, norm: SiteNorm) -> Result<InverseDecayReport> {
    check_indexing(inv, sites)?;
    let inverse_norm = operator_norm(inv);
    if inverse_norm > rho * (1.0 + 1e-10) {
        return Err(Error::InvalidParameter(format!(
            "‖A⁻¹‖ = {inverse_norm:.6e} exceeds rho = {rho:.6e}"
        )));
    }
    let n = sites.len();
    // per-row (distance key, magnitude) maxima, merged in row order
    let per_row: Vec<Vec<(i64, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = norm.distance(&sites[i], &sites[j]);
                    ((d * 1e6).round() as i64, d, inv[(i, j)].norm())
                })
                .collect()
        })
        .collect();
    let mut shells: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
    for row in &per_row {
        for &(key, d, m) in row {
            let e = shells.entry(key).or_insert((d, 0.0));
            e.1 = e.1.max(m);
        }
    }
    let mut worst = 0.0f64;
    let mut rows = Vec::with_capacity(shells.len());
    for (_, (d, m)) in shells {
        let bound = 2.0 * rho * (-mu * d).exp();
        let ratio = m / bound;
        worst = worst.max(ratio);
        rows.push(DecayRow {
            distance: d,
            magnitude: m,
            bound,
            ratio,
        });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().filter(|r| r.distance > 0.0).map(|r| (r.distance, r.magnitude)).collect();
    Ok(InverseDecayReport {
        rho,
        mu,
        inverse_norm,
        worst_ratio: worst,
        pass: worst <= 1.0 + BOUND_SLACK,
        fit: fit_exponential_decay(&pairs).ok(),
        rows,
    })
}

/// Holmgren bound `ρ √(a₁ a₂)` for `F_n⁻¹ A F_n - A`, where `F_n` multiplies by
/// `e^{μ‖x - n‖}` and `a₁`, `a₂` are the largest row and column absolute sums.
pub fn conjugation_diagnostic(a: &ComplexMatrix, sites: &[Site], n: usize, mu: f64, rho: f64, norm: SiteNorm) -> Result<f64> {
    check_indexing(a, sites)?;
    if n >= sites.len() {
        return Err(Error::InvalidParameter(format!("site index {n} out of range")));
    }
    let abs: Vec<f64> = a.as_slice().iter().map(|z| z.norm()).collect();
    Ok(holmgren_conjugated(&abs, sites, n, mu, rho, norm))
}

// `e^{w_m - w_k} - 1 = (E_m - E_k)/(1 + E_k)` with `E = expm1(w)` keeps full
// relative accuracy for small μ without an exponential per entry.
fn holmgren_conjugated(abs: &[f64], sites: &[Site], n: usize, mu: f64, rho: f64, norm: SiteNorm) -> f64 {
    let size = sites.len();
    let em1: Vec<f64> = sites.iter().map(|s| (mu * norm.distance(s, &sites[n])).exp_m1()).collect();
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|k| {
            let (ek, inv) = (em1[k], 1.0 / (1.0 + em1[k]));
            let row = &abs[k * size..(k + 1) * size];
            row.iter().zip(&em1).map(|(v, em)| v * ((em - ek) * inv).abs()).collect()
        })
        .collect();
    let row_max = rows.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let mut col = vec![0.0; size];
    for r in &rows {
        for (c, v) in col.iter_mut().zip(r) {
            *c += v;
        }
    }
    let col_max = col.into_iter().fold(0.0, f64::max);
    rho * (row_max * col_max).sqrt()
}

/// Largest conjugation diagnostic over all centers `n`.
pub fn max_conjugation_diagnostic(a: &ComplexMatrix, sites: &[Site], mu: f64, rho: f64, norm: SiteNorm) -> Result<f64> {
    check_indexing(a, sites)?;
    let abs: Vec<f64> = a.as_slice().iter().map(|z| z.norm()).collect();
    Ok((0..sites.len())
        .map(|n| holmgren_conjugated(&abs, sites, n, mu, rho, norm))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub c: f64,
    pub gamma: f64,
    /// `max |c_mn| e^{(γ/2)‖n - m‖}` over all pairs.
    pub max_ratio: f64,
    /// `2 C² S₀(γ/2)`.
    pub c_tilde_derived: f64,
    /// `C² γ⁻³`, reported only.
    pub c_tilde_cubic: f64,
    pub pass: bool,
    pub cubic_constant_holds: bool,
}

/// Forms `c = a·b` and checks `|c_mn| ≤ C̃ e^{-(γ/2)‖n - m‖}`.
pub fn convolution_decay(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: f64,
    gamma: f64,
    sites: &[Site],
    dim: usize,
    norm: SiteNorm,
) -> Result<ConvolutionReport> {
    check_indexing(a, sites)?;
    check_indexing(b, sites)?;
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter("C and gamma must be positive".into()));
    }
    for (name, x) in [("a", a), ("b", b)] {
        let n = sites.len();
        for i in 0..n {
            for j in 0..n {
                let bound = c * (-gamma * norm.distance(&sites[i], &sites[j])).exp();
                if !within(x[(i, j)].norm(), bound) {
                    return Err(Error::InvalidParameter(format!(
                        "array {name} violates |x_mn| <= C e^(-gamma |n-m|) at ({i}, {j})"
                    )));
                }
            }
        }
    }
    let prod = a.matmul(b)?;
    let n = sites.len();
    let max_ratio = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| prod[(i, j)].norm() * (0.5 * gamma * norm.distance(&sites[i], &sites[j])).exp())
                .fold(0.0, f64::max)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    let c_tilde_derived = 2.0 * c * c * s0(dim, 0.5 * gamma, norm);
    let c_tilde_cubic = c * c / gamma.powi(3);
    Ok(ConvolutionReport {
        c,
        gamma,
        max_ratio,
        c_tilde_derived,
        c_tilde_cubic,
        pass: within(max_ratio, c_tilde_derived),
        cubic_constant_holds: within(max_ratio, c_tilde_cubic),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBoundReport {
    pub tau: f64,
    pub samples: usize,
    /// Largest `|G₀(x, m)| / (e^{τ/2} e^{-τ‖n - m‖} / d(x))` over the samples.
    pub worst_pointwise_ratio: f64,
    /// Largest ratio against the second form `e^{τ} e^{-τ‖x - m‖} / d(x)`.
    pub worst_pointwise_ratio_second: f64,
    pub averaged_value: f64,
    pub averaged_error: f64,
    pub averaged_bound: f64,
    pub pointwise: bool,
    pub averaged: bool,
}

// Halton sequence in bases 2, 3, 5.
fn halton(i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut k = i;
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

/// Samples `x ∈ n + C₀` and checks the pointwise and cell-averaged bounds on
/// `|G₀(x, m; z)|`.
pub fn free_green_cell_bounds(n: &Site, m: &Site, z: &EnergyPoint, samples: usize, spec: &QuadratureSpec) -> Result<CellBoundReport> {
    if n == m {
        return Err(Error::InvalidParameter("cell bounds need n != m".into()));
    }
    let tau = z.tau();
    let w = z.sqrt_z();
    let nm = SiteNorm::Euclidean.distance(n, m);
    let mp = site_point(m);
    let c = site_point(n);
    let mut worst = 0.0f64;
    let mut worst2 = 0.0f64;
    for i in 1..=samples {
        let x: Point3 = [
            c[0] - 0.5 + halton(i, 2),
            c[1] - 0.5 + halton(i, 3),
            c[2] - 0.5 + halton(i, 5),
        ];
        let d = dist_to_lattice(&x);
        if d < 1e-9 {
            continue;
        }
        let r = distance(&x, &mp);
        let g = free_green_r(r, w).norm();
        worst = worst.max(g / ((0.5 * tau).exp() * (-tau * nm).exp() / d));
        worst2 = worst2.max(g / (tau.exp() * (-tau * r).exp() / d));
    }
    let cell = unit_cell_domain(n);
    let avg = integrate(
        |x| {
            let p = [x[0], x[1], x[2]];
            Complex64::new(free_green_r(distance(&p, &mp), w).norm(), 0.0)
        },
        &cell.domain(),
        spec,
    )?;
    let bound = 2.0 * PI * (0.5 * tau).exp() * (-tau * nm).exp();
    Ok(CellBoundReport {
        tau,
        samples,
        worst_pointwise_ratio: worst,
        worst_pointwise_ratio_second: worst2,
        averaged_value: avg.value.re,
        averaged_error: avg.error,
        averaged_bound: bound,
        pointwise: worst <= 1.0 && worst2 <= 1.0,
        averaged: avg.value.re + avg.error <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeWindow;

    #[test]
    fn mu_star_examples() {
        let mu = mu_star(1.0, 20.0, 1.0, 1, SiteNorm::Euclidean).unwrap();
        assert_eq!(mu, 10.0);
        let mu = mu_star(1.0, 1.0, 1.0, 1, SiteNorm::Euclidean).unwrap();
        let q = (-0.5f64).exp();
        let s = 2.0 * q / (1.0 - q).powi(2);
        assert!((s - 7.83).abs() < 0.01);
        assert!((mu - 1.0 / (2.0 * s)).abs() < 1e-12);
        assert!((mu - 0.0639).abs() < 1e-4);
        let half = mu_star(2.0, 1.0, 1.0, 1, SiteNorm::Euclidean).unwrap();
        assert!((half - mu / 2.0).abs() < 1e-15);
        assert!(mu_star(0.0, 1.0, 1.0, 1, SiteNorm::Euclidean).is_err());
    }

    #[test]
    fn offdiag_examples() {
        let w = LatticeWindow::new(3, 1).unwrap();
        let sites = w.sites();
        let a = ComplexMatrix::from_real(sites.len(), sites.len(), |i, j| {
            (-SiteNorm::Euclidean.distance(&sites[i], &sites[j])).exp()
        });
        assert!(verify_offdiag_decay(&a, &sites, 1.0, 1.0, SiteNorm::Euclidean).unwrap());
        assert!(!verify_offdiag_decay(&a, &sites, 1.0, 1.5, SiteNorm::Euclidean).unwrap());
    }

    #[test]
    fn conjugation_zero_rate() {
        let w = LatticeWindow::new(3, 1).unwrap();
        let sites = w.sites();
        let a = ComplexMatrix::from_real(7, 7, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        assert_eq!(conjugation_diagnostic(&a, &sites, 3, 0.0, 1.0, SiteNorm::Euclidean).unwrap(), 0.0);
    }
}
