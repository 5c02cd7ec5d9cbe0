//! Time-averaged position moments and their resolvent representation on
//! finite Hermitian proxies, spectral projector estimates, and the numerical
//! delocalization chain for the continuum operator.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenmodes::{interval_radius, overlap_ball, GeneralizedMode, ModeProfile, BALL_CENTER};
use crate::eigenmodes::{chi, chi_prime, chi_second};
use crate::error::{Error, Result};
use crate::gamma_green::{free_green_r, GammaSystem, KernelConvention, NEAR_LATTICE_CUTOFF};
use crate::gamma_green::{CellRule, EnergyPoint};
use crate::disorder::DisorderConfig;
use crate::lattice::{distance, site_point, Point3};
use crate::numerics::{
    composite_rule, fit_exponential_decay, gauss_legendre, hermitian_eigen, hermitian_eigenvalues, lu_factor,
    ComplexMatrix, DecayFit, HermitianEigen,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `φ_q(x) = (1 + ‖x‖²)^{q/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    q: f64,
}

impl WeightSpec {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight exponent must be positive, got {q}")));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn phi(&self, x: &Point3) -> f64 {
        (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).powf(0.5 * self.q)
    }
}

/// Finite Hermitian stand-in for `(H, φ(X), ψ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxySystem {
    h: ComplexMatrix,
    phi: Vec<f64>,
    psi: Vec<Complex64>,
}

pub const MAX_PROXY_DIM: usize = 64;

impl ProxySystem {
    pub fn new(h: ComplexMatrix, phi: Vec<f64>, psi: Vec<Complex64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::NotSquare {
                rows: h.rows(),
                cols: h.cols(),
            });
        }
        let n = h.rows();
        if n == 0 || n > MAX_PROXY_DIM {
            return Err(Error::InvalidParameter(format!("proxy dimension {n} not in 1..={MAX_PROXY_DIM}")));
        }
        if phi.len() != n || psi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "H is {n}x{n}, φ has {} entries, ψ has {}",
                phi.len(),
                psi.len()
            )));
        }
        if !h.is_hermitian(1e-12) {
            return Err(Error::NotHermitian {
                deviation: h.hermitian_deviation(),
            });
        }
        if phi.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return Err(Error::InvalidParameter("weight entries must be finite and ≥ 1".into()));
        }
        if psi.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(Error::InvalidParameter("initial vector must be nonzero".into()));
        }
        Ok(Self { h, phi, psi })
    }

    /// Random proxy: entries of H uniform in the unit square (then
    /// symmetrized), `φ` uniform in [1, 4], `ψ` uniform complex.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uni = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut h = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in 0..i {
                let v = uni(&mut rng);
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        let phi = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
        let psi = (0..n).map(|_| uni(&mut rng)).collect();
        Self::new(h, phi, psi)
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn with_phi(&self, phi: Vec<f64>) -> Result<Self> {
        Self::new(self.h.clone(), phi, self.psi.clone())
    }

    pub fn with_psi(&self, psi: Vec<Complex64>) -> Result<Self> {
        Self::new(self.h.clone(), self.phi.clone(), psi)
    }

    pub fn eigen(&self) -> Result<HermitianEigen> {
        hermitian_eigen(&self.h)
    }

    /// `⟨ψ_t, φ ψ_t⟩` with `ψ_t = e^{−itH}ψ`.
    pub fn moment_at(&self, t: f64) -> Result<f64> {
        let eig = self.eigen()?;
        let c = spectral_coefficients(&eig, &self.psi);
        let n = self.dim();
        let mut psi_t = vec![ZERO; n];
        for (k, (&lam, ck)) in eig.values.iter().zip(&c).enumerate() {
            let a = ck * Complex64::cis(-lam * t);
            for (i, p) in psi_t.iter_mut().enumerate() {
                *p += a * eig.vectors[(i, k)];
            }
        }
        Ok(psi_t.iter().zip(&self.phi).map(|(p, f)| f * p.norm_sqr()).sum())
    }
}

fn spectral_coefficients(eig: &HermitianEigen, psi: &[Complex64]) -> Vec<Complex64> {
    let n = psi.len();
    (0..n)
        .map(|k| (0..n).map(|i| eig.vectors[(i, k)].conj() * psi[i]).sum())
        .collect()
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    Ok(())
}

/// `(1/T)∫₀^∞ e^{−t/T}⟨ψ_t, φψ_t⟩dt`.
///
/// With `H = Σλ_k v_k v_k*` and `c = V*ψ` the integrand is
/// `Σ conj(c_j)c_k Φ_jk e^{i(λ_j−λ_k)t}`, `Φ_jk = v_j*φ v_k`, and the Abel
/// average of `e^{iωt}` is `1/(1 − iωT)`.
pub fn moment_time_avg(proxy: &ProxySystem, t: f64) -> Result<f64> {
    check_time(t)?;
    let eig = proxy.eigen()?;
    let c = spectral_coefficients(&eig, &proxy.psi);
    let n = proxy.dim();
    let mut total = ZERO;
    for j in 0..n {
        for k in 0..n {
            let phi_jk: Complex64 = (0..n)
                .map(|i| eig.vectors[(i, j)].conj() * proxy.phi[i] * eig.vectors[(i, k)])
                .sum();
            let omega = eig.values[j] - eig.values[k];
            total += c[j].conj() * c[k] * phi_jk / Complex64::new(1.0, -omega * t);
        }
    }
    Ok(total.re)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventMoment {
    pub value: f64,
    /// Panel-doubling error estimate.
    pub error: f64,
    pub evaluations: usize,
}

/// `(1/2πT)∫_R ‖φ^{1/2}R_H(E + i/2T)ψ‖² dE` with one shifted solve per node.
pub fn moment_resolvent(proxy: &ProxySystem, t: f64) -> Result<f64> {
    let r = moment_resolvent_detailed(proxy, t)?;
    if r.error > 1e-8 * r.value {
        return Err(Error::NonConvergence {
            estimated_error: r.error,
            tolerance: 1e-8 * r.value,
        });
    }
    Ok(r.value)
}

/// [`moment_resolvent`] with its error estimate.
///
/// The window `[λ_min − 50/T, λ_max + 50/T]` is split at every eigenvalue and
/// at distances `ε·2^m` from it (`ε = 1/2T`), which resolves the Lorentzian
/// peaks. Each half-line beyond the window is mapped to `(0, 1]` by
/// `E = b + w(1−u)/u`, so the `1/E²` tail is integrated rather than estimated.
pub fn moment_resolvent_detailed(proxy: &ProxySystem, t: f64) -> Result<ResolventMoment> {
    check_time(t)?;
    let eps = 0.5 / t;
    let lambdas = hermitian_eigenvalues(&proxy.h)?;
    let (lo, hi) = (lambdas[0] - 50.0 / t, lambdas[lambdas.len() - 1] + 50.0 / t);
    let span = hi - lo;
    let mut breaks = vec![lo, hi];
    for &lam in &lambdas {
        breaks.push(lam);
        let mut d = eps;
        while d < span {
            for p in [lam - d, lam + d] {
                if p > lo && p < hi {
                    breaks.push(p);
                }
            }
            d *= 2.0;
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * eps);

    let n = proxy.dim();
    let integrand = |e: f64| -> Result<f64> {
        let z = Complex64::new(e, eps);
        let shifted = ComplexMatrix::from_fn(n, n, |i, j| if i == j { proxy.h[(i, j)] - z } else { proxy.h[(i, j)] });
        let x = lu_factor(&shifted)?.solve_vec(&proxy.psi);
        Ok(x.iter().zip(&proxy.phi).map(|(v, f)| f * v.norm_sqr()).sum())
    };
    let (gx, gw) = gauss_legendre(16);
    let panel = |a: f64, b: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in gx.iter().zip(&gw) {
            s += w * f(m + h * x)?;
        }
        Ok(s * h)
    };
    let refined = |a: f64, b: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<(f64, f64)> {
        let coarse = panel(a, b, f)?;
        let m = 0.5 * (a + b);
        let fine = panel(a, m, f)? + panel(m, b, f)?;
        Ok((fine, (fine - coarse).abs()))
    };
    let pieces: Vec<Result<(f64, f64)>> = breaks
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| refined(w[0], w[1], &integrand))
        .collect();
    let (mut value, mut error) = (0.0, 0.0);
    for p in pieces {
        let (v, e) = p?;
        value += v;
        error += e;
    }
    let width = 50.0 / t;
    let right = |u: f64| -> Result<f64> { Ok(integrand(hi + width * (1.0 - u) / u)? * width / (u * u)) };
    let left = |u: f64| -> Result<f64> { Ok(integrand(lo - width * (1.0 - u) / u)? * width / (u * u)) };
    for tail in [&right as &dyn Fn(f64) -> Result<f64>, &left] {
        for k in 0..4 {
            let (v, e) = refined(k as f64 / 4.0, (k + 1) as f64 / 4.0, tail)?;
            value += v;
            error += e;
        }
    }
    let scale = 1.0 / (2.0 * PI * t);
    Ok(ResolventMoment {
        value: value * scale,
        error: error * scale,
        evaluations: 3 * 16 * (breaks.len() - 1 + 8),
    })
}

/// Spectral-projector tail estimates for `I_δ = (E − δ, E + δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorReport {
    #[serde(rename = "E")]
    pub e: f64,
    pub delta: f64,
    pub eps: f64,
    /// `a = ‖(H − E)ψ‖`.
    pub a: f64,
    /// `‖P_{I_δ^c}ψ‖`.
    pub projected_norm: f64,
    /// `a/δ`.
    pub projected_bound: f64,
    /// `‖R(E + iε)P_{I_δ^c}ψ‖`.
    pub resolvent_norm: f64,
    /// `a/δ²`.
    pub resolvent_bound: f64,
    pub projected_pass: bool,
    pub resolvent_pass: bool,
}

const PROJECTOR_SLACK: f64 = 1e-10;

/// Computes `a`, the exact projector `P_{I_δ^c}` from the eigendecomposition,
/// and checks `‖P_{I_δ^c}ψ‖ ≤ a/δ` and `‖R(E+iε)P_{I_δ^c}ψ‖ ≤ a/δ²`.
pub fn projector_tail_bounds(proxy: &ProxySystem, e: f64, delta: f64, eps: f64) -> Result<ProjectorReport> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("need δ > 0 and ε > 0, got δ = {delta}, ε = {eps}")));
    }
    let n = proxy.dim();
    let hpsi = proxy.h.mul_vec(&proxy.psi)?;
    let a = hpsi
        .iter()
        .zip(&proxy.psi)
        .map(|(hp, p)| (hp - e * p).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let eig = proxy.eigen()?;
    let c = spectral_coefficients(&eig, &proxy.psi);
    let z = Complex64::new(e, eps);
    let mut projected = vec![ZERO; n];
    let mut resolved = vec![ZERO; n];
    for (k, (&lam, ck)) in eig.values.iter().zip(&c).enumerate() {
        if (lam - e).abs() < delta {
            continue;
        }
        let r = ck / (lam - z);
        for i in 0..n {
            projected[i] += ck * eig.vectors[(i, k)];
            resolved[i] += r * eig.vectors[(i, k)];
        }
    }
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let projected_norm = norm(&projected);
    let resolvent_norm = norm(&resolved);
    let projected_bound = a / delta;
    let resolvent_bound = a / (delta * delta);
    let slack = PROJECTOR_SLACK * norm(&proxy.psi);
    Ok(ProjectorReport {
        e,
        delta,
        eps,
        a,
        projected_norm,
        projected_bound,
        resolvent_norm,
        resolvent_bound,
        projected_pass: projected_norm <= projected_bound * (1.0 + PROJECTOR_SLACK) + slack,
        resolvent_pass: resolvent_norm <= resolvent_bound * (1.0 + PROJECTOR_SLACK) + slack / delta,
    })
}

/// `u = R(z)χ_{B_t(x₀)}` for the point-interaction operator.
///
/// The free part is radial about `x₀`: `β e^{iκs}/s` outside the ball with
/// `β = (sin κt − κt cos κt)/κ³`, and `−1/κ² + α sin(κs)/s` inside with
/// `α = e^{iκt}(1 − iκt)/κ³`. The interaction adds `Σ_i G₀(x, i)c_i` with
/// `c = Γ⁻¹(u₀(j))_j`.
#[derive(Clone, Debug)]
pub struct BallResolvent {
    center: Point3,
    t: f64,
    kappa: Complex64,
    beta: Complex64,
    alpha: Complex64,
    points: Vec<Point3>,
    coeffs: Vec<Complex64>,
}

impl BallResolvent {
    pub fn new(system: &GammaSystem, t: f64) -> Result<Self> {
        Self::with_center(system, BALL_CENTER, t)
    }

    pub fn with_center(system: &GammaSystem, center: Point3, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {t}")));
        }
        if system.convention() != KernelConvention::Unconjugated {
            return Err(Error::InvalidParameter(
                "ball resolvent uses the symmetric (unconjugated) kernel".into(),
            ));
        }
        let kappa = system.energy().sqrt_z();
        let kt = kappa * t;
        let k3 = kappa * kappa * kappa;
        let beta = (kt.sin() - kt * kt.cos()) / k3;
        let alpha = (Complex64::i() * kt).exp() * (1.0 - Complex64::i() * kt) / k3;
        let mut out = Self {
            center,
            t,
            kappa,
            beta,
            alpha,
            points: system.sites().iter().map(site_point).collect(),
            coeffs: Vec::new(),
        };
        if let Some(lu) = system.factorization() {
            let rhs: Vec<Complex64> = out.points.iter().map(|p| out.free_part(p)).collect();
            out.coeffs = lu.solve_vec(&rhs);
        }
        Ok(out)
    }

    pub fn radius(&self) -> f64 {
        self.t
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn active_points(&self) -> &[Point3] {
        &self.points
    }

    /// `(R₀(z)χ_B)(x)`.
    pub fn free_part(&self, x: &Point3) -> Complex64 {
        let s = distance(x, &self.center);
        if s > self.t {
            self.beta * (Complex64::i() * self.kappa * s).exp() / s
        } else if s > 1e-8 {
            -1.0 / (self.kappa * self.kappa) + self.alpha * (self.kappa * s).sin() / s
        } else {
            -1.0 / (self.kappa * self.kappa) + self.alpha * self.kappa
        }
    }

    pub fn eval(&self, x: &Point3) -> Complex64 {
        let mut u = self.free_part(x);
        for (p, c) in self.points.iter().zip(&self.coeffs) {
            u += free_green_r(distance(p, x), self.kappa) * c;
        }
        u
    }

    /// Decay rate of `r|u(x₀ + r e)|` along the diagonal for `r ∈ [16, 128]`.
    pub fn fitted_rate(&self) -> Result<f64> {
        let e = 1.0 / 3f64.sqrt();
        let pairs: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let r = 16.0 * k as f64;
                let x = [self.center[0] + r * e, self.center[1] + r * e, self.center[2] + r * e];
                (r, r * self.eval(&x).norm())
            })
            .collect();
        Ok(fit_exponential_decay(&pairs)?.rate)
    }
}

/// Rules for the whole-space integral `‖φ^{1/2}u‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WholeSpaceRule {
    /// Unit cells `[−K, K]³` integrated with the pyramid cell rule.
    pub inner_half_width: i64,
    pub cell_order: usize,
    /// Gauss-Legendre panels and order per face coordinate.
    pub face_panels: usize,
    pub face_order: usize,
    pub radial_order: usize,
    /// Unit-width radial panels up to this radius, geometric beyond.
    pub near_radius: f64,
    pub growth: f64,
}

impl Default for WholeSpaceRule {
    fn default() -> Self {
        Self {
            inner_half_width: 3,
            cell_order: 4,
            face_panels: 2,
            face_order: 8,
            radial_order: 8,
            near_radius: 24.0,
            growth: 1.25,
        }
    }
}

/// `‖φ_q^{1/2}u‖₂²` truncated at `radius` (sup norm).
///
/// The cube `[−K−½, K+½]³` is covered by unit cells centred on lattice points,
/// whose pyramid rule absorbs the `1/|x − i|` singularities at active sites.
/// Its exterior is parametrized face by face as `x = r(±e_a + u e_b + v e_c)`
/// with Jacobian `r²`.
pub fn weighted_resolvent_norm_sq(u: &BallResolvent, weight: &WeightSpec, radius: f64, rule: &WholeSpaceRule) -> Result<f64> {
    let k = rule.inner_half_width;
    let r0 = k as f64 + 0.5;
    if u.points.iter().any(|p| p.iter().any(|c| c.abs() > r0 - 0.25)) {
        return Err(Error::InvalidParameter(format!(
            "active sites must lie inside the inner cube of half-width {r0}"
        )));
    }
    if !(radius > r0) {
        return Err(Error::InvalidParameter(format!("truncation radius {radius} inside the inner cube")));
    }
    let cell = CellRule::new(rule.cell_order);
    let cells: Vec<[i64; 3]> = (-k..=k)
        .flat_map(|a| (-k..=k).flat_map(move |b| (-k..=k).map(move |c| [a, b, c])))
        .collect();
    let inner: Vec<f64> = cells
        .par_iter()
        .map(|m| {
            let c = site_point(m);
            cell.nodes
                .iter()
                .map(|(p, w)| {
                    let x = [c[0] + p[0], c[1] + p[1], c[2] + p[2]];
                    w * weight.phi(&x) * u.eval(&x).norm_sqr()
                })
                .sum()
        })
        .collect();

    let mut radial = Vec::new();
    let near = rule.near_radius.min(radius).max(r0);
    let near_panels = ((near - r0).ceil() as usize).max(1);
    radial.extend(composite_rule(r0, near, near_panels, rule.radial_order));
    let mut a = near;
    while a < radius {
        let b = (a * rule.growth).min(radius);
        radial.extend(composite_rule(a, b, 1, rule.radial_order));
        a = b;
    }
    let face = composite_rule(-1.0, 1.0, rule.face_panels, rule.face_order);
    let outer: Vec<f64> = radial
        .par_iter()
        .map(|&(r, wr)| {
            let mut s = 0.0;
            for axis in 0..3 {
                let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                for sign in [1.0, -1.0] {
                    for &(p, wp) in &face {
                        for &(q, wq) in &face {
                            let mut x = [0.0; 3];
                            x[axis] = sign * r;
                            x[b] = r * p;
                            x[c] = r * q;
                            s += wp * wq * weight.phi(&x) * u.eval(&x).norm_sqr();
                        }
                    }
                }
            }
            s * wr * r * r
        })
        .collect();
    Ok(inner.iter().sum::<f64>() + outer.iter().sum::<f64>())
}

/// Rules for integrals over the slab `[−2L, 2L]² × [−Z, Z]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabRule {
    /// Gauss-Legendre order on unit panels.
    pub order: usize,
    /// `Z = z_per_l·L + z_offset`.
    pub z_per_l: f64,
    pub z_offset: f64,
}

impl Default for SlabRule {
    fn default() -> Self {
        Self {
            order: 6,
            z_per_l: 8.0,
            z_offset: 15.0,
        }
    }
}

/// `K = ⟨χ_B, R(z)C_{L;E}⟩`, `S = ⟨χ_B, R(z)ψ_{L,E}⟩` and `‖φ^{−1/2}ψ_{L,E}‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabIntegrals {
    pub k: Complex64,
    pub s: Complex64,
    pub w_sq: f64,
}

struct CutAxis {
    x: f64,
    w: f64,
    c: f64,
    d: f64,
    dd: f64,
}

fn cut_axis(l: f64, order: usize, with_interior: bool) -> Vec<CutAxis> {
    let mut pieces = vec![(-2.0 * l, -l), (l, 2.0 * l)];
    if with_interior {
        pieces.insert(1, (-l, l));
    }
    pieces
        .into_iter()
        .flat_map(|(a, b)| composite_rule(a, b, ((b - a).ceil() as usize).max(1), order))
        .map(|(x, w)| CutAxis {
            x,
            w,
            c: chi(x / l),
            d: chi_prime(x / l) / l,
            dd: chi_second(x / l) / (l * l),
        })
        .collect()
}

fn check_commutator_support(u: &BallResolvent, l: f64) -> Result<()> {
    for p in &u.points {
        let m = p[0].abs().max(p[1].abs());
        if m >= l - 0.5 && m <= 2.0 * l + 0.5 {
            let d = (m - l).abs().min((m - 2.0 * l).abs());
            return Err(Error::NearLattice {
                distance: d.max(NEAR_LATTICE_CUTOFF),
            });
        }
    }
    Ok(())
}

/// Slab integrals against `u = R(z)χ_B`. The kernel symmetry
/// `G(x, y) = G(y, x)` turns `⟨χ_B, R(z)f⟩` into `∫u f`.
///
/// With `with_interior = false` only the commutator support is visited and
/// `s`, `w_sq` are left at zero.
pub fn slab_integrals(
    u: &BallResolvent,
    mode: &GeneralizedMode,
    weight: &WeightSpec,
    rule: &SlabRule,
    with_interior: bool,
) -> Result<SlabIntegrals> {
    let l = mode
        .cutoff()
        .ok_or_else(|| Error::InvalidParameter("mode has no cutoff".into()))?
        .l();
    check_commutator_support(u, l)?;
    let zmax = rule.z_per_l * l + rule.z_offset;
    let mode = mode.with_extent(zmax.max(2.0 * l) + 1.0)?;
    let ax1 = cut_axis(l, rule.order, with_interior);
    let ax2 = cut_axis(l, rule.order, true);
    let ax3 = composite_rule(-zmax, zmax, (2.0 * zmax).ceil() as usize, rule.order);
    let table: Vec<Vec<[Complex64; 2]>> = ax2
        .par_iter()
        .map(|a| {
            ax3.iter()
                .map(|&(v, _)| {
                    let [p, pu, _] = mode.profile().psi0_with_gradient(a.x, v);
                    [p, pu]
                })
                .collect()
        })
        .collect();
    let rows: Vec<(Complex64, Complex64, f64)> = ax1
        .par_iter()
        .map(|a| {
            let (sn, cs) = (PI * a.x).sin_cos();
            let (mut k, mut s, mut w_sq) = (ZERO, ZERO, 0.0);
            for (b, row) in ax2.iter().zip(&table) {
                let lap = (a.dd * b.c + a.c * b.dd) * sn;
                let g1 = 2.0 * PI * a.d * b.c * cs;
                let g2 = 2.0 * a.c * b.d * sn;
                let cut = a.c * b.c * sn;
                let in_support = lap != 0.0 || g1 != 0.0 || g2 != 0.0;
                if !in_support && !with_interior {
                    continue;
                }
                for (&(v, wv), &[p, pu]) in ax3.iter().zip(row) {
                    let x = [a.x, b.x, v];
                    let w = a.w * b.w * wv;
                    let uu = u.eval(&x);
                    if in_support {
                        let c = -(g1 + lap) * p - g2 * pu;
                        k += w * uu * c;
                    }
                    if with_interior {
                        let psi_l = cut * p;
                        s += w * uu * psi_l;
                        w_sq += w * psi_l.norm_sqr() / weight.phi(&x);
                    }
                }
            }
            (k, s, w_sq)
        })
        .collect();
    let mut out = SlabIntegrals { k: ZERO, s: ZERO, w_sq: 0.0 };
    for (k, s, w) in rows {
        out.k += k;
        out.s += s;
        out.w_sq += w;
    }
    Ok(out)
}

fn check_mode_energy(system: &GammaSystem, mode: &GeneralizedMode) -> Result<()> {
    let e = system.energy().e();
    if (e - mode.energy()).abs() > 1e-9 * e.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "system energy Re z = {e} differs from mode energy {}",
            mode.energy()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    #[serde(rename = "L")]
    pub l: f64,
    /// `|⟨χ_B, R(z)C_{L;E}⟩|`.
    pub value: f64,
    /// `|⟨χ_B, ψ_E⟩|`.
    pub overlap: f64,
    /// `value / (|overlap|/4)`; at most 1 once `L ≥ L_ε`.
    pub ratio: f64,
}

/// `|⟨χ_{B_t(x₀)}, R(z)C_{L;E}⟩|` at `z` taken from `system`.
pub fn commutator_matrix_element(system: &GammaSystem, mode: &GeneralizedMode, t: f64, l: f64) -> Result<MatrixElement> {
    commutator_matrix_element_with(system, mode, t, l, &SlabRule::default())
}

pub fn commutator_matrix_element_with(
    system: &GammaSystem,
    mode: &GeneralizedMode,
    t: f64,
    l: f64,
    rule: &SlabRule,
) -> Result<MatrixElement> {
    if !(l >= 2.0) {
        return Err(Error::InvalidParameter(format!("cutoff scale must be at least 2, got {l}")));
    }
    check_mode_energy(system, mode)?;
    let mode = mode.clone().with_cutoff(l)?;
    let u = BallResolvent::new(system, t)?;
    let overlap = overlap_ball(t, &mode)?.norm();
    let slab = slab_integrals(&u, &mode, &WeightSpec::new(1.0)?, rule, false)?;
    let value = slab.k.norm();
    Ok(MatrixElement {
        l,
        value,
        overlap,
        ratio: value / (0.25 * overlap),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSweep {
    pub elements: Vec<MatrixElement>,
    /// Log-linear fit of the value against L.
    pub fit: Option<DecayFit>,
    /// Smallest swept L with value ≤ |overlap|/4.
    pub l_eps: Option<f64>,
}

pub fn commutator_sweep(system: &GammaSystem, mode: &GeneralizedMode, t: f64, ls: &[f64], rule: &SlabRule) -> Result<CommutatorSweep> {
    let elements = ls
        .iter()
        .map(|&l| commutator_matrix_element_with(system, mode, t, l, rule))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = elements.iter().map(|e| (e.l, e.value)).collect();
    let fit = fit_exponential_decay(&pairs).ok();
    let l_eps = elements.iter().find(|e| e.ratio <= 1.0).map(|e| e.l);
    Ok(CommutatorSweep { elements, fit, l_eps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelocSpec {
    pub t_grid: Vec<f64>,
    /// Gauss-Legendre nodes over the interval.
    pub energy_nodes: usize,
    /// Candidate cutoff scales, tried in order.
    pub l_candidates: Vec<f64>,
    pub slab: SlabRule,
    pub whole_space: WholeSpaceRule,
    /// Wall-clock budget; remaining T rows are skipped once exceeded.
    pub budget_seconds: Option<f64>,
}

impl Default for DelocSpec {
    fn default() -> Self {
        Self {
            t_grid: vec![2.0, 4.0, 8.0],
            energy_nodes: 9,
            l_candidates: vec![2.0, 3.0],
            slab: SlabRule::default(),
            whole_space: WholeSpaceRule::default(),
            budget_seconds: None,
        }
    }
}

/// One `(T, E)` point of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelocCell {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub eps: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub l_eps_reached: bool,
    /// Measured Combes-Thomas rate of `u` and the resulting truncation radius.
    pub gamma_fit: f64,
    pub radius: f64,
    /// `N = ε‖φ^{1/2}R(z)χ_B‖`.
    pub n: f64,
    /// `‖φ^{−1/2}ψ_{L,E}‖`.
    pub w: f64,
    pub overlap: f64,
    pub k_abs: f64,
    pub s_abs: f64,
    /// `|⟨χ_B,ψ_E⟩ − (K − iεS)| / |⟨χ_B,ψ_E⟩|`.
    pub identity_residual: f64,
    pub chain_lhs: f64,
    pub chain_rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelocRow {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N_min")]
    pub n_min: f64,
    pub m_lower: f64,
    /// Growth exponent fitted to the rows so far (`None` for the first row).
    pub exponent_running: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelocReport {
    pub i_minus: f64,
    pub i_plus: f64,
    pub t_i: f64,
    pub q: f64,
    pub cells: Vec<DelocCell>,
    pub rows: Vec<DelocRow>,
    /// Least-squares slope of `ln M_lower` against `ln T`.
    pub exponent: Option<f64>,
    /// `((q−3)/q)(π⁶/(I₊−π²)³)|I|`.
    pub growth_shape: f64,
    /// `min_T M_lower/(T · growth_shape)`, the measured stand-in for `C₀`.
    pub fitted_c0: Option<f64>,
    /// `(√2/81)π⁴/(I₋−π²)^{3/2}`, report only.
    pub overlap_display_value: f64,
    pub chain_pass: bool,
    pub complete: bool,
}

fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Relative slack on the chain inequality, covering quadrature error.
pub const CHAIN_SLACK: f64 = 1e-6;

#[allow(clippy::too_many_arguments)]
fn deloc_cell(
    config: &DisorderConfig,
    e: f64,
    t_time: f64,
    l: f64,
    l_eps_reached: bool,
    t_ball: f64,
    weight: &WeightSpec,
    spec: &DelocSpec,
) -> Result<DelocCell> {
    let eps = 0.5 / t_time;
    let system = GammaSystem::assemble(config, EnergyPoint::new(e, eps)?, KernelConvention::Unconjugated)?;
    let mode = GeneralizedMode::new(ModeProfile::bump(e - PI * PI)?).with_cutoff(l)?;
    let u = BallResolvent::new(&system, t_ball)?;
    let tau = system.energy().tau();
    let gamma_fit = u.fitted_rate().ok().filter(|g| *g > 0.0).unwrap_or(tau);
    let radius = (weight.q() * (1.0 / eps).ln() + 30.0) / gamma_fit;
    let n = eps * weighted_resolvent_norm_sq(&u, weight, radius, &spec.whole_space)?.sqrt();
    let slab = slab_integrals(&u, &mode, weight, &spec.slab, true)?;
    let ov = overlap_ball(t_ball, &mode)?;
    let w = slab.w_sq.sqrt();
    let identity = ov - (slab.k - Complex64::i() * eps * slab.s);
    let chain_lhs = n * w;
    let chain_rhs = ov.norm() - slab.k.norm();
    Ok(DelocCell {
        t: t_time,
        e,
        eps,
        l,
        l_eps_reached,
        gamma_fit,
        radius,
        n,
        w,
        overlap: ov.norm(),
        k_abs: slab.k.norm(),
        s_abs: slab.s.norm(),
        identity_residual: identity.norm() / ov.norm(),
        chain_lhs,
        chain_rhs,
        pass: chain_lhs >= chain_rhs - CHAIN_SLACK * ov.norm(),
    })
}

/// Runs the delocalization chain over `T ∈ spec.t_grid` with `ε = 1/2T`.
///
/// For each T the cutoff scale is the first candidate with
/// `|⟨χ_B, R(z)C⟩| ≤ |⟨χ_B,ψ_E⟩|/4` at the interval midpoint (the last one,
/// flagged, if none qualifies). At every Gauss-Legendre energy the cell records
/// `N·‖φ^{−1/2}ψ_{L,E}‖ ≥ |⟨χ_B,ψ_E⟩| − |⟨χ_B,R(z)C⟩|`, and the row
/// accumulates `M_lower(T) = (2T/π)∫_I N² dE`, a lower bound for the moment of
/// `χ_B` through the resolvent formula.
pub fn deloc_chain(config: &DisorderConfig, interval: (f64, f64), q: f64, spec: &DelocSpec) -> Result<DelocReport> {
    let (i_minus, i_plus) = interval;
    if !(i_minus > PI * PI && i_plus > i_minus) {
        return Err(Error::InvalidParameter(format!(
            "interval [{i_minus}, {i_plus}] must lie above π²"
        )));
    }
    if !(q > 3.0) {
        return Err(Error::InvalidParameter(format!("deloc chain needs q > 3, got {q}")));
    }
    if spec.t_grid.is_empty() || spec.t_grid.iter().any(|t| !(*t > 0.0)) || spec.l_candidates.is_empty() {
        return Err(Error::InvalidParameter("need a positive T grid and cutoff candidates".into()));
    }
    let start = Instant::now();
    let weight = WeightSpec::new(q)?;
    let t_ball = interval_radius(i_minus)?;
    let (gx, gw) = gauss_legendre(spec.energy_nodes);
    let (mid, half) = (0.5 * (i_minus + i_plus), 0.5 * (i_plus - i_minus));
    let energies: Vec<(f64, f64)> = gx.iter().zip(&gw).map(|(x, w)| (mid + half * x, half * w)).collect();

    let mut cells = Vec::new();
    let mut rows: Vec<DelocRow> = Vec::new();
    let mut complete = true;
    for &t_time in &spec.t_grid {
        if spec.budget_seconds.is_some_and(|b| start.elapsed().as_secs_f64() > b) {
            complete = false;
            break;
        }
        let eps = 0.5 / t_time;
        let system = GammaSystem::assemble(config, EnergyPoint::new(mid, eps)?, KernelConvention::Unconjugated)?;
        let mode = GeneralizedMode::new(ModeProfile::bump(mid - PI * PI)?);
        let mut chosen = (*spec.l_candidates.last().unwrap_or(&2.0), false);
        for &l in &spec.l_candidates {
            if commutator_matrix_element_with(&system, &mode, t_ball, l, &spec.slab)?.ratio <= 1.0 {
                chosen = (l, true);
                break;
            }
        }
        let row_cells = energies
            .par_iter()
            .map(|&(e, _)| deloc_cell(config, e, t_time, chosen.0, chosen.1, t_ball, &weight, spec))
            .collect::<Result<Vec<_>>>()?;
        let integral: f64 = row_cells.iter().zip(&energies).map(|(c, (_, w))| w * c.n * c.n).sum();
        let m_lower = 2.0 * t_time / PI * integral;
        let n_min = row_cells.iter().map(|c| c.n).fold(f64::INFINITY, f64::min);
        rows.push(DelocRow {
            t: t_time,
            n_min,
            m_lower,
            exponent_running: None,
        });
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.m_lower)).collect();
        rows.last_mut().expect("row just pushed").exponent_running = log_slope(&pts);
        cells.extend(row_cells);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.m_lower)).collect();
    let growth_shape = (q - 3.0) / q * PI.powi(6) / (i_plus - PI * PI).powi(3) * (i_plus - i_minus);
    let fitted_c0 = rows
        .iter()
        .map(|r| r.m_lower / (r.t * growth_shape))
        .reduce(f64::min);
    Ok(DelocReport {
        i_minus,
        i_plus,
        t_i: t_ball,
        q,
        chain_pass: cells.iter().all(|c| c.pass),
        cells,
        exponent: log_slope(&pts),
        rows,
        growth_shape,
        fitted_c0,
        overlap_display_value: 2f64.sqrt() / 81.0 * PI.powi(4) / (i_minus - PI * PI).powf(1.5),
        complete,
    })
}
