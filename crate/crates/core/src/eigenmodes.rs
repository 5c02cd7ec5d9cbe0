//! Bounded generalized eigenfunctions `ψ_E(x) = sin(πx₁)ψ₀(x₂, x₃)` at
//! `E = π² + ε`, their cutoffs `ψ_{L,E} = χ_L ψ_E`, and the commutator
//! residual `C_{L;E} = [−Δ, χ_L]ψ_E`.
//!
//! `ψ₀` is a superposition of plane waves `e^{i(su + √(ε−s²)v)}` weighted by a
//! density `ρ(s)`. It is evaluated with a fixed Gauss-Legendre rule in `s`, so
//! the discrete `ψ_E` is itself an exact solution of `−Δψ = Eψ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point3;
use crate::numerics::{composite_rule, integrate, Domain, QuadratureSpec};

/// Largest phase change of the s-integrand allowed on one panel.
const PHASE_PER_PANEL: f64 = 8.0;
const S_ORDER: usize = 16;
/// Coordinates up to this size are resolved unless widened explicitly.
pub const DEFAULT_EXTENT: f64 = 16.0;

/// Sup norms of the quintic transition profile.
pub const CHI_PRIME_MAX: f64 = 15.0 / 8.0;
pub const CHI_SECOND_MAX: f64 = 5.773502691896258; // 10/√3

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProfileShape {
    /// Height `1/√ε` on `[−√ε/2, √ε/2]`.
    Uniform,
    /// `exp(−1/(1−ξ²))` bump on `[lo, hi]·√ε`, rescaled to unit mass.
    Bump { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug)]
struct SNode {
    s: f64,
    k3: f64,
    weight: f64,
}

/// The density `ρ` together with its s-quadrature.
#[derive(Clone, Debug)]
pub struct ModeProfile {
    eps: f64,
    shape: ProfileShape,
    extent: f64,
    norm: f64,
    nodes: Vec<SNode>,
}

fn bump(xi: f64) -> f64 {
    if xi.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - xi * xi)).exp()
    }
}

impl ModeProfile {
    pub fn new(eps: f64, shape: ProfileShape) -> Result<Self> {
        Self::with_extent_of(eps, shape, DEFAULT_EXTENT)
    }

    pub fn uniform(eps: f64) -> Result<Self> {
        Self::new(eps, ProfileShape::Uniform)
    }

    /// One-sided bump on `[0.25, 0.45]·√ε`. It vanishes near `s = 0`, which
    /// keeps the x₃-slice norms of the mode finite.
    pub fn bump(eps: f64) -> Result<Self> {
        Self::new(eps, ProfileShape::Bump { lo: 0.25, hi: 0.45 })
    }

    fn with_extent_of(eps: f64, shape: ProfileShape, extent: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidParameter(format!("extent must be positive, got {extent}")));
        }
        if let ProfileShape::Bump { lo, hi } = shape {
            if !(-0.5 < lo && lo < hi && hi < 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "bump support [{lo}, {hi}]·√ε must lie inside (−1/2, 1/2)·√ε"
                )));
            }
        }
        let mut profile = Self {
            eps,
            shape,
            extent,
            norm: 1.0,
            nodes: Vec::new(),
        };
        let (a, b) = profile.support();
        let k = |s: f64| (eps - s * s).sqrt();
        // √(ε−s²) is monotone on each side of 0.
        let dk = if a < 0.0 && b > 0.0 {
            2.0 * eps.sqrt() - k(a) - k(b)
        } else {
            (k(a) - k(b)).abs()
        };
        let min_panels = match shape {
            ProfileShape::Uniform => 2,
            ProfileShape::Bump { .. } => 16,
        };
        let panels = ((extent * ((b - a) + dk) / PHASE_PER_PANEL).ceil() as usize).max(min_panels);
        let rule = composite_rule(a, b, panels, S_ORDER);
        let raw: Vec<f64> = rule.iter().map(|&(s, w)| w * profile.shape_value(s)).collect();
        let mass: f64 = raw.iter().sum();
        profile.norm = 1.0 / mass;
        profile.nodes = rule
            .iter()
            .zip(&raw)
            .map(|(&(s, _), &r)| SNode {
                s,
                k3: k(s),
                weight: r / mass,
            })
            .collect();
        Ok(profile)
    }

    /// Copy whose quadrature resolves `|u|, |v| ≤ extent`.
    pub fn with_extent(&self, extent: f64) -> Result<Self> {
        Self::with_extent_of(self.eps, self.shape, extent)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn shape(&self) -> ProfileShape {
        self.shape
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn support(&self) -> (f64, f64) {
        let r = self.eps.sqrt();
        match self.shape {
            ProfileShape::Uniform => (-0.5 * r, 0.5 * r),
            ProfileShape::Bump { lo, hi } => (lo * r, hi * r),
        }
    }

    fn shape_value(&self, s: f64) -> f64 {
        let (a, b) = self.support();
        if s < a || s > b {
            return 0.0;
        }
        match self.shape {
            ProfileShape::Uniform => 1.0,
            ProfileShape::Bump { .. } => bump((2.0 * s - a - b) / (b - a)),
        }
    }

    /// Normalized density `ρ(s)`.
    pub fn density(&self, s: f64) -> f64 {
        self.norm * self.shape_value(s)
    }

    /// Discrete `∫ρ`, which is 1 up to rounding.
    pub fn mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn psi0(&self, u: f64, v: f64) -> Complex64 {
        self.nodes
            .iter()
            .map(|n| n.weight * Complex64::cis(n.s * u + n.k3 * v))
            .sum()
    }

    /// `(ψ₀, ∂_uψ₀, ∂_vψ₀)` by differentiating under the s-integral.
    pub fn psi0_with_gradient(&self, u: f64, v: f64) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for n in &self.nodes {
            let e = n.weight * Complex64::cis(n.s * u + n.k3 * v);
            let ie = Complex64::new(-e.im, e.re);
            out[0] += e;
            out[1] += ie * n.s;
            out[2] += ie * n.k3;
        }
        out
    }

    fn integrate_density(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (a, b) = self.support();
        composite_rule(a, b, 64, S_ORDER)
            .iter()
            .map(|&(s, w)| w * f(s))
            .sum()
    }

    /// `∫|ψ₀(u, v)|² du = 2π∫ρ²`, the same for every `v`.
    pub fn u_slice_norm_sq(&self) -> f64 {
        2.0 * PI * self.integrate_density(|s| self.density(s).powi(2))
    }

    /// Slice Gram matrix in v for the pair (ψ₀, ∂_uψ₀), returned as
    /// `(M₀₀, M₁₁)`; the off-diagonal entry is purely imaginary.
    ///
    /// For a profile supported on one side of 0 the map `s ↦ √(ε−s²)` is
    /// injective, and Plancherel in v gives
    /// `∫ψ_j conj(ψ_k) dv = 2π∫ρ² c_j conj(c_k) √(ε−s²)/|s| ds`
    /// with `c₀ = 1`, `c₁ = is`, independently of `u`.
    pub fn v_slice_gram(&self) -> Result<(f64, f64)> {
        let (a, b) = self.support();
        if a <= 0.0 && b >= 0.0 {
            return Err(Error::DivergentSliceNorm);
        }
        let k = |s: f64| (self.eps - s * s).sqrt();
        let m00 = 2.0 * PI * self.integrate_density(|s| self.density(s).powi(2) * k(s) / s.abs());
        let m11 = 2.0 * PI * self.integrate_density(|s| self.density(s).powi(2) * k(s) * s.abs());
        Ok((m00, m11))
    }

    /// `∫|ψ₀(u, v)|² dv`, the constant of the v-slice bound.
    pub fn v_slice_norm_sq(&self) -> Result<f64> {
        Ok(self.v_slice_gram()?.0)
    }
}

pub fn psi0(u: f64, v: f64, profile: &ModeProfile) -> Complex64 {
    profile.psi0(u, v)
}

/// Quintic smoothstep cutoff: 1 on `[−1, 1]`, 0 outside `[−2, 2]`.
pub fn chi(t: f64) -> f64 {
    let s = (t.abs() - 1.0).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub fn chi_prime(t: f64) -> f64 {
    let s = t.abs() - 1.0;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    -t.signum() * 30.0 * s * s * (1.0 - s) * (1.0 - s)
}

pub fn chi_second(t: f64) -> f64 {
    let s = t.abs() - 1.0;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    l: f64,
}

impl CutoffSpec {
    pub fn new(l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff scale must be positive, got {l}")));
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// `χ_L(x) = χ(x₁/L)χ(x₂/L)`.
    pub fn value(&self, x: &Point3) -> f64 {
        chi(x[0] / self.l) * chi(x[1] / self.l)
    }

    pub fn gradient(&self, x: &Point3) -> [f64; 3] {
        let (t1, t2) = (x[0] / self.l, x[1] / self.l);
        [
            chi_prime(t1) * chi(t2) / self.l,
            chi(t1) * chi_prime(t2) / self.l,
            0.0,
        ]
    }

    pub fn laplacian(&self, x: &Point3) -> f64 {
        let (t1, t2) = (x[0] / self.l, x[1] / self.l);
        (chi_second(t1) * chi(t2) + chi(t1) * chi_second(t2)) / (self.l * self.l)
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedMode {
    profile: ModeProfile,
    cutoff: Option<CutoffSpec>,
}

impl GeneralizedMode {
    pub fn new(profile: ModeProfile) -> Self {
        Self { profile, cutoff: None }
    }

    pub fn with_cutoff(mut self, l: f64) -> Result<Self> {
        self.cutoff = Some(CutoffSpec::new(l)?);
        Ok(self)
    }

    pub fn profile(&self) -> &ModeProfile {
        &self.profile
    }

    pub fn cutoff(&self) -> Option<&CutoffSpec> {
        self.cutoff.as_ref()
    }

    pub fn eps(&self) -> f64 {
        self.profile.eps
    }

    pub fn energy(&self) -> f64 {
        PI * PI + self.profile.eps
    }

    /// Same mode with the s-quadrature widened to `extent`.
    pub fn with_extent(&self, extent: f64) -> Result<Self> {
        Ok(Self {
            profile: self.profile.with_extent(extent)?,
            cutoff: self.cutoff,
        })
    }

    fn require_cutoff(&self) -> Result<&CutoffSpec> {
        self.cutoff
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("mode has no cutoff".into()))
    }

    pub fn psi_e(&self, x: &Point3) -> Complex64 {
        (PI * x[0]).sin() * self.profile.psi0(x[1], x[2])
    }

    /// `(ψ_E, ∇ψ_E)`.
    pub fn psi_e_with_gradient(&self, x: &Point3) -> (Complex64, [Complex64; 3]) {
        let [p, pu, pv] = self.profile.psi0_with_gradient(x[1], x[2]);
        let (sn, cs) = (PI * x[0]).sin_cos();
        (sn * p, [PI * cs * p, sn * pu, sn * pv])
    }

    /// `ψ_{L,E} = χ_L ψ_E`.
    pub fn psi_l(&self, x: &Point3) -> Result<Complex64> {
        Ok(self.require_cutoff()?.value(x) * self.psi_e(x))
    }

    /// `C_{L;E} = −2∇χ_L·∇ψ_E − (Δχ_L)ψ_E`.
    pub fn commutator_c(&self, x: &Point3) -> Result<Complex64> {
        let cutoff = self.require_cutoff()?;
        let g = cutoff.gradient(x);
        let lap = cutoff.laplacian(x);
        if g[0] == 0.0 && g[1] == 0.0 && lap == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let (psi, grad) = self.psi_e_with_gradient(x);
        Ok(-2.0 * (g[0] * grad[0] + g[1] * grad[1]) - lap * psi)
    }
}

pub fn psi_e(x: &Point3, mode: &GeneralizedMode) -> Complex64 {
    mode.psi_e(x)
}

pub fn commutator_c(x: &Point3, mode: &GeneralizedMode) -> Result<Complex64> {
    mode.commutator_c(x)
}

/// Largest `|(−Δ_h − E)ψ_{L,E} − C_{L;E}|` over `points`, with the 7-point
/// Laplacian of step `h`. The exact identity makes this pure truncation error.
pub fn fd_residual(mode: &GeneralizedMode, points: &[Point3], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let e = mode.energy();
    let mut worst = 0.0f64;
    for x in points {
        let centre = mode.psi_l(x)?;
        let mut lap = -6.0 * centre;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut y = *x;
                y[axis] += sign * h;
                lap += mode.psi_l(&y)?;
            }
        }
        let residual = -lap / (h * h) - e * centre - mode.commutator_c(x)?;
        worst = worst.max(residual.norm());
    }
    Ok(worst)
}

/// Norms of the commutator pieces and of the cut-off mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorNorms {
    #[serde(rename = "L")]
    pub l: f64,
    /// `∫|(Δχ_L)ψ_E|²`.
    pub a1: f64,
    /// `∫|∇χ_L·∇ψ_E|²`.
    pub a2: f64,
    /// `‖C_{L;E}‖₂`.
    pub a0: f64,
    pub psi_l_norm_sq: f64,
    /// Relative change under panel doubling.
    pub relative_error: f64,
}

fn cutoff_axis_rule(l: f64, panels_per_unit: f64) -> Vec<(f64, f64)> {
    let mut rule = Vec::new();
    for (a, b) in [(-2.0 * l, -l), (-l, l), (l, 2.0 * l)] {
        let panels = (((b - a) * panels_per_unit).ceil() as usize).max(1);
        rule.extend(composite_rule(a, b, panels, S_ORDER));
    }
    rule
}

struct AxisSamples {
    w: f64,
    c: f64,
    d: f64,
    dd: f64,
    sn: f64,
    cs: f64,
}

/// Returns `[∫∫lap², ∫∫(∂₁χ π cos)², ∫∫(∂₂χ sin)², ∫∫a₀², ∫∫(χ_L sin)²]`
/// over the `(x₁, x₂)` square.
fn cutoff_plane_integrals(l: f64, panels_per_unit: f64) -> [f64; 5] {
    let samples: Vec<AxisSamples> = cutoff_axis_rule(l, panels_per_unit)
        .into_iter()
        .map(|(x, w)| {
            let t = x / l;
            let (sn, cs) = (PI * x).sin_cos();
            AxisSamples {
                w,
                c: chi(t),
                d: chi_prime(t) / l,
                dd: chi_second(t) / (l * l),
                sn,
                cs,
            }
        })
        .collect();
    let rows: Vec<[f64; 5]> = samples
        .par_iter()
        .map(|p| {
            let mut acc = [0.0; 5];
            for r in &samples {
                let w = p.w * r.w;
                let lap = (p.dd * r.c + p.c * r.dd) * p.sn;
                let g1 = PI * p.d * r.c * p.cs;
                let g2 = p.c * r.d * p.sn;
                let a0 = -2.0 * g1 - lap;
                let psi = p.c * r.c * p.sn;
                acc[0] += w * lap * lap;
                acc[1] += w * g1 * g1;
                acc[2] += w * g2 * g2;
                acc[3] += w * a0 * a0;
                acc[4] += w * psi * psi;
            }
            acc
        })
        .collect();
    rows.iter().fold([0.0; 5], |mut s, r| {
        for k in 0..5 {
            s[k] += r[k];
        }
        s
    })
}

/// `∫|(Δχ_L)ψ_E|²`, `∫|∇χ_L·∇ψ_E|²`, `‖C_{L;E}‖₂` and `‖ψ_{L,E}‖²`.
///
/// The x₃-integral is done exactly through the v-slice Gram matrix, which
/// needs a profile vanishing near `s = 0`; the remaining `(x₁, x₂)` integral is
/// a tensor Gauss-Legendre rule aligned with the cutoff breakpoints and
/// certified by panel doubling against `spec.tolerance` (relative).
pub fn commutator_norms(mode: &GeneralizedMode, spec: &QuadratureSpec) -> Result<CommutatorNorms> {
    let l = mode.require_cutoff()?.l;
    let (m00, m11) = mode.profile.v_slice_gram()?;
    let ppu = spec.panels.max(1) as f64 / 2.0;
    let assemble = |p: [f64; 5]| {
        [
            m00 * p[0],
            m00 * p[1] + m11 * p[2],
            (m00 * p[3] + 4.0 * m11 * p[2]).sqrt(),
            m00 * p[4],
        ]
    };
    let coarse = assemble(cutoff_plane_integrals(l, ppu));
    let fine = assemble(cutoff_plane_integrals(l, 2.0 * ppu));
    let relative_error = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (c - f).abs() / f.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if relative_error > spec.tolerance {
        return Err(Error::NonConvergence {
            estimated_error: relative_error,
            tolerance: spec.tolerance,
        });
    }
    Ok(CommutatorNorms {
        l,
        a1: fine[0],
        a2: fine[1],
        a0: fine[2],
        psi_l_norm_sq: fine[3],
        relative_error,
    })
}

/// Ball centre used by the overlap estimates.
pub const BALL_CENTER: Point3 = [0.5, 0.0, 0.0];

/// `⟨χ_{B_t(x₀)}, ψ_E⟩` by spherical Gauss-Legendre quadrature.
pub fn overlap_ball(t: f64, mode: &GeneralizedMode) -> Result<Complex64> {
    if !(t > 0.0 && t < 0.5) {
        return Err(Error::InvalidParameter(format!("ball radius must lie in (0, 1/2), got {t}")));
    }
    let domain = Domain::Ball {
        center: BALL_CENTER.to_vec(),
        radius: t,
    };
    let spec = QuadratureSpec {
        panels: 1,
        order: 12,
        tolerance: 1e-12 * t.powi(3).max(1e-300) + 1e-15,
        truncation_radius: None,
    };
    let integral = integrate(|x| mode.psi_e(&[x[0], x[1], x[2]]), &domain, &spec)?;
    Ok(integral.value)
}

/// `(√2/2)|B_t| cos(1/2) = (2√2/3)π t³ cos(1/2)`.
pub fn overlap_lower_bound(t: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 / 3.0 * PI * t.powi(3) * 0.5f64.cos()
}

/// Ball radius for a single energy: `t_E = min(1/(3√ε), 1/4)`.
pub fn admissible_radius(eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    Ok((1.0 / (3.0 * eps.sqrt())).min(0.25))
}

/// Ball radius for an interval `[I₋, I₊]`: `1/(3√(I₋−π²))` when that is below
/// 1/2, else 1/4.
pub fn interval_radius(i_minus: f64) -> Result<f64> {
    let gap = i_minus - PI * PI;
    if !(gap > 0.0) {
        return Err(Error::InvalidParameter(format!("I₋ = {i_minus} must exceed π²")));
    }
    Ok(if gap > 4.0 / 9.0 { 1.0 / (3.0 * gap.sqrt()) } else { 0.25 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    /// Cube half-width; chosen from the tail budget when absent.
    pub radius: Option<f64>,
    /// Allowed tail as a fraction of the bound `4πq/(q−3)`.
    pub tail_fraction: f64,
    pub max_radius: f64,
    /// Relative tolerance of the truncated integral under panel doubling.
    pub tolerance: f64,
}

impl Default for WeightedNormSpec {
    fn default() -> Self {
        Self {
            radius: None,
            tail_fraction: 0.05,
            max_radius: 64.0,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub q: f64,
    pub radius: f64,
    /// `∫_{[−R,R]³} |ψ_E|²/φ_q`.
    pub value: f64,
    /// `4π∫_R^∞ r²(1+r²)^{−q/2} dr ≤ 4πR^{3−q}/(q−3)`.
    pub tail: f64,
    pub total: f64,
    pub closed_bound: f64,
    pub pass: bool,
}

/// `4πq/(q−3)`.
pub fn weighted_norm_bound(q: f64) -> f64 {
    4.0 * PI * q / (q - 3.0)
}

/// Cubic Hermite table of `h(ρ) = ∫_{−R}^{R} sin²(πx)(1+x²+ρ²)^{−q/2} dx`.
struct SliceWeight {
    step: f64,
    values: Vec<(f64, f64)>,
}

impl SliceWeight {
    fn new(q: f64, r: f64, rho_max: f64) -> Self {
        let rule = composite_rule(-r, r, (4.0 * r).ceil() as usize, 12);
        let step = 1.0 / 32.0;
        let count = (rho_max / step).ceil() as usize + 2;
        let values = (0..count)
            .into_par_iter()
            .map(|i| {
                let rho = i as f64 * step;
                let (mut h, mut dh) = (0.0, 0.0);
                for &(x, w) in &rule {
                    let s2 = (PI * x).sin().powi(2);
                    let base = 1.0 + x * x + rho * rho;
                    let p = base.powf(-0.5 * q);
                    h += w * s2 * p;
                    dh += w * s2 * (-q * rho) * p / base;
                }
                (h, dh)
            })
            .collect();
        Self { step, values }
    }

    fn eval(&self, rho: f64) -> f64 {
        let t = rho / self.step;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let u = t - i as f64;
        let (y0, d0) = self.values[i];
        let (y1, d1) = self.values[i + 1];
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * self.step * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * self.step * d1
    }
}

fn plane_integral(mode: &GeneralizedMode, weight: &SliceWeight, r: f64, panels_per_unit: usize) -> f64 {
    let rule = composite_rule(-r, r, ((2.0 * r).ceil() as usize) * panels_per_unit, 8);
    let nodes = &mode.profile.nodes;
    // ψ₀ on a tensor grid factors as Σ_n (w_n e^{i s_n u})(e^{i k_n v}).
    let u_phases: Vec<Vec<Complex64>> = rule
        .iter()
        .map(|&(u, _)| nodes.iter().map(|n| n.weight * Complex64::cis(n.s * u)).collect())
        .collect();
    let v_phases: Vec<Vec<Complex64>> = rule
        .iter()
        .map(|&(v, _)| nodes.iter().map(|n| Complex64::cis(n.k3 * v)).collect())
        .collect();
    let rows: Vec<f64> = rule
        .par_iter()
        .zip(&u_phases)
        .map(|(&(u, wu), a)| {
            rule.iter()
                .zip(&v_phases)
                .map(|(&(v, wv), b)| {
                    let psi: Complex64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    wv * psi.norm_sqr() * weight.eval(u.hypot(v))
                })
                .sum::<f64>()
                * wu
        })
        .collect();
    rows.iter().sum()
}

/// `‖φ_q^{−1/2}ψ_E‖²` over the cube `[−R, R]³` plus the radial tail bound.
pub fn weighted_mode_norm(q: f64, mode: &GeneralizedMode, spec: &WeightedNormSpec) -> Result<WeightedNorm> {
    if !(q > 3.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("weighted norm needs q > 3, got {q}")));
    }
    let bound = weighted_norm_bound(q);
    let budget = spec.tail_fraction * bound;
    let tail_at = |r: f64| 4.0 * PI * r.powf(3.0 - q) / (q - 3.0);
    let r = match spec.radius {
        Some(r) => r,
        None => (4.0 * PI / ((q - 3.0) * budget)).powf(1.0 / (q - 3.0)).max(4.0).ceil(),
    };
    let tail = tail_at(r);
    if r > spec.max_radius {
        return Err(Error::Budget(format!(
            "tail budget for q = {q} needs cube half-width {r:.1} > {}",
            spec.max_radius
        )));
    }
    if tail > budget {
        return Err(Error::NonConvergence {
            estimated_error: tail,
            tolerance: budget,
        });
    }
    let wide = mode.with_extent(r * std::f64::consts::SQRT_2 + 1.0)?;
    let weight = SliceWeight::new(q, r, r * std::f64::consts::SQRT_2 + 1.0);
    let coarse = plane_integral(&wide, &weight, r, 1);
    let value = plane_integral(&wide, &weight, r, 2);
    let rel = (coarse - value).abs() / value.abs().max(f64::MIN_POSITIVE);
    if rel > spec.tolerance {
        return Err(Error::NonConvergence {
            estimated_error: rel,
            tolerance: spec.tolerance,
        });
    }
    let total = value + tail;
    Ok(WeightedNorm {
        q,
        radius: r,
        value,
        tail,
        total,
        closed_bound: bound,
        pass: total <= bound,
    })
}
