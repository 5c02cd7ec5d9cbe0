//! Radial lattice sums `Σ_{m∈Z^d} f(‖m‖)` for exponentially decaying `f`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::lattice::SiteNorm;

/// Squared radii up to this bound are summed exactly.
const TABLE_MAX_SQ: usize = 160_000;

static SHELLS: [OnceLock<Vec<u32>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

// r_d(k) = #{m ∈ Z^d : ‖m‖² = k} for k ≤ TABLE_MAX_SQ.
fn shell_counts(d: usize) -> &'static [u32] {
    SHELLS[d - 1].get_or_init(|| {
        let mut one = vec![0u32; TABLE_MAX_SQ + 1];
        let mut j = 0usize;
        while j * j <= TABLE_MAX_SQ {
            one[j * j] += if j == 0 { 1 } else { 2 };
            j += 1;
        }
        if d == 1 {
            return one;
        }
        let prev = shell_counts(d - 1);
        let squares: Vec<usize> = (0..).map(|j: usize| j * j).take_while(|&s| s <= TABLE_MAX_SQ).collect();
        let mut out = vec![0u32; TABLE_MAX_SQ + 1];
        for (k, &c) in prev.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (j, &s) in squares.iter().enumerate() {
                if k + s > TABLE_MAX_SQ {
                    break;
                }
                out[k + s] += c * if j == 0 { 1 } else { 2 };
            }
        }
        out
    })
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

// ∫_R^∞ r^n e^{-a r} dr for integer n ≥ 0.
fn upper_gamma_integral(n: u32, a: f64, r: f64) -> f64 {
    let nf = factorial(n);
    let mut s = 0.0;
    for k in 0..=n {
        s += nf / factorial(k) * r.powi(k as i32) / a.powi((n - k + 1) as i32);
    }
    (-a * r).exp() * s
}

fn surface(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// `Σ_{m∈Z^d} ‖m‖^p e^{-a‖m‖}` for `p ∈ {0, 1}`.
///
/// In one dimension and for the ℓ¹ norm closed forms are used. Otherwise shells
/// with `‖m‖² ≤ 160000` are summed exactly and the remainder is replaced by the
/// continuum integral, which is negligible unless `a` is small.
pub fn radial_sum(d: usize, p: u32, a: f64, norm: SiteNorm) -> f64 {
    assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
    assert!(a > 0.0, "decay rate must be positive");
    if norm == SiteNorm::L1 || d == 1 {
        return l1_sum(d, p, a);
    }
    let counts = shell_counts(d);
    let mut s = 0.0;
    for (k, &c) in counts.iter().enumerate().skip(1) {
        if c == 0 {
            continue;
        }
        let r = (k as f64).sqrt();
        let term = f64::from(c) * r.powi(p as i32) * (-a * r).exp();
        s += term;
        if a * r > 745.0 {
            break;
        }
    }
    if p == 0 {
        s += 1.0;
    }
    // The continuum starts at the radius whose ball volume equals the number of
    // tabulated points, which removes the leading boundary bias.
    let inside: f64 = counts.iter().map(|&c| f64::from(c)).sum();
    let r_eff = match d {
        2 => (inside / PI).sqrt(),
        _ => (3.0 * inside / (4.0 * PI)).cbrt(),
    };
    s + surface(d) * upper_gamma_integral(p + d as u32 - 1, a, r_eff)
}

// Closed forms for the ℓ¹ norm via Σ_{m∈Z} e^{-a|m|} = coth(a/2).
fn l1_sum(d: usize, p: u32, a: f64) -> f64 {
    let c = 1.0 / (0.5 * a).tanh();
    let dc = 0.5 / (0.5 * a).sinh().powi(2);
    match p {
        0 => c.powi(d as i32),
        1 => d as f64 * c.powi(d as i32 - 1) * dc,
        _ => panic!("only p = 0 and p = 1 are supported"),
    }
}

/// `S₀(a) = Σ_{m∈Z^d} e^{-a‖m‖}`.
pub fn s0(d: usize, a: f64, norm: SiteNorm) -> f64 {
    radial_sum(d, 0, a, norm)
}

/// `S₁(a) = Σ_{m∈Z^d} ‖m‖ e^{-a‖m‖}`.
pub fn s1(d: usize, a: f64, norm: SiteNorm) -> f64 {
    radial_sum(d, 1, a, norm)
}
