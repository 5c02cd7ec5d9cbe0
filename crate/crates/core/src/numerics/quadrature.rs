use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on [a, b] as (node, weight) pairs.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    composite_from(&x, &w, a, b, panels)
}

fn composite_from(x: &[f64], w: &[f64], a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * x.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(w) {
            out.push((mid + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

/// Tail bound callback for improper integrals: returns a bound on the
/// magnitude of the integral beyond the truncation radius.
pub type TailBound<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Starting number of panels per axis.
    pub panels: usize,
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Absolute tolerance certified by panel doubling.
    pub tolerance: f64,
    /// Truncation radius for improper domains.
    pub truncation_radius: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panels: 2,
            order: 16,
            tolerance: 1e-8,
            truncation_radius: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

pub enum Domain<'a> {
    /// Axis-aligned box in 1 to 3 dimensions.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Ball (interval, disk or solid ball) in 1 to 3 dimensions.
    Ball { center: Vec<f64>, radius: f64 },
    /// [start, ∞) in one dimension, truncated at the spec's radius with the
    /// supplied tail bound added to the error estimate.
    HalfLine { start: f64, tail: TailBound<'a> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
}

const MAX_DOUBLINGS: usize = 3;

/// Integrates `f` over `domain`, certifying the result by panel doubling.
pub fn integrate<F>(f: F, domain: &Domain, spec: &QuadratureSpec) -> Result<Integral>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    if spec.panels == 0 || spec.order == 0 || !(spec.tolerance > 0.0) {
        return Err(Error::InvalidParameter(
            "quadrature spec needs positive panels, order and tolerance".into(),
        ));
    }
    let (gx, gw) = gauss_legendre(spec.order);
    let tail = match domain {
        Domain::HalfLine { start, tail } => {
            let r = spec.truncation_radius.ok_or_else(|| {
                Error::InvalidParameter("half-line integral needs a truncation radius".into())
            })?;
            if !(r > *start) {
                return Err(Error::InvalidParameter(format!(
                    "truncation radius {r} must exceed the start {start}"
                )));
            }
            tail(r).abs()
        }
        _ => 0.0,
    };
    let eval = |panels: usize| -> Result<Complex64> { evaluate(&f, domain, spec, &gx, &gw, panels) };
    let mut panels = spec.panels;
    let mut prev = eval(panels)?;
    let mut err = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let cur = eval(panels)?;
        err = (cur - prev).norm() + tail;
        if err <= spec.tolerance {
            return Ok(Integral {
                value: cur,
                error: err,
                panels,
            });
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        estimated_error: err,
        tolerance: spec.tolerance,
    })
}

fn evaluate<F>(
    f: &F,
    domain: &Domain,
    spec: &QuadratureSpec,
    gx: &[f64],
    gw: &[f64],
    panels: usize,
) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    match domain {
        Domain::Box { lo, hi } => {
            if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
                return Err(Error::InvalidParameter("box must have 1 to 3 matching axes".into()));
            }
            let axes: Vec<Vec<(f64, f64)>> = lo
                .iter()
                .zip(hi)
                .map(|(a, b)| composite_from(gx, gw, *a, *b, panels))
                .collect();
            Ok(tensor_sum(&axes, |x| f(x)))
        }
        Domain::Ball { center, radius } => {
            let d = center.len();
            if d == 0 || d > 3 || !(*radius > 0.0) {
                return Err(Error::InvalidParameter("ball needs 1 to 3 dims and positive radius".into()));
            }
            let c = center.clone();
            match d {
                1 => {
                    let axes = vec![composite_from(gx, gw, c[0] - radius, c[0] + radius, panels)];
                    Ok(tensor_sum(&axes, |x| f(x)))
                }
                2 => {
                    let axes = vec![
                        composite_from(gx, gw, 0.0, *radius, panels),
                        composite_from(gx, gw, 0.0, 2.0 * PI, panels),
                    ];
                    Ok(tensor_sum(&axes, |p| {
                        let (r, t) = (p[0], p[1]);
                        f(&[c[0] + r * t.cos(), c[1] + r * t.sin()]) * r
                    }))
                }
                _ => {
                    let axes = vec![
                        composite_from(gx, gw, 0.0, *radius, panels),
                        composite_from(gx, gw, -1.0, 1.0, panels),
                        composite_from(gx, gw, 0.0, 2.0 * PI, panels),
                    ];
                    Ok(tensor_sum(&axes, |p| {
                        let (r, ct, ph) = (p[0], p[1], p[2]);
                        let st = (1.0 - ct * ct).max(0.0).sqrt();
                        let x = [
                            c[0] + r * st * ph.cos(),
                            c[1] + r * st * ph.sin(),
                            c[2] + r * ct,
                        ];
                        f(&x) * (r * r)
                    }))
                }
            }
        }
        Domain::HalfLine { start, .. } => {
            let r = spec.truncation_radius.unwrap_or(*start + 1.0);
            // uniform panels in t = ln(1 + x - start)
            let tmax = (1.0 + r - start).ln();
            let axes = vec![composite_from(gx, gw, 0.0, tmax, panels)];
            let s = *start;
            Ok(tensor_sum(&axes, |t| {
                let e = t[0].exp();
                f(&[s + e - 1.0]) * e
            }))
        }
    }
}

// Tensor-product sum; the outermost axis is split across workers and reduced
// in index order so the result does not depend on scheduling.
fn tensor_sum<G>(axes: &[Vec<(f64, f64)>], g: G) -> Complex64
where
    G: Fn(&[f64]) -> Complex64 + Sync,
{
    let partial: Vec<Complex64> = axes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut acc = Complex64::new(0.0, 0.0);
            match axes.len() {
                1 => acc += g(&[x0]) * w0,
                2 => {
                    for &(x1, w1) in &axes[1] {
                        acc += g(&[x0, x1]) * (w0 * w1);
                    }
                }
                _ => {
                    for &(x1, w1) in &axes[1] {
                        for &(x2, w2) in &axes[2] {
                            acc += g(&[x0, x1, x2]) * (w0 * w1 * w2);
                        }
                    }
                }
            }
            acc
        })
        .collect();
    partial.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "order {n}");
            // exact for degree 2n-1
            let deg = 2 * n - 2;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "order {n}");
        }
    }

    #[test]
    fn unit_interval_square() {
        let dom = Domain::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        };
        let r = integrate(|x| Complex64::new(x[0] * x[0], 0.0), &dom, &QuadratureSpec::default()).unwrap();
        assert!((r.value.re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn small_ball_volume() {
        let dom = Domain::Ball {
            center: vec![0.3, -1.0, 2.0],
            radius: 0.2,
        };
        let r = integrate(|_| Complex64::new(1.0, 0.0), &dom, &QuadratureSpec::default()).unwrap();
        let exact = 4.0 * PI / 3.0 * 0.008;
        assert!((r.value.re - exact).abs() < 1e-14);
        assert!((exact - 0.03351).abs() < 1e-5);
    }

    #[test]
    fn non_convergence_is_reported() {
        let dom = Domain::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        };
        let spec = QuadratureSpec {
            panels: 1,
            order: 2,
            tolerance: 1e-14,
            truncation_radius: None,
        };
        let r = integrate(|x| Complex64::new((200.0 * x[0]).sin(), 0.0), &dom, &spec);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }
}
