use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnergyPoint, GammaSystem};
use crate::error::{Error, Result};
use crate::lattice::{site_point, Point3, Site, SiteNorm};
use crate::decay::mu_star;
use crate::numerics::{fit_exponential_decay, gauss_legendre, DecayFit, QuadratureSpec};

/// Product rule on the unit cube split into six pyramids with apex at the
/// center. In pyramid coordinates `x = c + (t/2)(±e_a + u e_b + v e_c)` the
/// Jacobian `t²/8` cancels a `1/|x - c|` singularity at the apex.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRule {
    /// Offsets from the cell center with weights; weights sum to 1.
    pub nodes: Vec<(Point3, f64)>,
}

impl CellRule {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(6 * order.pow(3));
        for axis in 0..3 {
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            for sign in [1.0, -1.0] {
                for (ti, wt) in x.iter().zip(&w) {
                    let t = 0.5 * (ti + 1.0);
                    let jt = 0.5 * wt * t * t / 8.0;
                    for (u, wu) in x.iter().zip(&w) {
                        for (v, wv) in x.iter().zip(&w) {
                            let mut p = [0.0; 3];
                            p[axis] = 0.5 * t * sign;
                            p[b] = 0.5 * t * u;
                            p[c] = 0.5 * t * v;
                            nodes.push((p, jt * wu * wv));
                        }
                    }
                }
            }
        }
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points_in(&self, cell: &Site) -> Vec<Point3> {
        let c = site_point(cell);
        self.nodes
            .iter()
            .map(|(p, _)| [c[0] + p[0], c[1] + p[1], c[2] + p[2]])
            .collect()
    }
}

fn averaged_with(rule: &CellRule, m: &Site, n: &Site, system: &GammaSystem) -> Result<f64> {
    let xs = rule.points_in(m);
    let ys = rule.points_in(n);
    let block = system.green_block(&xs, &ys)?;
    let rows: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .map(|a| {
            (0..ys.len())
                .map(|b| block[(a, b)].norm() * rule.nodes[b].1)
                .sum::<f64>()
                * rule.nodes[a].1
        })
        .collect();
    Ok(rows.into_iter().sum())
}

/// `∬_{C₀×C₀} |G_ω(x + m, y + n; z)| dx dy` with an error estimate.
///
/// The rule order is `spec.order`; the error is the difference to the rule of
/// order `spec.order - 2`. On failure the order is raised by 2, at most three
/// times.
pub fn cell_averaged_green(m: &Site, n: &Site, system: &GammaSystem, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    if m == n {
        return Err(Error::InvalidParameter("cell averages need distinct cells".into()));
    }
    let mut order = spec.order.max(3);
    let mut coarse = averaged_with(&CellRule::new(order - 2), m, n, system)?;
    let mut err = f64::INFINITY;
    for _ in 0..=3 {
        let fine = averaged_with(&CellRule::new(order), m, n, system)?;
        err = (fine - coarse).abs();
        if err <= spec.tolerance {
            return Ok((fine, err));
        }
        coarse = fine;
        order += 2;
    }
    Err(Error::NonConvergence {
        estimated_error: err,
        tolerance: spec.tolerance,
    })
}

/// Cell averages for several pairs with a fixed rule order (no refinement).
pub fn cell_averaged_green_batch(pairs: &[(Site, Site)], system: &GammaSystem, order: usize) -> Result<Vec<f64>> {
    let rule = CellRule::new(order);
    pairs
        .iter()
        .map(|(m, n)| {
            if m == n {
                return Err(Error::InvalidParameter("cell averages need distinct cells".into()));
            }
            averaged_with(&rule, m, n, system)
        })
        .collect()
}

/// `(2π e^{τ/2})² e^{-τ(|n - m| - √3)}`: product of two single-cell averaged
/// free bounds, shifted by the cell diameter.
pub fn free_cell_average_envelope(m: &Site, n: &Site, z: &EnergyPoint) -> f64 {
    let tau = z.tau();
    let d = SiteNorm::Euclidean.distance(m, n);
    (2.0 * PI * (0.5 * tau).exp()).powi(2) * (-tau * (d - 3f64.sqrt())).exp()
}

/// Ray layout and acceptance thresholds for [`combes_thomas_fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtFitSpec {
    pub min_distance: i64,
    pub max_distance: i64,
    /// Transverse offsets of the rays; every offset is used along each axis.
    pub offsets: Vec<[i64; 2]>,
    pub order: usize,
    pub min_r_squared: f64,
    /// Fitted rate must reach this fraction of `min(τ, μ*)`.
    pub rate_fraction: f64,
}

impl Default for CtFitSpec {
    fn default() -> Self {
        Self {
            min_distance: 2,
            max_distance: 8,
            offsets: vec![[0, 0], [2, -2], [-2, 2], [2, 2]],
            order: 4,
            min_r_squared: 0.98,
            rate_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtPoint {
    pub distance: f64,
    /// Geometric mean of the cell averages over all rays.
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtFitReport {
    #[serde(rename = "E")]
    pub e: f64,
    pub kappa: f64,
    pub tau: f64,
    pub mu_star: f64,
    pub rate_floor: f64,
    pub rays: usize,
    pub fit: DecayFit,
    pub points: Vec<CtPoint>,
    pub pass: bool,
}

/// Log-linear fit of cell-averaged `|G_ω|` against the cell distance.
///
/// Rays run along the three axes, starting at `-⌈max_distance/2⌉` so that
/// they are centered in the window; the per-distance value is the geometric
/// mean over rays. `μ*` uses `ρ = ‖Γ⁻¹‖`, `C0 = 1/(4π)` and `γ = τ(z)`.
pub fn combes_thomas_fit(system: &GammaSystem, spec: &CtFitSpec) -> Result<CtFitReport> {
    if spec.min_distance < 1 || spec.max_distance < spec.min_distance + 2 || spec.offsets.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need at least three distances >= 1 and one ray, got {}..={}",
            spec.min_distance, spec.max_distance
        )));
    }
    let start = -(spec.max_distance + 1) / 2;
    let half = system.config().window().half_width() as i64;
    let reach = spec.offsets.iter().flat_map(|o| [o[0].abs(), o[1].abs()]).max().unwrap_or(0);
    if -start > half || start + spec.max_distance > half || reach > half {
        return Err(Error::InvalidParameter(format!(
            "rays of length {} do not fit in a window of half-width {half}",
            spec.max_distance
        )));
    }
    let mut starts = Vec::new();
    for axis in 0..3 {
        for off in &spec.offsets {
            let mut m = [0i64; 3];
            m[axis] = start;
            m[(axis + 1) % 3] = off[0];
            m[(axis + 2) % 3] = off[1];
            starts.push((axis, m));
        }
    }
    let mut pairs = Vec::new();
    for d in spec.min_distance..=spec.max_distance {
        for (axis, m) in &starts {
            let mut n = *m;
            n[*axis] += d;
            pairs.push((*m, n));
        }
    }
    let values = cell_averaged_green_batch(&pairs, system, spec.order)?;
    let k = starts.len();
    let points: Vec<CtPoint> = values
        .chunks(k)
        .zip(spec.min_distance..)
        .map(|(chunk, d)| {
            let log_mean = chunk.iter().map(|v| v.ln()).sum::<f64>() / k as f64;
            CtPoint {
                distance: d as f64,
                value: log_mean.exp(),
                min: chunk.iter().copied().fold(f64::INFINITY, f64::min),
                max: chunk.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let fit = fit_exponential_decay(&points.iter().map(|p| (p.distance, p.value)).collect::<Vec<_>>())?;
    let energy = system.energy();
    let tau = energy.tau();
    let mu = if system.dim() == 0 {
        tau
    } else {
        mu_star(system.inverse_norm(), tau, 1.0 / (4.0 * PI), 3, SiteNorm::Euclidean)?
    };
    let rate_floor = spec.rate_fraction * tau.min(mu);
    let pass = fit.rate > 0.0 && fit.r_squared >= spec.min_r_squared && fit.rate >= rate_floor;
    Ok(CtFitReport {
        e: energy.e(),
        kappa: energy.kappa(),
        tau,
        mu_star: mu,
        rate_floor,
        rays: k,
        fit,
        points,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_rule_integrates_polynomials_and_inverse_radius() {
        let rule = CellRule::new(5);
        let vol: f64 = rule.nodes.iter().map(|n| n.1).sum();
        assert!((vol - 1.0).abs() < 1e-14);
        let x2: f64 = rule.nodes.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((x2 - 1.0 / 12.0).abs() < 1e-14);
        // ∫_{cube} 1/|x| dx; the pyramid map turns it into a smooth integrand
        let inv = |r: &CellRule| -> f64 {
            r.nodes
                .iter()
                .map(|(p, w)| w / (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
                .sum()
        };
        assert!((inv(&CellRule::new(12)) - inv(&CellRule::new(24))).abs() < 1e-9);
    }
}
