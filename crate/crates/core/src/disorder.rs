//! Seeded iid coupling constants on a lattice window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeWindow, Site};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityShape {
    #[default]
    Uniform,
    /// Density proportional to (1 - ξ²)² on the rescaled support ξ ∈ [-1, 1].
    TruncatedBump,
}

/// Couplings drawn from a density on [-b, -a]; each site is removed from the
/// active set with probability `p0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    a: f64,
    b: f64,
    shape: DensityShape,
    p0: f64,
}

impl DisorderSpec {
    pub fn new(a: f64, b: f64, shape: DensityShape, p0: f64) -> Result<Self> {
        if !(a > 0.0 && a < b && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coupling support needs 0 < a < b < inf, got a = {a}, b = {b}"
            )));
        }
        if !(0.0..1.0).contains(&p0) {
            return Err(Error::InvalidParameter(format!("inactive fraction {p0} not in [0, 1)")));
        }
        Ok(Self { a, b, shape, p0 })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, DensityShape::Uniform, 0.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn shape(&self) -> DensityShape {
        self.shape
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    fn draw_site(&self, seed: u64, index: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        if self.p0 > 0.0 && rng.random::<f64>() < self.p0 {
            return 0.0;
        }
        match self.shape {
            DensityShape::Uniform => -self.b + (self.b - self.a) * rng.random::<f64>(),
            DensityShape::TruncatedBump => {
                let mid = -0.5 * (self.a + self.b);
                let half = 0.5 * (self.b - self.a);
                loop {
                    let xi: f64 = rng.random_range(-1.0..1.0);
                    let accept = (1.0 - xi * xi).powi(2);
                    if rng.random::<f64>() < accept {
                        return mid + half * xi;
                    }
                }
            }
        }
    }
}

/// Couplings on a window; sites with ω = 0 are inactive.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderConfig {
    window: LatticeWindow,
    omega: Vec<f64>,
    seed: u64,
    a: f64,
    b: f64,
    p0: f64,
}

#[derive(Serialize, Deserialize)]
struct ConfigJson {
    seed: u64,
    a: f64,
    b: f64,
    p0: f64,
    #[serde(rename = "L")]
    l: usize,
    omega: Vec<f64>,
}

/// Draws a configuration. Each site uses its own counter-based stream, so the
/// result does not depend on evaluation order or the number of workers.
pub fn sample(spec: &DisorderSpec, window: LatticeWindow, seed: u64) -> DisorderConfig {
    let omega: Vec<f64> = (0..window.count())
        .into_par_iter()
        .map(|i| spec.draw_site(seed, i))
        .collect();
    DisorderConfig {
        window,
        omega,
        seed,
        a: spec.a,
        b: spec.b,
        p0: spec.p0,
    }
}

/// ω_j = λ on every site of the window.
pub fn constant_config(window: LatticeWindow, lambda: f64) -> Result<DisorderConfig> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("constant coupling must be nonzero, got {lambda}")));
    }
    Ok(DisorderConfig {
        window,
        omega: vec![lambda; window.count()],
        seed: 0,
        a: -lambda,
        b: -lambda,
        p0: 0.0,
    })
}

impl DisorderConfig {
    /// Configuration with explicitly given couplings (0 marks inactive sites).
    pub fn from_omega(window: LatticeWindow, omega: Vec<f64>) -> Result<Self> {
        if omega.len() != window.count() {
            return Err(Error::DimensionMismatch(format!(
                "{} couplings for a window of {} sites",
                omega.len(),
                window.count()
            )));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("couplings must be finite".into()));
        }
        let active: Vec<f64> = omega.iter().copied().filter(|w| *w != 0.0).collect();
        let a = active.iter().map(|w| -w).fold(f64::INFINITY, f64::min);
        let b = active.iter().map(|w| -w).fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = if active.is_empty() { (0.0, 0.0) } else { (a, b) };
        Ok(Self {
            window,
            omega,
            seed: 0,
            a,
            b,
            p0: 0.0,
        })
    }

    /// All sites inactive.
    pub fn empty(window: LatticeWindow) -> Self {
        Self::from_omega(window, vec![0.0; window.count()]).expect("sizes match")
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Window indices of the active sites, in enumeration order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.omega.len()).filter(|&i| self.omega[i] != 0.0).collect()
    }

    pub fn active_sites(&self) -> Vec<Site> {
        self.active_indices().into_iter().map(|i| self.window.site(i)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.omega.iter().filter(|w| **w != 0.0).count()
    }

    pub fn active_fraction(&self) -> f64 {
        self.active_count() as f64 / self.omega.len() as f64
    }

    /// Copy with the site at `index` removed from the active set.
    pub fn deactivated(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.omega[index] = 0.0;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ConfigJson {
            seed: self.seed,
            a: self.a,
            b: self.b,
            p0: self.p0,
            l: self.window.half_width(),
            omega: self.omega.clone(),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ConfigJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("config JSON: {e}")))?;
        let window = LatticeWindow::cube(j.l)?;
        let mut cfg = Self::from_omega(window, j.omega)?;
        cfg.seed = j.seed;
        cfg.a = j.a;
        cfg.b = j.b;
        cfg.p0 = j.p0;
        Ok(cfg)
    }
}
