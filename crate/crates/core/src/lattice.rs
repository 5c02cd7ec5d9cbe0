//! Finite windows of the integer lattice and distance-to-lattice geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Domain;

/// A point of R³.
pub type Point3 = [f64; 3];

/// A lattice site; coordinates beyond the window dimension are zero.
pub type Site = [i64; 3];

/// Norm used for distances between lattice sites.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteNorm {
    #[default]
    Euclidean,
    L1,
}

impl SiteNorm {
    pub fn distance(self, a: &Site, b: &Site) -> f64 {
        match self {
            SiteNorm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| ((x - y) as f64).powi(2))
                .sum::<f64>()
                .sqrt(),
            SiteNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum(),
        }
    }
}

/// The sites `{n ∈ Z^d : |n|_∞ ≤ L}` in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    half_width: usize,
    dim: usize,
}

impl LatticeWindow {
    pub fn new(half_width: usize, dim: usize) -> Result<Self> {
        if half_width == 0 {
            return Err(Error::InvalidParameter("window half-width must be positive".into()));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in 1..=3")));
        }
        Ok(Self { half_width, dim })
    }

    pub fn cube(half_width: usize) -> Result<Self> {
        Self::new(half_width, 3)
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn count(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn site(&self, index: usize) -> Site {
        assert!(index < self.count(), "site index {index} out of range");
        let side = self.side();
        let l = self.half_width as i64;
        let mut out = [0i64; 3];
        let mut rem = index;
        for k in (0..self.dim).rev() {
            out[k] = (rem % side) as i64 - l;
            rem /= side;
        }
        out
    }

    pub fn index_of(&self, site: &Site) -> Option<usize> {
        let l = self.half_width as i64;
        let side = self.side();
        let mut idx = 0usize;
        for (k, &c) in site.iter().enumerate() {
            if k >= self.dim {
                if c != 0 {
                    return None;
                }
                continue;
            }
            if c.abs() > l {
                return None;
            }
            idx = idx * side + (c + l) as usize;
        }
        Some(idx)
    }

    pub fn sites(&self) -> Vec<Site> {
        (0..self.count()).map(|i| self.site(i)).collect()
    }

    /// ℓ∞ distance from the site to the complement of the window.
    pub fn depth(&self, site: &Site) -> i64 {
        let l = self.half_width as i64;
        site[..self.dim].iter().map(|c| l - c.abs()).min().unwrap_or(0)
    }
}

pub fn site_point(site: &Site) -> Point3 {
    [site[0] as f64, site[1] as f64, site[2] as f64]
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Nearest lattice point, ties resolved to the even integer.
pub fn nearest_site(x: &Point3) -> Site {
    [
        x[0].round_ties_even() as i64,
        x[1].round_ties_even() as i64,
        x[2].round_ties_even() as i64,
    ]
}

/// Euclidean distance from `x` to Z³.
pub fn dist_to_lattice(x: &Point3) -> f64 {
    let n = nearest_site(x);
    distance(x, &site_point(&n))
}

/// The unit cube `m + [-1/2, 1/2]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellBox {
    pub lo: Point3,
    pub hi: Point3,
}

impl CellBox {
    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.hi[k] - self.lo[k]).product()
    }

    pub fn center(&self) -> Point3 {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    pub fn domain(&self) -> Domain<'static> {
        Domain::Box {
            lo: self.lo.to_vec(),
            hi: self.hi.to_vec(),
        }
    }
}

pub fn unit_cell_domain(m: &Site) -> CellBox {
    let c = site_point(m);
    CellBox {
        lo: [c[0] - 0.5, c[1] - 0.5, c[2] - 0.5],
        hi: [c[0] + 0.5, c[1] + 0.5, c[2] + 0.5],
    }
}
