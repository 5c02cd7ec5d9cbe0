use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::principal_sqrt;

/// Spectral parameter `z = E + iκ` with `√z` on the `Im ≥ 0` branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPoint {
    e: f64,
    kappa: f64,
    sqrt_z: Complex64,
}

impl EnergyPoint {
    /// Upper half-plane point; requires `κ > 0`.
    pub fn new(e: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !e.is_finite() || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "energy point needs finite E and κ > 0, got E = {e}, κ = {kappa}"
            )));
        }
        Ok(Self::from_parts(e, kappa))
    }

    /// Any non-real `z`. Lower half-plane points are only meant for symmetry
    /// diagnostics.
    pub fn from_z(z: Complex64) -> Result<Self> {
        if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::InvalidParameter(format!("z = {z} must be finite and non-real")));
        }
        Ok(Self::from_parts(z.re, z.im))
    }

    fn from_parts(e: f64, kappa: f64) -> Self {
        Self {
            e,
            kappa,
            sqrt_z: principal_sqrt(Complex64::new(e, kappa)),
        }
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.kappa)
    }

    pub fn sqrt_z(&self) -> Complex64 {
        self.sqrt_z
    }

    /// `e(z) = √z / (4π)`.
    pub fn e_z(&self) -> Complex64 {
        self.sqrt_z / (4.0 * PI)
    }

    /// `τ(z) = Im √z`.
    pub fn tau(&self) -> f64 {
        self.sqrt_z.im
    }

    pub fn conj(&self) -> Self {
        Self::from_parts(self.e, -self.kappa)
    }

    pub fn shifted(&self, dz: Complex64) -> Result<Self> {
        Self::from_z(self.z() + dz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_at_i() {
        let z = EnergyPoint::new(0.0, 1.0).unwrap();
        assert!((z.tau() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(EnergyPoint::new(1.0, 0.0).is_err());
        assert!(EnergyPoint::new(1.0, -1.0).is_err());
        assert!(z.conj().tau() > 0.0);
    }
}
