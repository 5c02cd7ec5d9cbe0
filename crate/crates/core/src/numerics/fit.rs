use crate::error::{Error, Result};

/// Magnitudes at or below this value are discarded before taking logs.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Least-squares fit of `ln m = log_amplitude - rate * d`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecayFit {
    pub log_amplitude: f64,
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn amplitude(&self) -> f64 {
        self.log_amplitude.exp()
    }
}

/// Fits an exponential decay to (distance, magnitude) pairs.
///
/// Constant data yields rate 0 and, by convention, `r_squared = 0`.
pub fn fit_exponential_decay(pairs: &[(f64, f64)]) -> Result<DecayFit> {
    for &(d, _) in pairs {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!("distance {d} must be positive")));
        }
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(_, m)| *m > UNDERFLOW_FLOOR && m.is_finite())
        .map(|&(d, m)| (d, m.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData { usable: n });
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all distances coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // relative threshold keeps round-off in constant data from producing spurious fits
    let r_squared = if syy <= 1e-24 * (1.0 + my * my) * nf {
        0.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        log_amplitude: intercept,
        rate: -slope,
        r_squared,
        samples: n,
    })
}
