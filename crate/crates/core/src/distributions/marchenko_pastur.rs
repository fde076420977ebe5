use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

/// Marchenko–Pastur law with aspect ratio `γ ∈ (0, 1]` and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub gamma: f64,
    pub lower_edge: f64,
    pub upper_edge: f64,
}

impl MpLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("Marchenko-Pastur aspect ratio must lie in (0, 1], got {gamma}")));
        }
        let s = gamma.sqrt();
        Ok(Self { gamma, lower_edge: (1.0 - s).powi(2), upper_edge: (1.0 + s).powi(2) })
    }

    /// `λ(t) = a + (b − a) sin²t` maps `[0, π/2]` onto the support and
    /// cancels both square-root edge singularities of the density.
    fn substituted_density(&self, t: f64) -> (f64, f64) {
        let (a, b) = (self.lower_edge, self.upper_edge);
        let (s, c) = t.sin_cos();
        let lambda = a + (b - a) * s * s;
        // f(λ) dλ = (b − a)² sin²t cos²t / (π γ λ) dt
        let w = (b - a) * (b - a) * s * s * c * c / (PI * self.gamma * lambda);
        (lambda, if lambda > 0.0 { w } else { 0.0 })
    }
}

pub fn mp_pdf(x: f64, law: &MpLaw) -> f64 {
    let (a, b) = (law.lower_edge, law.upper_edge);
    if x <= a || x >= b || x <= 0.0 {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * PI * law.gamma * x)
}

/// `∫ (rho − λ)^(−power) dF_γ(λ)` for `rho` above the upper edge.
pub fn mp_functional(power: u32, rho: f64, law: &MpLaw) -> Result<f64> {
    if power == 0 {
        return Ok(1.0);
    }
    if !(rho > law.upper_edge) {
        return Err(Error::invalid(format!("rho = {rho} must exceed the upper edge {}", law.upper_edge)));
    }
    let tol = Tolerance { abs: 0.0, rel: 1e-11, max_intervals: 4000 };
    let r = integrate(
        |t| {
            let (lambda, w) = law.substituted_density(t);
            w * (rho - lambda).powi(-(power as i32))
        },
        0.0,
        FRAC_PI_2,
        tol,
    )?;
    Ok(r.value)
}
