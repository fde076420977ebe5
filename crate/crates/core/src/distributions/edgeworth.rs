use serde::{Deserialize, Serialize};

use super::normal::normal_pdf;
use crate::error::{Error, Result};

/// Coefficients of the first-order Edgeworth polynomial for one spike.
///
/// `mu_term` is the Bai–Silverstein centering term; it has no closed form
/// here and defaults to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthCoefficients {
    pub kappa2: f64,
    pub kappa3: f64,
    pub mu_term: f64,
    pub rho_center: f64,
}

/// `p₁(x) = κ₃ (1 − x²) / (6 κ₂^{3/2}) − μ / κ₂^{1/2}`.
pub fn edgeworth_p1(x: f64, c: &EdgeworthCoefficients) -> Result<f64> {
    if !(c.kappa2 > 0.0) {
        return Err(Error::invalid(format!("kappa2 must be positive, got {}", c.kappa2)));
    }
    let skew = c.kappa3 * (1.0 - x * x) / (6.0 * c.kappa2.powf(1.5));
    Ok(skew - c.mu_term / c.kappa2.sqrt())
}

/// `φ(x)(1 + p₁(x)/√n)`, clipped at zero where the correction dips negative.
pub fn edgeworth_density(x: f64, c: &EdgeworthCoefficients, n: usize) -> Result<f64> {
    let p1 = edgeworth_p1(x, c)?;
    Ok((normal_pdf(x) * (1.0 + p1 / (n as f64).sqrt())).max(0.0))
}
