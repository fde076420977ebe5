//! Point estimation of the number of components.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, tw1_pdf, TW1_MODE};
use crate::error::{Error, Result};
use crate::matrix::{covariance_spectrum, standardize_columns, DataMatrix};
use crate::rng::{substream, tag};
use crate::subsample::{CiMethod, RankCI};

pub const DEFAULT_DELTA0: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    TwLikelihood,
    External,
}

/// One eigenvalue examined by the likelihood estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwDiagnostic {
    pub eigenvalue: f64,
    pub standardized: f64,
    pub tw_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEstimate {
    pub rank: usize,
    pub method: EstimateMethod,
    /// No eigenvalue looked like bulk; `rank` was set to the spectrum length.
    pub saturated: bool,
    pub diagnostics: Vec<TwDiagnostic>,
}

impl RankEstimate {
    pub fn external(rank: usize) -> Self {
        Self { rank, method: EstimateMethod::External, saturated: false, diagnostics: Vec::new() }
    }
}

/// Johnstone's centering and scaling for the largest eigenvalue of a white
/// Wishart matrix, divided by `n` to match `X Xᵀ / n`.
pub fn tw_center_scale(n: usize, p: usize) -> (f64, f64) {
    let a = ((n - 1) as f64).sqrt();
    let b = (p as f64).sqrt();
    let center = (a + b).powi(2) / n as f64;
    let scale = (a + b) * (1.0 / a + 1.0 / b).cbrt() / n as f64;
    (center, scale)
}

/// Tracy–Widom likelihood estimator.
///
/// Columns are standardized, the covariance eigenvalues are put on the TW₁
/// scale, and eigenvalues are walked from the largest down. An eigenvalue
/// counts as a spike while it sits in the far right tail, i.e. its TW₁
/// density is below `delta0` and it lies right of the TW₁ bulk. The estimate
/// is the number of leading spikes.
pub fn tw_likelihood_rank(m: &DataMatrix, delta0: f64) -> Result<RankEstimate> {
    if m.n_rows() < 2 || m.n_cols() < 2 {
        return Err(Error::dim(format!(
            "likelihood estimator needs at least 2x2 data, got {}x{}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    if !(delta0 > 0.0) {
        return Err(Error::invalid(format!("delta0 must be positive, got {delta0}")));
    }
    rank_standardized(&standardize_columns(m)?, delta0)
}

/// [`tw_likelihood_rank`] on data whose columns are already standardized.
pub(crate) fn rank_standardized(s: &DataMatrix, delta0: f64) -> Result<RankEstimate> {
    let spectrum = covariance_spectrum(s)?;
    let (center, scale) = tw_center_scale(s.n_rows(), s.n_cols());
    let mut diagnostics = Vec::new();
    for (k, &l) in spectrum.eigenvalues.iter().enumerate() {
        let x = (l - center) / scale;
        let d = tw1_pdf(x);
        diagnostics.push(TwDiagnostic { eigenvalue: l, standardized: x, tw_density: d });
        // Left of the TW mode an eigenvalue can never be a spike, even where
        // the density underflows.
        if d >= delta0 || x <= TW1_MODE {
            return Ok(RankEstimate { rank: k, method: EstimateMethod::TwLikelihood, saturated: false, diagnostics });
        }
    }
    Ok(RankEstimate { rank: spectrum.len(), method: EstimateMethod::TwLikelihood, saturated: true, diagnostics })
}

/// Settings for the row-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Bootstrap replicates averaged into one point estimate.
    pub resamples: usize,
    /// Independent repetitions of the averaged estimate.
    pub outer: usize,
    pub delta0: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 50, outer: 30, delta0: DEFAULT_DELTA0, seed: 0 }
    }
}

/// The α-independent part of the bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapFit {
    pub k_means: Vec<f64>,
    pub point: f64,
    pub sd: f64,
}

impl BootstrapFit {
    /// `[⌊r̄ + z_{α/2} s⌋, ⌊r̄ + z_{1−α/2} s⌋]`, clamped at zero.
    pub fn rank_ci(&self, alpha: f64) -> Result<RankCI> {
        check_alpha(alpha)?;
        let lo = (self.point + normal_quantile(alpha / 2.0)? * self.sd).floor() as i64;
        let hi = (self.point + normal_quantile(1.0 - alpha / 2.0)? * self.sd).floor() as i64;
        Ok(RankCI {
            method: CiMethod::Bootstrap,
            lower: lo.max(0) as usize,
            upper: hi.max(0) as usize,
            raw_lower: lo,
            raw_upper: hi,
            alpha,
            beta_selected: None,
            r0_used: None,
            k_means: self.k_means.clone(),
            point: self.point,
            sd: self.sd,
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn resample_rows(m: &DataMatrix, rng: &mut impl Rng) -> Result<DataMatrix> {
    let n = m.n_rows();
    let mut values = Vec::with_capacity(m.values().len());
    for _ in 0..n {
        values.extend_from_slice(m.row(rng.random_range(0..n)));
    }
    DataMatrix::new(n, m.n_cols(), values)
}

/// Runs the `outer × resamples` bootstrap grid. Each replicate draws rows
/// with replacement from substream `(seed, k, j)`.
pub fn nb_fit(m: &DataMatrix, cfg: &BootstrapConfig) -> Result<BootstrapFit> {
    if m.n_rows() < 2 {
        return Err(Error::dim("bootstrap needs at least 2 rows"));
    }
    if cfg.resamples < 2 || cfg.outer < 2 {
        return Err(Error::invalid(format!(
            "bootstrap needs M >= 2 and K >= 2, got M = {}, K = {}",
            cfg.resamples, cfg.outer
        )));
    }
    let (mm, kk) = (cfg.resamples, cfg.outer);
    let ranks: Vec<usize> = (0..kk * mm)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(cfg.seed, &[tag::BOOTSTRAP, (t / mm) as u64, (t % mm) as u64]);
            let sample = resample_rows(m, &mut rng)?;
            Ok(tw_likelihood_rank(&sample, cfg.delta0)?.rank)
        })
        .collect::<Result<_>>()?;

    let k_means: Vec<f64> = ranks.chunks(mm).map(|c| c.iter().sum::<usize>() as f64 / mm as f64).collect();
    let point = k_means.iter().sum::<f64>() / kk as f64;
    let sd = (k_means.iter().map(|v| (v - point).powi(2)).sum::<f64>() / (kk - 1) as f64).sqrt();
    Ok(BootstrapFit { k_means, point, sd })
}

/// Non-parametric row-bootstrap interval for the number of components.
pub fn nb_rank_ci(m: &DataMatrix, alpha: f64, resamples: usize, outer: usize, seed: u64) -> Result<RankCI> {
    check_alpha(alpha)?;
    let cfg = BootstrapConfig { resamples, outer, seed, ..Default::default() };
    nb_fit(m, &cfg)?.rank_ci(alpha)
}
