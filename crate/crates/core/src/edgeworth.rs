//! Normal approximations to the distribution of spiked eigenvalues.
//!
//! Three sources are compared: the subsampled mean and spread of the top
//! eigenvalues of random `⌊n/b⌋ × ⌊p/b⌋` submatrices, the high-dimensional
//! parametric law `ρ(l, γ) = l + γl/(l − 1)`, `σ²(l, γ) = 2l²(1 − γ/(l − 1)²)`,
//! and the classical fixed-dimension limit `N(l, 2l²/n)`.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{edgeworth_density, mp_functional, normal_cdf, EdgeworthCoefficients, MpLaw};
use crate::error::{Error, Result};
use crate::matrix::{block_spectrum, DataMatrix};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{derive_seed, substream, tag};
use crate::sim::{generate, SpikedModelSpec};
use crate::subsample::default_block_count;

/// Submatrix draws per dataset when none is given.
pub const DEFAULT_DRAWS: usize = 200;
/// Histogram bins per spike index in the comparison table.
pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproximationSource {
    Subsampled,
    Parametric,
    LowAsymptotic,
    ParametricUncentered,
    LowAsymptoticUncentered,
    Edgeworth,
}

impl ApproximationSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ApproximationSource::Subsampled => "subsampled",
            ApproximationSource::Parametric => "parametric",
            ApproximationSource::LowAsymptotic => "low_asymptotic",
            ApproximationSource::ParametricUncentered => "parametric_uncentered",
            ApproximationSource::LowAsymptoticUncentered => "low_asymptotic_uncentered",
            ApproximationSource::Edgeworth => "edgeworth",
        }
    }
}

/// Per-spike centering and scaling from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub source: ApproximationSource,
}

impl SpikeParams {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Top `r_max` covariance eigenvalues of `draws` random `⌊n/b⌋ × ⌊p/b⌋`
/// submatrices; one row per draw. Draw `d` uses substream `(seed, SPIKE, d)`.
pub fn subsample_top_eigenvalues(
    m: &DataMatrix,
    b: usize,
    draws: usize,
    r_max: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if b == 0 {
        return Err(Error::invalid("b must be positive"));
    }
    let (n, p) = (m.n_rows(), m.n_cols());
    let (n_star, p_star) = (n / b, p / b);
    if n_star < 2 || p_star < 1 {
        return Err(Error::dim(format!("{n}x{p} data is too small for b = {b}")));
    }
    if r_max > n_star.min(p_star) {
        return Err(Error::invalid(format!("r_max = {r_max} exceeds the {n_star}x{p_star} submatrix rank")));
    }
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(seed, &[tag::SPIKE, d as u64]);
            let rows = sample(&mut rng, n, n_star).into_vec();
            let cols = sample(&mut rng, p, p_star).into_vec();
            let mut ev = block_spectrum(m, &rows, &cols)?;
            ev.truncate(r_max);
            Ok(ev)
        })
        .collect()
}

fn column_mean_sd(samples: &[Vec<f64>], j: usize) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().map(|s| s[j]).sum::<f64>() / k;
    let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

fn summarize(samples: &[Vec<f64>], r_max: usize) -> SpikeParams {
    let (rho, sigma) = (0..r_max).map(|j| column_mean_sd(samples, j)).unzip();
    SpikeParams { rho, sigma, source: ApproximationSource::Subsampled }
}

/// Mean and standard deviation (divisor `M − 1`) of the `j`-th largest
/// eigenvalue over `M` random submatrices of `m`, for `j ≤ r_max`.
pub fn spike_params_subsample(m: &DataMatrix, b: usize, draws: usize, r_max: usize, seed: u64) -> Result<SpikeParams> {
    if draws < 2 {
        return Err(Error::invalid(format!("need at least 2 draws, got {draws}")));
    }
    let samples = subsample_top_eigenvalues(m, b, draws, r_max, seed)?;
    Ok(summarize(&samples, r_max))
}

/// `(ρ(l, γ), σ(l, γ))` for a population spike `l` above the detection
/// threshold `1 + √γ`.
pub fn parametric_spike_params(l: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be non-negative, got {gamma}")));
    }
    if !(l > 1.0 + gamma.sqrt()) || !l.is_finite() {
        return Err(Error::invalid(format!("spike {l} is not above the threshold 1 + sqrt({gamma})")));
    }
    let rho = l + gamma * l / (l - 1.0);
    let var = 2.0 * l * l * (1.0 - gamma / ((l - 1.0) * (l - 1.0)));
    Ok((rho, var.sqrt()))
}

/// Fixed-dimension limit: `(l, l·√(2/n))`.
pub fn low_asymptotic_params(l: f64, n: usize) -> Result<(f64, f64)> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(format!("spike must be positive, got {l}")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    Ok((l, l * (2.0 / n as f64).sqrt()))
}

/// `κ₂ = 2∫(ρ − λ)⁻² dF_γ`, `κ₃ = 8∫(ρ − λ)⁻³ dF_γ`, with the mean term
/// set to zero.
pub fn edgeworth_coefficients(rho_j: f64, gamma: f64) -> Result<EdgeworthCoefficients> {
    let law = MpLaw::new(gamma)?;
    Ok(EdgeworthCoefficients {
        kappa2: 2.0 * mp_functional(2, rho_j, &law)?,
        kappa3: 8.0 * mp_functional(3, rho_j, &law)?,
        mu_term: 0.0,
        rho_center: rho_j,
    })
}

/// One line of the flat comparison table. Bin fields are empty for rows that
/// only report `(ρ, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub spike_index: usize,
    pub source: ApproximationSource,
    pub rho: f64,
    pub sigma: f64,
    pub bin_left: Option<f64>,
    pub bin_right: Option<f64>,
    pub bin_count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationComparison {
    pub label: String,
    pub b: usize,
    pub n_star: usize,
    pub p_star: usize,
    pub draws: usize,
    pub reps: usize,
    /// Subsampled parameters of each generated dataset.
    pub replicates: Vec<SpikeParams>,
    /// Subsampled parameters pooled over all datasets.
    pub subsampled: SpikeParams,
    pub parametric: SpikeParams,
    pub low_asymptotic: SpikeParams,
    pub rows: Vec<ComparisonRow>,
}

impl ApproximationComparison {
    /// Datasets in which both competing spreads exceed the subsampled one at
    /// every spike index.
    pub fn overestimating_replicates(&self) -> usize {
        self.replicates
            .iter()
            .filter(|rep| {
                rep.sigma
                    .iter()
                    .enumerate()
                    .all(|(j, &s)| self.parametric.sigma[j] > s && self.low_asymptotic.sigma[j] > s)
            })
            .count()
    }

    pub fn to_csv(&self) -> String {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::from("spike_index,source,rho,sigma,bin_left,bin_right,bin_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.spike_index,
                r.source.as_str(),
                r.rho,
                r.sigma,
                opt(r.bin_left),
                opt(r.bin_right),
                opt(r.bin_count)
            ));
        }
        out
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect()
}

/// Generates `reps` datasets from `spec`, subsamples each `draws` times and
/// tabulates the pooled top-`r` eigenvalues against the three normal
/// approximations and the first-order Edgeworth curve.
///
/// The competing approximations use the population spike (`θ + ν²` under
/// FA, `θ` under PCA) at the full sample size. Centered rows place them at
/// the pooled subsampled mean; the `*_uncentered` rows report their own
/// centering. Expected counts are scaled to the number of pooled samples.
pub fn approximation_comparison_with(
    spec: &SpikedModelSpec,
    b: Option<usize>,
    reps: usize,
    draws: usize,
    bins: usize,
    seed: u64,
) -> Result<ApproximationComparison> {
    spec.validate()?;
    let r = spec.rank();
    if r == 0 {
        return Err(Error::invalid("the comparison needs at least one spike"));
    }
    if reps < 1 || draws < 2 || bins < 1 {
        return Err(Error::invalid("need reps >= 1, draws >= 2 and bins >= 1"));
    }
    let b = b.unwrap_or_else(|| default_block_count(spec.n_rows));
    let per_rep: Vec<Vec<Vec<f64>>> = (0..reps)
        .map(|rep| {
            let data = generate(spec, derive_seed(seed, &[tag::DATA, rep as u64]))?;
            subsample_top_eigenvalues(&data, b, draws, r, derive_seed(seed, &[tag::SPIKE, rep as u64]))
        })
        .collect::<Result<_>>()?;
    let replicates = per_rep.iter().map(|s| summarize(s, r)).collect();
    let pooled: Vec<Vec<f64>> = per_rep.into_iter().flatten().collect();
    let subsampled = summarize(&pooled, r);

    let (n, gamma) = (spec.n_rows, spec.gamma());
    let mut parametric = SpikeParams {
        rho: Vec::with_capacity(r),
        sigma: Vec::with_capacity(r),
        source: ApproximationSource::ParametricUncentered,
    };
    let mut low_asymptotic = SpikeParams {
        rho: Vec::with_capacity(r),
        sigma: Vec::with_capacity(r),
        source: ApproximationSource::LowAsymptoticUncentered,
    };
    let mut spikes = spec.population_spikes();
    spikes.sort_by(|a, b| b.total_cmp(a));
    for &l in &spikes {
        let (rho, sigma) = parametric_spike_params(l, gamma)?;
        parametric.rho.push(rho);
        parametric.sigma.push(sigma / (n as f64).sqrt());
        let (rho, sigma) = low_asymptotic_params(l, n)?;
        low_asymptotic.rho.push(rho);
        low_asymptotic.sigma.push(sigma);
    }

    let (n_star, p_star) = (spec.n_rows / b, spec.n_cols / b);
    let gamma_sub = p_star as f64 / n_star as f64;
    let total = pooled.len() as f64;
    let normal_mass = |lo: f64, hi: f64, mu: f64, s: f64| {
        if s > 0.0 {
            normal_cdf((hi - mu) / s) - normal_cdf((lo - mu) / s)
        } else {
            f64::from(u8::from(lo <= mu && mu < hi))
        }
    };

    let mut rows = Vec::new();
    for j in 0..r {
        let values: Vec<f64> = pooled.iter().map(|s| s[j]).collect();
        let hist = histogram(&values, bins);
        let (mu, s) = (subsampled.rho[j], subsampled.sigma[j]);
        let row = |source, rho, sigma, lo, hi, count| ComparisonRow {
            spike_index: j + 1,
            source,
            rho,
            sigma,
            bin_left: Some(lo),
            bin_right: Some(hi),
            bin_count: Some(count),
        };
        for &(lo, hi, c) in &hist {
            rows.push(row(ApproximationSource::Subsampled, mu, s, lo, hi, c as f64));
        }
        for (source, sigma) in [
            (ApproximationSource::Parametric, parametric.sigma[j]),
            (ApproximationSource::LowAsymptotic, low_asymptotic.sigma[j]),
        ] {
            for &(lo, hi, _) in &hist {
                rows.push(row(source, mu, sigma, lo, hi, total * normal_mass(lo, hi, mu, sigma)));
            }
        }
        for (source, params) in [
            (ApproximationSource::ParametricUncentered, &parametric),
            (ApproximationSource::LowAsymptoticUncentered, &low_asymptotic),
        ] {
            rows.push(ComparisonRow {
                spike_index: j + 1,
                source,
                rho: params.rho[j],
                sigma: params.sigma[j],
                bin_left: None,
                bin_right: None,
                bin_count: None,
            });
        }
        // The curve is only defined for a spike mean clear of the bulk edge.
        if s > 0.0 {
            if let Ok(c) = edgeworth_coefficients(mu, gamma_sub) {
                for &(lo, hi, _) in &hist {
                    let mass = integrate(
                        |x| edgeworth_density(x, &c, n_star).unwrap_or(0.0),
                        (lo - mu) / s,
                        (hi - mu) / s,
                        Tolerance { abs: 1e-10, rel: 1e-8, max_intervals: 200 },
                    )?;
                    rows.push(row(ApproximationSource::Edgeworth, mu, s, lo, hi, total * mass.value));
                }
            }
        }
    }

    parametric.source = ApproximationSource::Parametric;
    low_asymptotic.source = ApproximationSource::LowAsymptotic;
    Ok(ApproximationComparison {
        label: spec.label.clone(),
        b,
        n_star,
        p_star,
        draws,
        reps,
        replicates,
        subsampled,
        parametric,
        low_asymptotic,
        rows,
    })
}

/// [`approximation_comparison_with`] using `DEFAULT_DRAWS` submatrices per
/// dataset and `DEFAULT_BINS` bins.
pub fn approximation_comparison(
    spec: &SpikedModelSpec,
    b: usize,
    reps: usize,
    seed: u64,
) -> Result<ApproximationComparison> {
    approximation_comparison_with(spec, Some(b), reps, DEFAULT_DRAWS, DEFAULT_BINS, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ModelKind;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn parametric_examples() {
        let (rho, sigma) = parametric_spike_params(10.0, 0.2).unwrap();
        assert_abs_diff_eq!(rho, 10.22222, epsilon = 1e-5);
        assert_abs_diff_eq!(sigma * sigma, 199.50617, epsilon = 1e-5);

        let (rho, sigma) = parametric_spike_params(7.0, 0.0).unwrap();
        assert_eq!(rho, 7.0);
        assert_relative_eq!(sigma * sigma, 98.0, max_relative = 1e-14);

        let edge = 1.0 + 0.2f64.sqrt();
        assert!(parametric_spike_params(edge, 0.2).is_err());
        let (_, s) = parametric_spike_params(edge + 1e-9, 0.2).unwrap();
        assert!(s < 1e-3);
    }

    #[test]
    fn low_asymptotic_examples() {
        let (rho, sigma) = low_asymptotic_params(10.0, 1500).unwrap();
        assert_eq!(rho, 10.0);
        assert_abs_diff_eq!(sigma, 0.36515, epsilon = 1e-5);
        let ratio = low_asymptotic_params(3.0, 600).unwrap().1 / low_asymptotic_params(3.0, 2400).unwrap().1;
        assert_relative_eq!(ratio, 2.0, max_relative = 1e-14);
        assert!(low_asymptotic_params(0.0, 10).is_err());
        assert!(low_asymptotic_params(1.0, 1).is_err());
    }

    #[test]
    fn coefficients_decay_and_positivity() {
        let near = edgeworth_coefficients(3.0, 0.2).unwrap();
        let far = edgeworth_coefficients(1e4, 0.2).unwrap();
        assert!(near.kappa2 > 0.0 && far.kappa2 > 0.0);
        assert!(far.kappa2 < 1e-7 && far.kappa3 < 1e-10);
        assert_eq!(far.mu_term, 0.0);
        assert!(edgeworth_coefficients(2.0, 0.2).is_err());
    }

    #[test]
    fn constant_design_has_no_spread() {
        let m = DataMatrix::from_fn(60, 30, |_, _| 1.0);
        let sp = spike_params_subsample(&m, 3, 10, 2, 5).unwrap();
        assert_abs_diff_eq!(sp.rho[0], 10.0, epsilon = 1e-9);
        assert!(sp.sigma.iter().all(|&s| s < 1e-9));
    }

    #[test]
    fn subsample_argument_checks() {
        let m = DataMatrix::from_fn(60, 30, |i, j| (i + j) as f64);
        assert!(spike_params_subsample(&m, 3, 1, 2, 0).is_err());
        assert!(spike_params_subsample(&m, 3, 5, 11, 0).is_err());
        assert!(spike_params_subsample(&m, 0, 5, 1, 0).is_err());
    }

    #[test]
    fn two_replicates_table_is_well_formed() {
        let spec = SpikedModelSpec::new(ModelKind::Fa, 300, 60, vec![20.0, 10.0]);
        let cmp = approximation_comparison_with(&spec, Some(4), 2, 5, 8, 11).unwrap();
        assert_eq!(cmp.replicates.len(), 2);
        assert!(cmp.subsampled.sigma.iter().all(|&s| s > 0.0));
        let csv = cmp.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "spike_index,source,rho,sigma,bin_left,bin_right,bin_count");
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
        let observed: f64 = cmp
            .rows
            .iter()
            .filter(|r| r.spike_index == 1 && r.source == ApproximationSource::Subsampled)
            .map(|r| r.bin_count.unwrap())
            .sum();
        assert_eq!(observed, 10.0);
        assert_eq!(cmp, approximation_comparison_with(&spec, Some(4), 2, 5, 8, 11).unwrap());
    }

    #[test]
    fn comparison_needs_a_spike() {
        let spec = SpikedModelSpec::new(ModelKind::Fa, 300, 60, vec![]);
        assert!(approximation_comparison(&spec, 4, 2, 0).is_err());
    }
}
