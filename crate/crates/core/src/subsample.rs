//! Subsampling confidence intervals for the number of components.
//!
//! One draw splits random rows and columns of the standardized data into `b`
//! disjoint blocks of size `⌊n/b⌋ × ⌊p/b⌋`. One block is held out (the lone
//! block); the other `b − 1` blocks give a mean `μⱼ` and spread `σⱼ` for each
//! eigenvalue index `j`, from which per-index intervals are formed at level
//! `β`. The preliminary rank of the draw is the number of leading lone-block
//! eigenvalues that fall inside their intervals.
//!
//! Preliminary ranks are averaged over `M` draws, and that average is
//! repeated `K` times. For every `β` on a grid this gives `K` conditionally
//! independent means; the grid point whose means center best on `r₀ + 1`
//! under a Cauchy likelihood is selected (`r₀` a consistent point estimate).
//! A normal-theory interval on those means, shifted down by one, is the
//! interval for the number of components.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{cauchy_pdf, normal_quantile};
use crate::error::{Error, Result};
use crate::estimate::{check_alpha, rank_standardized, DEFAULT_DELTA0};
use crate::matrix::{block_spectrum, standardize_columns, DataMatrix, EigenSpectrum};
use crate::rng::{substream, tag};

/// Lower bound on the pilot spread before intervals are formed.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Lower bound on the spread of the `K` means in the β-selection score.
pub const OMEGA_FLOOR: f64 = 1e-6;

/// How the level `β` maps to normal quantiles of an eigenvalue interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalRule {
    /// `[μ + z_{(1−β)/2} σ, μ + z_{(1+β)/2} σ]`: the interval holds a
    /// fraction `β` of a normal eigenvalue, so it widens as `β` grows.
    #[default]
    Central,
    /// `[μ + z_{β/2} σ, μ + z_{1−β/2} σ]`: the quantiles taken literally,
    /// holding a fraction `1 − β` and narrowing as `β` grows.
    Literal,
}

impl IntervalRule {
    /// Lower and upper standard-normal quantiles for level `beta`.
    pub fn quantiles(self, beta: f64) -> Result<(f64, f64)> {
        let (lo, hi) = match self {
            IntervalRule::Central => ((1.0 - beta) / 2.0, (1.0 + beta) / 2.0),
            IntervalRule::Literal => (beta / 2.0, 1.0 - beta / 2.0),
        };
        Ok((normal_quantile(lo)?, normal_quantile(hi)?))
    }
}

/// Evenly spaced grid of `g` points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    match g {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect(),
    }
}

/// `⌊n^{1/3}⌋`, exact for integers.
pub fn default_block_count(n: usize) -> usize {
    let mut b = (n as f64).cbrt().round() as usize;
    while b * b * b > n {
        b -= 1;
    }
    while (b + 1) * (b + 1) * (b + 1) <= n {
        b += 1;
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    /// Number of blocks; `None` means `⌊n^{1/3}⌋`.
    pub b: Option<usize>,
    pub beta_grid: Vec<f64>,
    pub k: usize,
    pub m: usize,
    pub eps0: f64,
    pub alpha: f64,
    pub r0_override: Option<usize>,
    /// Threshold of the likelihood estimator used for `r₀`.
    pub delta0: f64,
    pub interval_rule: IntervalRule,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self {
            b: None,
            beta_grid: linear_grid(0.55, 0.995, 10),
            k: 30,
            m: 50,
            eps0: 0.02,
            alpha: 0.05,
            r0_override: None,
            delta0: DEFAULT_DELTA0,
            interval_rule: IntervalRule::default(),
            seed: 0,
        }
    }
}

impl SubsampleConfig {
    pub fn resolved_b(&self, n: usize) -> usize {
        self.b.unwrap_or_else(|| default_block_count(n))
    }

    /// Checks the configuration against an `n × p` input and returns the
    /// block count that will be used.
    pub fn validate(&self, n: usize, p: usize) -> Result<usize> {
        let b = self.resolved_b(n);
        if b < 2 {
            return Err(Error::invalid(format!("need at least 2 blocks, got b = {b}")));
        }
        if n / b < 4 || p / b < 2 {
            return Err(Error::dim(format!(
                "{n}x{p} data split into {b} blocks gives {}x{} blocks; need at least 4x2",
                n / b,
                p / b
            )));
        }
        if self.beta_grid.is_empty() {
            return Err(Error::invalid("empty beta grid"));
        }
        if self.beta_grid.iter().any(|&x| !(x > 0.5 && x < 1.0)) {
            return Err(Error::invalid("beta grid must lie strictly inside (0.5, 1)"));
        }
        if self.beta_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("beta grid must be strictly ascending"));
        }
        if self.k < 2 || self.m < 1 {
            return Err(Error::invalid(format!("need K >= 2 and M >= 1, got K = {}, M = {}", self.k, self.m)));
        }
        if !(self.eps0 >= 0.0 && self.eps0.is_finite()) {
            return Err(Error::invalid(format!("eps0 must be non-negative, got {}", self.eps0)));
        }
        check_alpha(self.alpha)?;
        Ok(b)
    }
}

/// `b` disjoint row blocks and `b` disjoint column blocks; block `i` pairs
/// row chunk `i` with column chunk `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub b: usize,
    pub n_star: usize,
    pub p_star: usize,
    pub row_blocks: Vec<Vec<usize>>,
    pub col_blocks: Vec<Vec<usize>>,
    pub lone_index: usize,
}

impl BlockPlan {
    pub fn pilot_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.b).filter(move |&i| i != self.lone_index)
    }
}

/// Draws a fresh block partition from `rng`. Leftover rows and columns
/// beyond `b·⌊n/b⌋` and `b·⌊p/b⌋` are discarded.
pub fn plan_blocks<R: Rng + ?Sized>(n: usize, p: usize, b: usize, rng: &mut R) -> Result<BlockPlan> {
    if b < 2 {
        return Err(Error::invalid(format!("need at least 2 blocks, got b = {b}")));
    }
    let (n_star, p_star) = (n / b, p / b);
    if n_star < 2 || p_star < 1 {
        return Err(Error::dim(format!("{n}x{p} data cannot hold {b} blocks of at least 2x1")));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..p).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let row_blocks = rows.chunks_exact(n_star).take(b).map(<[usize]>::to_vec).collect();
    let col_blocks = cols.chunks_exact(p_star).take(b).map(<[usize]>::to_vec).collect();
    let lone_index = rng.random_range(0..b);
    Ok(BlockPlan { b, n_star, p_star, row_blocks, col_blocks, lone_index })
}

/// Lone-block spectrum plus per-index mean and spread over the pilot blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotStatistics {
    pub lone: EigenSpectrum,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn pilot_statistics(m: &DataMatrix, plan: &BlockPlan) -> Result<PilotStatistics> {
    let consistent = plan.b >= 2
        && plan.row_blocks.len() == plan.b
        && plan.col_blocks.len() == plan.b
        && plan.lone_index < plan.b
        && plan.row_blocks.iter().flatten().all(|&i| i < m.n_rows())
        && plan.col_blocks.iter().flatten().all(|&j| j < m.n_cols());
    if !consistent {
        return Err(Error::dim("block plan does not match the data matrix"));
    }
    let spectra =
        (0..plan.b).map(|i| block_spectrum(m, &plan.row_blocks[i], &plan.col_blocks[i])).collect::<Result<Vec<_>>>()?;

    let len = spectra.iter().map(Vec::len).min().unwrap_or(0);
    let pilots = (plan.b - 1) as f64;
    let mut mu = vec![0.0; len];
    let mut sigma = vec![0.0; len];
    for i in plan.pilot_indices() {
        for (acc, v) in mu.iter_mut().zip(&spectra[i]) {
            *acc += v;
        }
    }
    mu.iter_mut().for_each(|v| *v /= pilots);
    for i in plan.pilot_indices() {
        for ((acc, v), c) in sigma.iter_mut().zip(&spectra[i]).zip(&mu) {
            *acc += (v - c) * (v - c);
        }
    }
    sigma.iter_mut().for_each(|v| *v = (*v / pilots).sqrt());

    let lone_rows = plan.row_blocks[plan.lone_index].len();
    Ok(PilotStatistics {
        lone: EigenSpectrum {
            eigenvalues: spectra[plan.lone_index].clone(),
            n_used: lone_rows,
            aspect_ratio: plan.col_blocks[plan.lone_index].len() as f64 / lone_rows as f64,
        },
        mu,
        sigma,
    })
}

/// Per-index eigenvalue intervals at one level `β`, trimmed by `ε₀/n⋆` at
/// both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenIntervalSet {
    pub centers: Vec<f64>,
    pub spreads: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Intervals whose trim exceeded their half-width.
    pub empty: Vec<bool>,
    pub beta: f64,
    pub trim: f64,
}

impl EigenIntervalSet {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, j: usize, x: f64) -> bool {
        let (lo, hi) = self.intervals[j];
        !self.empty[j] && lo <= x && x <= hi
    }
}

pub fn empirical_eigen_cis(
    mu: &[f64],
    sigma: &[f64],
    beta: f64,
    eps0: f64,
    n_star: usize,
    rule: IntervalRule,
) -> Result<EigenIntervalSet> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(Error::invalid(format!("beta must lie in (0.5, 1), got {beta}")));
    }
    if mu.len() != sigma.len() {
        return Err(Error::dim("mu and sigma lengths differ"));
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("sigma entries must be non-negative"));
    }
    if n_star == 0 {
        return Err(Error::invalid("n_star must be positive"));
    }
    let (z_lo, z_hi) = rule.quantiles(beta)?;
    let trim = eps0 / n_star as f64;
    let intervals: Vec<(f64, f64)> =
        mu.iter().zip(sigma).map(|(m, s)| (m + z_lo * s + trim, m + z_hi * s - trim)).collect();
    let empty = intervals.iter().map(|(lo, hi)| lo > hi).collect();
    Ok(EigenIntervalSet { centers: mu.to_vec(), spreads: sigma.to_vec(), intervals, empty, beta, trim })
}

/// Number of leading lone eigenvalues that fall inside their intervals.
pub fn preliminary_rank(lone: &EigenSpectrum, cis: &EigenIntervalSet) -> usize {
    let len = lone.len().min(cis.len());
    (0..len).find(|&j| !cis.contains(j, lone.eigenvalues[j])).unwrap_or(len)
}

/// Score of one β grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaScore {
    pub mean: f64,
    pub sd: f64,
    pub standardized: f64,
    pub density: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
    (mean, var.sqrt())
}

/// Picks the β whose `K` means are most Cauchy-likely to center on `r₀ + 1`.
/// Ties go to the smaller β.
pub fn select_beta(samples: &[Vec<f64>], r0: usize) -> Result<(usize, Vec<BetaScore>)> {
    if samples.is_empty() {
        return Err(Error::invalid("empty beta grid"));
    }
    if samples.iter().any(|s| s.len() < 2) {
        return Err(Error::invalid("every beta needs at least 2 samples"));
    }
    let target = r0 as f64 + 1.0;
    let scores: Vec<BetaScore> = samples
        .iter()
        .map(|s| {
            let (mean, sd) = mean_sd(s);
            let standardized = (mean - target) / sd.max(OMEGA_FLOOR);
            BetaScore { mean, sd, standardized, density: cauchy_pdf(standardized) }
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.density > scores[best].density {
            best = i;
        }
    }
    Ok((best, scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Subsample,
    Bootstrap,
}

/// Integer confidence interval for the number of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCI {
    pub method: CiMethod,
    pub lower: usize,
    pub upper: usize,
    /// Bounds before clamping at zero.
    pub raw_lower: i64,
    pub raw_upper: i64,
    pub alpha: f64,
    pub beta_selected: Option<f64>,
    pub r0_used: Option<usize>,
    pub k_means: Vec<f64>,
    pub point: f64,
    pub sd: f64,
}

impl RankCI {
    pub fn contains(&self, r: usize) -> bool {
        self.lower <= r && r <= self.upper
    }

    pub fn width(&self) -> usize {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaDiagnostics {
    pub beta: f64,
    pub k_means: Vec<f64>,
    pub score: BetaScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R0Source {
    Likelihood,
    Override,
}

/// Everything the subsampling procedure computes before `α` enters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleFit {
    pub b: usize,
    pub n_star: usize,
    pub p_star: usize,
    pub r0: usize,
    pub r0_source: R0Source,
    pub per_beta: Vec<BetaDiagnostics>,
    pub selected: usize,
}

impl SubsampleFit {
    pub fn beta_selected(&self) -> f64 {
        self.per_beta[self.selected].beta
    }

    /// `[⌊r̂ + z_{α/2} σ̂⌋ − 1, ⌊r̂ + z_{1−α/2} σ̂⌋ − 1]` at the selected β,
    /// clamped at zero.
    pub fn rank_ci(&self, alpha: f64) -> Result<RankCI> {
        check_alpha(alpha)?;
        let chosen = &self.per_beta[self.selected];
        let (point, sd) = (chosen.score.mean, chosen.score.sd);
        let lo = (point + normal_quantile(alpha / 2.0)? * sd).floor() as i64 - 1;
        let hi = (point + normal_quantile(1.0 - alpha / 2.0)? * sd).floor() as i64 - 1;
        Ok(RankCI {
            method: CiMethod::Subsample,
            lower: lo.max(0) as usize,
            upper: hi.max(0) as usize,
            raw_lower: lo,
            raw_upper: hi,
            alpha,
            beta_selected: Some(chosen.beta),
            r0_used: Some(self.r0),
            k_means: chosen.k_means.clone(),
            point,
            sd,
        })
    }
}

/// Preliminary ranks of draw `(k, m)` at every grid point.
fn draw_preliminary_ranks(x: &DataMatrix, cfg: &SubsampleConfig, b: usize, k: usize, m: usize) -> Result<Vec<usize>> {
    let mut rng = substream(cfg.seed, &[tag::PLAN, k as u64, m as u64]);
    let plan = plan_blocks(x.n_rows(), x.n_cols(), b, &mut rng)?;
    let mut stats = pilot_statistics(x, &plan)?;
    stats.sigma.iter_mut().for_each(|s| *s = s.max(SIGMA_FLOOR));
    cfg.beta_grid
        .iter()
        .map(|&beta| {
            let cis = empirical_eigen_cis(&stats.mu, &stats.sigma, beta, cfg.eps0, plan.n_star, cfg.interval_rule)?;
            Ok(preliminary_rank(&stats.lone, &cis))
        })
        .collect()
}

/// Runs the `K × M` subsampling grid and selects β.
///
/// Draw `(k, m)` uses RNG substream `(seed, k, m)` and all reductions run
/// in index order, so the result does not depend on the thread count.
pub fn fit_subsample(m: &DataMatrix, cfg: &SubsampleConfig) -> Result<SubsampleFit> {
    let b = cfg.validate(m.n_rows(), m.n_cols())?;
    let x = standardize_columns(m)?;
    let (r0, r0_source) = match cfg.r0_override {
        Some(r) => (r, R0Source::Override),
        None => (rank_standardized(&x, cfg.delta0)?.rank, R0Source::Likelihood),
    };

    let (kk, mm, g) = (cfg.k, cfg.m, cfg.beta_grid.len());
    let prelim: Vec<Vec<usize>> = (0..kk * mm)
        .into_par_iter()
        .map(|t| draw_preliminary_ranks(&x, cfg, b, t / mm, t % mm))
        .collect::<Result<_>>()?;

    let samples: Vec<Vec<f64>> = (0..g)
        .map(|i| prelim.chunks(mm).map(|draws| draws.iter().map(|d| d[i]).sum::<usize>() as f64 / mm as f64).collect())
        .collect();
    let (selected, scores) = select_beta(&samples, r0)?;
    let per_beta = cfg
        .beta_grid
        .iter()
        .zip(samples)
        .zip(scores)
        .map(|((&beta, k_means), score)| BetaDiagnostics { beta, k_means, score })
        .collect();
    Ok(SubsampleFit { b, n_star: m.n_rows() / b, p_star: m.n_cols() / b, r0, r0_source, per_beta, selected })
}

/// Subsampling confidence interval at level `1 − cfg.alpha`.
pub fn subsample_rank_ci(m: &DataMatrix, cfg: &SubsampleConfig) -> Result<RankCI> {
    fit_subsample(m, cfg)?.rank_ci(cfg.alpha)
}
