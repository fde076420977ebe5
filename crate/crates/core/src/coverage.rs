//! Monte Carlo coverage of rank confidence intervals.
//!
//! Each replicate generates a dataset from substream `(seed, DATA, rep)` and
//! runs the interval method with seed `(seed, METHOD, rep)`, so different
//! methods run with the same seed see identical datasets. The α-free part of
//! a method runs once per replicate and serves every requested level.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{nb_fit, BootstrapConfig};
use crate::rng::{derive_seed, tag};
use crate::sim::{generate, SpikedModelSpec};
use crate::subsample::{fit_subsample, RankCI, SubsampleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Subsample,
    Bootstrap { resamples: usize, outer: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Subsample => "ss",
            Method::Bootstrap { .. } => "nb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario_label: String,
    pub method: String,
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub covered: Vec<usize>,
    pub failures: usize,
    pub reps: usize,
    /// Mean of `upper − lower` over replicates that produced an interval;
    /// empty when every replicate failed.
    pub mean_ci_width: Vec<Option<f64>>,
    pub wall_time_seconds: f64,
    pub seed: u64,
    pub true_rank: usize,
    pub spec: SpikedModelSpec,
    pub method_config: Method,
    pub subsample_config: Option<SubsampleConfig>,
}

fn intervals_for(
    spec: &SpikedModelSpec,
    method: Method,
    levels: &[f64],
    cfg: &SubsampleConfig,
    seed: u64,
    rep: usize,
) -> Result<Vec<RankCI>> {
    let data = generate(spec, derive_seed(seed, &[tag::DATA, rep as u64]))?;
    let method_seed = derive_seed(seed, &[tag::METHOD, rep as u64]);
    match method {
        Method::Subsample => {
            let cfg = SubsampleConfig { seed: method_seed, r0_override: spec.r0.or(cfg.r0_override), ..cfg.clone() };
            let fit = fit_subsample(&data, &cfg)?;
            levels.iter().map(|l| fit.rank_ci(1.0 - l)).collect()
        }
        Method::Bootstrap { resamples, outer } => {
            let bcfg = BootstrapConfig { resamples, outer, delta0: cfg.delta0, seed: method_seed };
            let fit = nb_fit(&data, &bcfg)?;
            levels.iter().map(|l| fit.rank_ci(1.0 - l)).collect()
        }
    }
}

/// Empirical coverage of `method` on `reps` datasets drawn from `spec`.
///
/// A replicate whose method fails counts as not covering and is tallied in
/// `failures`.
pub fn run_coverage(
    spec: &SpikedModelSpec,
    method: Method,
    levels: &[f64],
    reps: usize,
    cfg: &SubsampleConfig,
    seed: u64,
) -> Result<CoverageReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::invalid("levels must be non-empty and inside (0, 1)"));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let start = Instant::now();
    let outcomes: Vec<Option<Vec<RankCI>>> =
        (0..reps).into_par_iter().map(|rep| intervals_for(spec, method, &levels, cfg, seed, rep).ok()).collect();

    let r = spec.rank();
    let mut covered = vec![0usize; levels.len()];
    let mut width_sum = vec![0.0; levels.len()];
    let mut failures = 0;
    for outcome in &outcomes {
        match outcome {
            Some(cis) => {
                for (i, ci) in cis.iter().enumerate() {
                    covered[i] += usize::from(ci.contains(r));
                    width_sum[i] += ci.width() as f64;
                }
            }
            None => failures += 1,
        }
    }
    let ok = reps - failures;
    Ok(CoverageReport {
        scenario_label: spec.label.clone(),
        method: method.name().to_string(),
        coverage: covered.iter().map(|&c| c as f64 / reps as f64).collect(),
        mean_ci_width: width_sum.iter().map(|w| (ok > 0).then(|| w / ok as f64)).collect(),
        levels,
        covered,
        failures,
        reps,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        seed,
        true_rank: r,
        spec: spec.clone(),
        method_config: method,
        subsample_config: matches!(method, Method::Subsample).then(|| cfg.clone()),
    })
}

pub const CSV_HEADER: &str =
    "scenario,method,level,coverage,covered,reps,failures,mean_ci_width,wall_time_seconds,seed";

/// Path of the JSON sidecar that accompanies a CSV report.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Appends one CSV row per level to `path` (writing the header if the file
/// is new or empty) and the full report to a JSON array next to it.
pub fn write_report(report: &CoverageReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{CSV_HEADER}")?;
    }
    for (i, level) in report.levels.iter().enumerate() {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{}",
            report.scenario_label,
            report.method,
            level,
            report.coverage[i],
            report.covered[i],
            report.reps,
            report.failures,
            report.mean_ci_width[i].map(|w| w.to_string()).unwrap_or_default(),
            report.wall_time_seconds,
            report.seed
        )?;
    }

    let sidecar = sidecar_path(path);
    let mut all: Vec<CoverageReport> = match fs::read_to_string(&sidecar) {
        Ok(text) if !text.trim().is_empty() => {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", sidecar.display())))?
        }
        _ => Vec::new(),
    };
    all.push(report.clone());
    let text = serde_json::to_string_pretty(&all).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(&sidecar, text + "\n")?;
    Ok(())
}
