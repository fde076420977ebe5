use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use srci::coverage::{run_coverage, write_report, Method};
use srci::edgeworth::{approximation_comparison_with, DEFAULT_BINS, DEFAULT_DRAWS};
use srci::estimate::{nb_fit, BootstrapConfig, DEFAULT_DELTA0};
use srci::matrix::{load_matrix, write_matrix, DataMatrix, MatrixFormat};
use srci::sim::{generate, scenario_catalog, ModelKind, ScenarioFile, SpikedModelSpec};
use srci::subsample::{fit_subsample, linear_grid, IntervalRule, SubsampleConfig};
use srci::tw_likelihood_rank;

#[derive(Parser)]
#[command(
    name = "srci",
    version,
    about = "Estimate the number of factors in a data matrix, with subsampling confidence intervals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data matrix from the factor model or the spiked PCA model.
    Simulate(SimulateArgs),
    /// Point estimate of the number of factors with the Tracy-Widom likelihood
    /// estimator, or a row-bootstrap interval (--method nb).
    ///
    /// Estimates are stochastic: with `simulate --model fa --n 100 --p 50
    /// --scales 10,15` the likelihood estimator returns 2 in most seeds.
    Estimate(EstimateArgs),
    /// Confidence interval for the number of factors by block subsampling with
    /// Cauchy-likelihood selection of the interval level beta.
    Ci(CiArgs),
    /// Monte Carlo coverage of the subsampling or row-bootstrap interval.
    Coverage(CoverageArgs),
    /// Compare subsampled, high-dimensional parametric and classical normal
    /// approximations (plus a first-order Edgeworth curve) for spiked eigenvalues.
    Edgeworth(EdgeworthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

impl From<Format> for MatrixFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => MatrixFormat::Csv,
            Format::Bin => MatrixFormat::Bin,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Fa,
    Pca,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMethod {
    Tw,
    Nb,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiMethodArg {
    Ss,
    Nb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Central,
    Literal,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not strictly between 0 and 1"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not a positive number"))
    }
}

fn input_format(path: &Path, flag: Option<Format>) -> MatrixFormat {
    flag.map(Into::into).unwrap_or_else(|| MatrixFormat::from_path(path))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn print_json(value: &impl Serialize) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(std::io::stdout().lock(), "{text}")?;
    Ok(text)
}

#[derive(Args)]
struct ThreadArgs {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl ThreadArgs {
    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            if t == 0 {
                bail!("--threads must be positive");
            }
            builder = builder.num_threads(t);
        }
        Ok(builder.build()?.install(f))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Factor scales, comma separated; omit for pure noise.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    scales: Vec<f64>,
    /// Multiplier on the residual standard deviation.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    noise: f64,
    /// Built-in scenario label (see `coverage --list`); overrides the model flags.
    #[arg(long, conflicts_with_all = ["model", "n", "p", "scales"])]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Output format; defaults to the file extension (`.bin` or CSV).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = match &a.scenario {
        Some(label) => builtin(label)?,
        None => {
            let kind = match a.model.ok_or_else(|| anyhow!("--model is required without --scenario"))? {
                Model::Fa => ModelKind::Fa,
                Model::Pca => ModelKind::Pca,
            };
            let n = a.n.ok_or_else(|| anyhow!("--n is required without --scenario"))?;
            let p = a.p.ok_or_else(|| anyhow!("--p is required without --scenario"))?;
            SpikedModelSpec::new(kind, n, p, a.scales.clone()).with_noise_factor(a.noise)
        }
    };
    let seed = resolve_seed(a.seed);
    let m = generate(&spec, seed)?;
    let format = input_format(&a.out, a.format);
    write_matrix(&m, &a.out, format)?;
    print_json(&json!({
        "command": "simulate",
        "seed": seed,
        "spec": spec,
        "out": a.out,
        "format": format!("{format:?}").to_lowercase(),
    }))?;
    Ok(())
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum, default_value = "tw")]
    method: EstimateMethod,
    /// Density threshold of the likelihood estimator.
    #[arg(long, default_value_t = DEFAULT_DELTA0, value_parser = positive)]
    delta0: f64,
    /// Bootstrap only: 1 − confidence level.
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    alpha: f64,
    /// Bootstrap only: resamples averaged into one estimate.
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Bootstrap only: repetitions of the averaged estimate.
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: ThreadArgs,
}

fn load(path: &Path, format: Option<Format>) -> Result<DataMatrix> {
    load_matrix(path, input_format(path, format)).with_context(|| format!("reading {}", path.display()))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let m = load(&a.input, a.format)?;
    match a.method {
        EstimateMethod::Tw => {
            let est = tw_likelihood_rank(&m, a.delta0)?;
            print_json(&json!({
                "command": "estimate",
                "input": a.input,
                "method": "tw",
                "delta0": a.delta0,
                "n_rows": m.n_rows(),
                "n_cols": m.n_cols(),
                "result": est,
            }))?;
        }
        EstimateMethod::Nb => {
            let seed = resolve_seed(a.seed);
            let cfg = BootstrapConfig { resamples: a.m, outer: a.k, delta0: a.delta0, seed };
            let ci = a.threads.run(|| nb_fit(&m, &cfg).and_then(|f| f.rank_ci(a.alpha)))??;
            print_json(&json!({
                "command": "estimate",
                "input": a.input,
                "method": "nb",
                "alpha": a.alpha,
                "m": a.m,
                "k": a.k,
                "delta0": a.delta0,
                "seed": seed,
                "result": ci,
            }))?;
        }
    }
    Ok(())
}

#[derive(Args)]
struct CiArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    alpha: f64,
    /// Number of blocks (default: floor of the cube root of n).
    #[arg(long)]
    b: Option<usize>,
    /// Ascending levels inside (0.5, 1), comma separated (default: 10 points from 0.55 to 0.995).
    #[arg(long, value_delimiter = ',')]
    beta_grid: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Trimming constant.
    #[arg(long, default_value_t = 0.02)]
    eps0: f64,
    /// Use this point estimate instead of the likelihood estimator.
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DELTA0, value_parser = positive)]
    delta0: f64,
    #[arg(long, value_enum, default_value = "central")]
    interval_rule: Rule,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: ThreadArgs,
    /// Also write the JSON result to this file.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

fn subsample_config(beta_grid: &[f64], k: usize, m: usize, eps0: f64, delta0: f64, rule: Rule) -> SubsampleConfig {
    let defaults = SubsampleConfig::default();
    SubsampleConfig {
        beta_grid: if beta_grid.is_empty() { linear_grid(0.55, 0.995, 10) } else { beta_grid.to_vec() },
        k,
        m,
        eps0,
        delta0,
        interval_rule: match rule {
            Rule::Central => IntervalRule::Central,
            Rule::Literal => IntervalRule::Literal,
        },
        ..defaults
    }
}

fn ci(a: CiArgs) -> Result<()> {
    let m = load(&a.input, a.format)?;
    let seed = resolve_seed(a.seed);
    let cfg = SubsampleConfig {
        b: a.b,
        alpha: a.alpha,
        r0_override: a.r0,
        seed,
        ..subsample_config(&a.beta_grid, a.k, a.m, a.eps0, a.delta0, a.interval_rule)
    };
    let fit = a.threads.run(|| fit_subsample(&m, &cfg))??;
    let result = fit.rank_ci(a.alpha)?;
    let text = print_json(&json!({
        "command": "ci",
        "input": a.input,
        "n_rows": m.n_rows(),
        "n_cols": m.n_cols(),
        "config": cfg,
        "result": result,
        "fit": fit,
    }))?;
    if let Some(path) = &a.json_out {
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Args)]
struct CoverageArgs {
    /// Scenario file (TOML or JSON) or comma-separated built-in labels.
    #[arg(long, required_unless_present = "list")]
    scenarios: Option<String>,
    #[arg(long, value_enum, default_value = "ss")]
    method: CiMethodArg,
    /// Confidence levels, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = unit_interval, default_value = "0.9,0.95,0.99")]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: ThreadArgs,
    /// CSV report (a JSON sidecar is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subsampling: outer repetitions.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Subsampling: draws per repetition.
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 0.02)]
    eps0: f64,
    #[arg(long, value_delimiter = ',')]
    beta_grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA0, value_parser = positive)]
    delta0: f64,
    #[arg(long, value_enum, default_value = "central")]
    interval_rule: Rule,
    /// Bootstrap: resamples per estimate.
    #[arg(long, default_value_t = 50)]
    nb_m: usize,
    /// Bootstrap: repetitions.
    #[arg(long, default_value_t = 30)]
    nb_k: usize,
    /// Print the built-in scenario labels and exit.
    #[arg(long)]
    list: bool,
}

fn builtin(label: &str) -> Result<SpikedModelSpec> {
    scenario_catalog().remove(label).ok_or_else(|| anyhow!("unknown scenario `{label}`; run `srci coverage --list`"))
}

fn scenarios(arg: &str) -> Result<Vec<SpikedModelSpec>> {
    let path = Path::new(arg);
    if path.is_file() {
        let file = ScenarioFile::load(path)?;
        return Ok(file
            .scenario
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if s.label.is_empty() {
                    let label = format!("scenario-{i}");
                    s.with_label(label)
                } else {
                    s
                }
            })
            .collect());
    }
    arg.split(',').map(|l| builtin(l.trim())).collect()
}

fn coverage(a: CoverageArgs) -> Result<()> {
    if a.list {
        for (label, spec) in scenario_catalog() {
            writeln!(
                std::io::stdout().lock(),
                "{label}\t{}\tn={} p={} scales={:?} noise={}",
                spec.kind,
                spec.n_rows,
                spec.n_cols,
                spec.scales,
                spec.noise_factor
            )?;
        }
        return Ok(());
    }
    let specs = scenarios(a.scenarios.as_deref().unwrap_or_default())?;
    let seed = resolve_seed(a.seed);
    let cfg = subsample_config(&a.beta_grid, a.k, a.m, a.eps0, a.delta0, a.interval_rule);
    let method = match a.method {
        CiMethodArg::Ss => Method::Subsample,
        CiMethodArg::Nb => Method::Bootstrap { resamples: a.nb_m, outer: a.nb_k },
    };
    let mut reports = Vec::new();
    for spec in &specs {
        let report = a.threads.run(|| run_coverage(spec, method, &a.levels, a.reps, &cfg, seed))??;
        if let Some(out) = &a.out {
            write_report(&report, out)?;
        }
        eprintln!(
            "{} {}: coverage {:?} at levels {:?} ({} failures, {:.1}s)",
            report.scenario_label,
            report.method,
            report.coverage,
            report.levels,
            report.failures,
            report.wall_time_seconds
        );
        reports.push(report);
    }
    print_json(&json!({
        "command": "coverage",
        "seed": seed,
        "reps": a.reps,
        "levels": a.levels,
        "out": a.out,
        "reports": reports,
    }))?;
    Ok(())
}

#[derive(Args)]
struct EdgeworthArgs {
    /// Built-in scenario label.
    #[arg(long, default_value = "fig2", conflicts_with = "model")]
    scenario: String,
    #[arg(long, value_enum, requires_all = ["n", "p", "scales"])]
    model: Option<Model>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    noise: f64,
    /// Number of blocks (default: floor of the cube root of n).
    #[arg(long)]
    b: Option<usize>,
    /// Generated datasets.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Submatrix draws per dataset.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: ThreadArgs,
    /// CSV table path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn edgeworth(a: EdgeworthArgs) -> Result<()> {
    let spec = match a.model {
        Some(model) => {
            let kind = match model {
                Model::Fa => ModelKind::Fa,
                Model::Pca => ModelKind::Pca,
            };
            SpikedModelSpec::new(kind, a.n.unwrap_or(0), a.p.unwrap_or(0), a.scales.clone())
                .with_noise_factor(a.noise)
                .with_label("custom")
        }
        None => builtin(&a.scenario)?,
    };
    let seed = resolve_seed(a.seed);
    let cmp = a.threads.run(|| approximation_comparison_with(&spec, a.b, a.reps, a.draws, a.bins, seed))??;
    let echo = json!({
        "command": "edgeworth",
        "seed": seed,
        "spec": spec,
        "b": cmp.b,
        "n_star": cmp.n_star,
        "p_star": cmp.p_star,
        "reps": a.reps,
        "draws": a.draws,
        "bins": a.bins,
        "subsampled": cmp.subsampled,
        "parametric": cmp.parametric,
        "low_asymptotic": cmp.low_asymptotic,
        "out": a.out,
    });
    match &a.out {
        Some(path) => {
            fs::write(path, cmp.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            print_json(&echo)?;
        }
        None => {
            write!(std::io::stdout().lock(), "{}", cmp.to_csv())?;
            eprintln!("{}", serde_json::to_string(&echo)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Ci(a) => ci(a),
        Command::Coverage(a) => coverage(a),
        Command::Edgeworth(a) => edgeworth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
