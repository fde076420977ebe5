//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false`. Every criterion is evaluated and reported;
//! the process exits non-zero on a failure only when `SRCI_ACCEPTANCE_STRICT`
//! is set. `SRCI_ACCEPTANCE_ONLY=1,6` restricts the run to some criteria.

use std::collections::HashSet;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use srci::coverage::{run_coverage, Method};
use srci::distributions::{mp_functional, mp_pdf, normal_cdf, normal_quantile, tw1_pdf, MpLaw};
use srci::edgeworth::approximation_comparison;
use srci::matrix::{covariance_spectrum, standardize_columns, write_matrix, DataMatrix, MatrixFormat};
use srci::quadrature::{integrate, Tolerance};
use srci::rng::{derive_seed, substream};
use srci::sim::{generate, scenario_catalog, SpikedModelSpec};
use srci::subsample::{
    empirical_eigen_cis, fit_subsample, pilot_statistics, plan_blocks, preliminary_rank, IntervalRule, SubsampleConfig,
};
use srci::tw_likelihood_rank;

const SEED: u64 = 0x00ac_ce97;
const REPS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn spec(label: &str) -> SpikedModelSpec {
    scenario_catalog()[label].clone()
}

fn consistency() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for r in [1usize, 3, 5] {
        let s = spec(&format!("T1-FA-r{r}-g0.2"));
        let hits = (0..REPS)
            .into_par_iter()
            .filter(|&rep| {
                let m = generate(&s, derive_seed(SEED, &[1, r as u64, rep as u64])).unwrap();
                tw_likelihood_rank(&m, 0.01).map(|e| e.rank == r).unwrap_or(false)
            })
            .count();
        pass &= hits >= 90;
        parts.push(format!("r={r}: {hits}/{REPS}"));
    }
    check(pass, format!("{} (need >= 90 each)", parts.join(", ")))
}

fn coverage_cell(label: &str, level: f64, target: f64, tol: f64, tag: u64) -> (bool, String) {
    let report = run_coverage(
        &spec(label),
        Method::Subsample,
        &[level],
        REPS,
        &SubsampleConfig::default(),
        derive_seed(SEED, &[tag]),
    )
    .expect("coverage run");
    let c = report.coverage[0];
    let pass = (c - target).abs() <= tol + 1e-12;
    (pass, format!("{label} @ {level}: {c:.2} (target {target} ± {tol}, failures {})", report.failures))
}

fn coverage_high_gamma() -> Outcome {
    let (a, da) = coverage_cell("T1-FA-r2-g0.5", 0.95, 0.99, 0.08, 2);
    let (b, db) = coverage_cell("T1-PCA-r0-g0.5", 0.90, 0.96, 0.08, 3);
    check(a && b, format!("{da}; {db}"))
}

fn coverage_low_gamma() -> Outcome {
    let (a, da) = coverage_cell("T1-FA-r3-g0.2", 0.90, 0.95, 0.08, 4);
    let (b, db) = coverage_cell("T1-FA-r4-g0.2", 0.95, 0.88, 0.10, 5);
    check(a && b, format!("{da}; {db}"))
}

fn stress_contrast() -> Outcome {
    let s = spec("stress-a");
    let seed = derive_seed(SEED, &[6]);
    let cfg = SubsampleConfig::default();
    let ss = run_coverage(&s, Method::Subsample, &[0.95], REPS, &cfg, seed).expect("ss run");
    let nb =
        run_coverage(&s, Method::Bootstrap { resamples: 20, outer: 20 }, &[0.95], REPS, &cfg, seed).expect("nb run");
    let (c_ss, c_nb) = (ss.coverage[0], nb.coverage[0]);
    check(
        c_ss >= 0.80 && c_nb <= 0.10,
        format!("subsampling {c_ss:.2} (need >= 0.80), bootstrap {c_nb:.2} (need <= 0.10)"),
    )
}

fn variance_overestimation() -> Outcome {
    let cmp = approximation_comparison(&spec("fig2"), 11, REPS, derive_seed(SEED, &[7])).expect("comparison");
    let over = cmp.overestimating_replicates();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    check(
        over >= 95,
        format!(
            "{over}/{REPS} replicates (need >= 95); pooled sigma subsampled {} parametric {} low-asymptotic {}",
            fmt(&cmp.subsampled.sigma),
            fmt(&cmp.parametric.sigma),
            fmt(&cmp.low_asymptotic.sigma)
        ),
    )
}

/// Marchenko–Pastur draws by rejection in `t`, with `λ = a + (b − a) sin²t`.
fn mp_samples(gamma: f64, count: usize, seed: u64) -> Vec<f64> {
    let (a, b) = ((1.0 - gamma.sqrt()).powi(2), (1.0 + gamma.sqrt()).powi(2));
    let half_pi = std::f64::consts::FRAC_PI_2;
    let lambda = |t: f64| a + (b - a) * t.sin().powi(2);
    let g = |t: f64| (b - a).powi(2) * (2.0 * t).sin().powi(2) / (4.0 * std::f64::consts::PI * gamma * lambda(t));
    let bound = 1.05 * (0..=20_000).map(|i| g(half_pi * i as f64 / 20_000.0)).fold(0.0, f64::max);
    let mut rng = substream(seed, &[]);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = rng.random::<f64>() * half_pi;
        if rng.random::<f64>() * bound <= g(t) {
            out.push(lambda(t));
        }
    }
    out
}

fn distribution_suite() -> Outcome {
    let tight = Tolerance { abs: 1e-11, rel: 1e-11, max_intervals: 20_000 };
    let mut worst_mp: f64 = 0.0;
    for gamma in [0.1, 0.2, 0.5, 0.8, 1.0] {
        let law = MpLaw::new(gamma).unwrap();
        let total = integrate(|x| mp_pdf(x, &law), law.lower_edge, law.upper_edge, tight).unwrap().value;
        worst_mp = worst_mp.max((total - 1.0).abs());
    }
    let tw = integrate(tw1_pdf, -10.0, 10.0, Tolerance::default()).unwrap().value;
    let mut worst_inv: f64 = 0.0;
    for i in 1..=1000 {
        let p = (i as f64 - 0.5) / 1000.0;
        worst_inv = worst_inv.max((normal_cdf(normal_quantile(p).unwrap()) - p).abs());
    }
    let mut worst_mc: f64 = 0.0;
    // pairs sit clear of the bulk edge: near it (e.g. rho = 3.5, gamma = 0.5) the
    // Monte Carlo standard error alone is about 1.2e-3 relative
    for (power, rho, gamma) in [(2u32, 5.0f64, 0.2), (2, 10.222, 0.2), (2, 6.0, 0.5)] {
        let draws = mp_samples(gamma, 1_000_000, derive_seed(SEED, &[8, rho.to_bits()]));
        let mc = draws.iter().map(|l| (rho - l).powi(-(power as i32))).sum::<f64>() / draws.len() as f64;
        let q = mp_functional(power, rho, &MpLaw::new(gamma).unwrap()).unwrap();
        worst_mc = worst_mc.max((q - mc).abs() / q);
    }
    check(
        worst_mp <= 1e-6 && (tw - 1.0).abs() <= 1e-3 && worst_inv <= 1e-8 && worst_mc <= 1e-3,
        format!(
            "MP mass err {worst_mp:.1e} (<= 1e-6), TW mass err {:.1e} (<= 1e-3), inverse err {worst_inv:.1e} (<= 1e-8), functional vs MC rel err {worst_mc:.1e} (<= 1e-3)",
            (tw - 1.0).abs()
        ),
    )
}

fn thread_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.bin");
    let m = generate(&spec("T1-FA-r3-g0.2"), derive_seed(SEED, &[9])).unwrap();
    write_matrix(&m, &input, MatrixFormat::Bin).unwrap();
    let run = |threads: usize| {
        let out = dir.path().join(format!("ci-{threads}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_srci"))
            .args(["ci", "--seed", "7", "--alpha", "0.05", "--threads", &threads.to_string()])
            .arg("--input")
            .arg(&input)
            .arg("--json-out")
            .arg(&out)
            .output()
            .expect("spawn srci");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(&out).unwrap()
    };
    let outputs: Vec<Vec<u8>> = [1, 4, 16].into_iter().map(run).collect();
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!("JSON at 1/4/16 threads {} ({} bytes)", if same { "identical" } else { "differs" }, outputs[0].len()),
    )
}

fn structural_fuzz() -> Outcome {
    let mut rng = substream(SEED, &[10]);
    let mut problems = Vec::new();
    for case in 0..500 {
        let n = rng.random_range(8..=40);
        let p = rng.random_range(4..=20);
        let m = DataMatrix::from_fn(n, p, |_, _| rng.random_range(-5.0..5.0));
        let ev = covariance_spectrum(&m).unwrap().eigenvalues;
        if ev.windows(2).any(|w| w[0] < w[1]) || ev.iter().any(|&v| v < 0.0) {
            problems.push(format!("case {case}: spectrum order"));
        }
        let s1 = standardize_columns(&m).unwrap();
        let s2 = standardize_columns(&s1).unwrap();
        if s1.values().iter().zip(s2.values()).any(|(a, b)| (a - b).abs() > 1e-10) {
            problems.push(format!("case {case}: standardization"));
        }
        let b = rng.random_range(2..=(n / 4).min(p / 2).max(2));
        let plan = plan_blocks(n, p, b, &mut rng).unwrap();
        let rows: HashSet<usize> = plan.row_blocks.iter().flatten().copied().collect();
        let cols: HashSet<usize> = plan.col_blocks.iter().flatten().copied().collect();
        if rows.len() != b * (n / b) || cols.len() != b * (p / b) {
            problems.push(format!("case {case}: blocks overlap"));
        }
        let stats = pilot_statistics(&s1, &plan).unwrap();
        let beta = rng.random_range(0.51..0.99);
        let cis = empirical_eigen_cis(&stats.mu, &stats.sigma, beta, 0.02, plan.n_star, IntervalRule::Central).unwrap();
        if preliminary_rank(&stats.lone, &cis) > stats.lone.len().min(cis.len()) {
            problems.push(format!("case {case}: preliminary rank"));
        }
        let cfg = SubsampleConfig { b: Some(b), k: 3, m: 2, seed: case, ..Default::default() };
        let fit = fit_subsample(&m, &cfg).unwrap();
        let mut previous: Option<(usize, usize)> = None;
        for alpha in [0.01, 0.05, 0.1, 0.2, 0.5] {
            let ci = fit.rank_ci(alpha).unwrap();
            if ci.lower > ci.upper {
                problems.push(format!("case {case}: empty interval"));
            }
            if let Some((lo, hi)) = previous {
                if ci.lower < lo || ci.upper > hi {
                    problems.push(format!("case {case}: intervals not nested"));
                }
            }
            previous = Some((ci.lower, ci.upper));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "500 random inputs, no violations".to_string()
        } else {
            format!("{} violations, first: {}", problems.len(), problems[0])
        },
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let only: Option<HashSet<usize>> = std::env::var("SRCI_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "point estimate consistency", consistency),
        (2, "coverage, gamma = 0.5", coverage_high_gamma),
        (3, "coverage, gamma = 0.2", coverage_low_gamma),
        (4, "stress scenario a contrast", stress_contrast),
        (5, "competing approximations overestimate spread", variance_overestimation),
        (6, "distribution suite", distribution_suite),
        (7, "ci output independent of thread count", thread_determinism),
        (8, "structural invariants under fuzzing", structural_fuzz),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {id} [{}] {name}: {} ({:.0}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing criteria");
    if failed > 0 && std::env::var_os("SRCI_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
