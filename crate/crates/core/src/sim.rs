//! Synthetic data under the factor model `X = Z Θ^{1/2} Λᵀ + E` and the
//! spiked-covariance PCA model, plus the catalog of named experiment settings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, label_hash, substream, tag, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fa,
    Pca,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Fa => "FA",
            ModelKind::Pca => "PCA",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fa" => Ok(ModelKind::Fa),
            "pca" => Ok(ModelKind::Pca),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

fn default_noise_factor() -> f64 {
    1.0
}

/// Generative description of one synthetic dataset.
///
/// `scales` holds θ₁..θᵣ; an empty list means no factors. `noise_factor`
/// multiplies the residual standard deviation. `r0` optionally carries an
/// externally computed rank estimate that harnesses feed to the interval
/// procedure instead of the built-in point estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModelSpec {
    pub kind: ModelKind,
    pub n_rows: usize,
    pub n_cols: usize,
    #[serde(default)]
    pub scales: Vec<f64>,
    #[serde(default = "default_noise_factor")]
    pub noise_factor: f64,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<usize>,
}

impl SpikedModelSpec {
    pub fn new(kind: ModelKind, n_rows: usize, n_cols: usize, scales: Vec<f64>) -> Self {
        Self { kind, n_rows, n_cols, scales, noise_factor: 1.0, label: String::new(), r0: None }
    }

    pub fn with_noise_factor(mut self, noise_factor: f64) -> Self {
        self.noise_factor = noise_factor;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// True number of factors.
    pub fn rank(&self) -> usize {
        self.scales.len()
    }

    pub fn gamma(&self) -> f64 {
        self.n_cols as f64 / self.n_rows as f64
    }

    /// Population spike sizes: θ + noise² under FA, θ under PCA.
    pub fn population_spikes(&self) -> Vec<f64> {
        let nf2 = self.noise_factor * self.noise_factor;
        self.scales
            .iter()
            .map(|&t| match self.kind {
                ModelKind::Fa => t + nf2,
                ModelKind::Pca => t,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.rank() > self.n_rows.min(self.n_cols) {
            return Err(Error::invalid(format!(
                "{} factors exceed min(n, p) = {}",
                self.rank(),
                self.n_rows.min(self.n_cols)
            )));
        }
        if let Some(t) = self.scales.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::invalid(format!("scale factors must be positive, got {t}")));
        }
        if !(self.noise_factor.is_finite() && self.noise_factor > 0.0) {
            return Err(Error::invalid(format!("noise factor must be positive, got {}", self.noise_factor)));
        }
        Ok(())
    }

    fn base_seed(&self, seed: u64) -> u64 {
        derive_seed(seed, &[label_hash(&self.label)])
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!("spec `{}` is {}, expected {kind}", self.label, self.kind)));
        }
        Ok(())
    }
}

fn gaussian_mat(rng: &mut StreamRng, rows: usize, cols: usize, sd: f64) -> Mat<f64> {
    // filled row by row so the draw order is independent of storage layout
    let mut m = Mat::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = sd * z;
        }
    }
    m
}

/// First `r` columns of a Haar-distributed `p × p` orthogonal matrix: the
/// thin Q factor of a Gaussian matrix with the signs of R's diagonal folded in.
fn haar_columns(rng: &mut StreamRng, p: usize, r: usize) -> Mat<f64> {
    let g = gaussian_mat(rng, p, r, 1.0);
    if r == 0 {
        return g;
    }
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let rdiag: Vec<f64> = (0..r).map(|j| qr.R()[(j, j)]).collect();
    for (j, d) in rdiag.into_iter().enumerate() {
        if d < 0.0 {
            for i in 0..p {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Signal and noise parts of a factor-model draw, kept separate for
/// diagnostics; the data matrix is their sum.
#[derive(Debug, Clone)]
pub struct FaComponents {
    pub loadings: DataMatrix,
    pub signal: DataMatrix,
    pub noise: DataMatrix,
}

pub fn fa_components(spec: &SpikedModelSpec, seed: u64) -> Result<FaComponents> {
    spec.expect_kind(ModelKind::Fa)?;
    spec.validate()?;
    let (n, p, r) = (spec.n_rows, spec.n_cols, spec.rank());
    let base = spec.base_seed(seed);

    let lambda = haar_columns(&mut substream(base, &[tag::LOADINGS]), p, r);
    let mut scores = gaussian_mat(&mut substream(base, &[tag::SCORES]), n, r, 1.0);
    for (j, t) in spec.scales.iter().enumerate() {
        let s = t.sqrt();
        for i in 0..n {
            scores[(i, j)] *= s;
        }
    }
    let mut signal = Mat::<f64>::zeros(n, p);
    if r > 0 {
        matmul(signal.as_mut(), Accum::Replace, scores.as_ref(), lambda.transpose(), 1.0, Par::Seq);
    }
    let noise = gaussian_mat(&mut substream(base, &[tag::NOISE]), n, p, spec.noise_factor);

    let loadings = if r == 0 { DataMatrix::new(p, 1, vec![0.0; p])? } else { DataMatrix::from_faer(lambda.as_ref())? };
    Ok(FaComponents {
        loadings,
        signal: DataMatrix::from_faer(signal.as_ref())?,
        noise: DataMatrix::from_faer(noise.as_ref())?,
    })
}

/// Factor-model data: standard normal scores `Z`, orthonormal loadings `Λ`,
/// and i.i.d. `N(0, noise_factor²)` residuals.
pub fn generate_fa(spec: &SpikedModelSpec, seed: u64) -> Result<DataMatrix> {
    let parts = fa_components(spec, seed)?;
    let values = parts.signal.values().iter().zip(parts.noise.values()).map(|(s, e)| s + e).collect();
    DataMatrix::new(spec.n_rows, spec.n_cols, values)
}

/// Spiked-PCA data: rows i.i.d. `N(0, Σ)` with
/// `Σ = V diag(θ₁..θᵣ, ν², …, ν²) Vᵀ`, `ν` the noise factor and `V` Haar.
///
/// Only the leading `r` columns of `V` matter: with `G` standard normal,
/// `X = ν G + (G V_r) diag(√θ − ν) V_rᵀ` has exactly that covariance.
pub fn generate_pca(spec: &SpikedModelSpec, seed: u64) -> Result<DataMatrix> {
    spec.expect_kind(ModelKind::Pca)?;
    spec.validate()?;
    let (n, p, r) = (spec.n_rows, spec.n_cols, spec.rank());
    let nu = spec.noise_factor;
    let base = spec.base_seed(seed);

    let v = haar_columns(&mut substream(base, &[tag::LOADINGS]), p, r);
    let g = gaussian_mat(&mut substream(base, &[tag::NOISE]), n, p, 1.0);
    let mut x = Mat::<f64>::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            x[(i, j)] = nu * g[(i, j)];
        }
    }
    if r > 0 {
        let mut proj = Mat::<f64>::zeros(n, r);
        matmul(proj.as_mut(), Accum::Replace, g.as_ref(), v.as_ref(), 1.0, Par::Seq);
        for (j, t) in spec.scales.iter().enumerate() {
            let c = t.sqrt() - nu;
            for i in 0..n {
                proj[(i, j)] *= c;
            }
        }
        matmul(x.as_mut(), Accum::Add, proj.as_ref(), v.transpose(), 1.0, Par::Seq);
    }
    DataMatrix::from_faer(x.as_ref())
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &SpikedModelSpec, seed: u64) -> Result<DataMatrix> {
    match spec.kind {
        ModelKind::Fa => generate_fa(spec, seed),
        ModelKind::Pca => generate_pca(spec, seed),
    }
}

/// The population covariance `Σ` that [`generate_pca`] samples from for the
/// same `(spec, seed)`.
pub fn pca_population_covariance(spec: &SpikedModelSpec, seed: u64) -> Result<DataMatrix> {
    spec.expect_kind(ModelKind::Pca)?;
    spec.validate()?;
    let (p, r) = (spec.n_cols, spec.rank());
    let nu2 = spec.noise_factor * spec.noise_factor;
    let v = haar_columns(&mut substream(spec.base_seed(seed), &[tag::LOADINGS]), p, r);
    let mut sigma = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        sigma[(i, i)] = nu2;
    }
    if r > 0 {
        let mut scaled = v.clone();
        for (j, t) in spec.scales.iter().enumerate() {
            for i in 0..p {
                scaled[(i, j)] *= t - nu2;
            }
        }
        matmul(sigma.as_mut(), Accum::Add, scaled.as_ref(), v.transpose(), 1.0, Par::Seq);
    }
    DataMatrix::from_faer(sigma.as_ref())
}

const CATALOG_ROWS: usize = 1500;

fn table1_scales(r: usize) -> Vec<f64> {
    (0..r).map(|i| 10.0 + 5.0 * i as f64).collect()
}

fn cols_for(gamma: f64) -> usize {
    (CATALOG_ROWS as f64 * gamma).round() as usize
}

/// Named experiment settings.
///
/// - `T1-{FA,PCA}-r{0..5}-g{0.2,0.5}`: scale factors `{10, 15, …}` for `r`
///   factors, `n = 1500`, `p = γ n`.
/// - `stress-a` … `stress-f`: three-factor stress settings with weak
///   factors and/or inflated noise.
/// - `fig2`: four equal factors of scale 15 at `n = 1500, p = 600`.
pub fn scenario_catalog() -> BTreeMap<String, SpikedModelSpec> {
    let mut out = BTreeMap::new();
    for kind in [ModelKind::Fa, ModelKind::Pca] {
        for gamma in [0.2, 0.5] {
            for r in 0..=5 {
                let label = format!("T1-{kind}-r{r}-g{gamma}");
                let spec = SpikedModelSpec::new(kind, CATALOG_ROWS, cols_for(gamma), table1_scales(r))
                    .with_label(label.clone());
                out.insert(label, spec);
            }
        }
    }
    let stress = [
        ("a", [1.0, 1.0, 10.0], 1.0, 0.2),
        ("b", [10.0, 10.0, 1.0], 1.0, 0.2),
        ("c", [1.0, 1.0, 1.0], 6.0, 0.2),
        ("d", [1.0, 1.0, 10.0], 1.0, 0.5),
        ("e", [10.0, 10.0, 1.0], 1.0, 0.5),
        ("f", [1.0, 1.0, 1.0], 6.0, 0.5),
    ];
    for (name, scales, noise, gamma) in stress {
        let label = format!("stress-{name}");
        let spec = SpikedModelSpec::new(ModelKind::Fa, CATALOG_ROWS, cols_for(gamma), scales.to_vec())
            .with_noise_factor(noise)
            .with_label(label.clone());
        out.insert(label, spec);
    }
    out.insert("fig2".into(), SpikedModelSpec::new(ModelKind::Fa, CATALOG_ROWS, 600, vec![15.0; 4]).with_label("fig2"));
    out
}

/// On-disk list of scenarios (`[[scenario]]` tables in TOML, or
/// `{"scenario": [...]}` in JSON).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: Vec<SpikedModelSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let file: ScenarioFile = if json {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        for s in &file.scenario {
            s.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
