//! Estimation of the number of factors (or principal components) in a data
//! matrix, with confidence intervals built by subsampling.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: dense matrices, file I/O, standardization and covariance spectra.
//! - [`distributions`]: normal, Cauchy, Tracy–Widom (β = 1) and Marchenko–Pastur laws.
//! - [`sim`]: factor-model and spiked-PCA data generators plus the named scenario catalog.
//! - [`estimate`]: the Tracy–Widom likelihood point estimator and a row-bootstrap baseline.
//! - [`subsample`]: block-subsampling confidence intervals for the number of components.
//! - [`edgeworth`]: normal-approximation diagnostics for spiked eigenvalues.
//! - [`coverage`]: Monte Carlo coverage harness.

pub mod coverage;
pub mod distributions;
pub mod edgeworth;
mod error;
pub mod estimate;
pub mod matrix;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod subsample;

pub use error::{Error, Result};

pub use coverage::{run_coverage, write_report, CoverageReport, Method};
pub use estimate::{nb_rank_ci, tw_likelihood_rank, RankEstimate};
pub use matrix::{
    covariance_spectrum, load_matrix, standardize_columns, submatrix, write_matrix, DataMatrix, EigenSpectrum,
    MatrixFormat,
};
pub use sim::{generate_fa, generate_pca, scenario_catalog, ModelKind, SpikedModelSpec};
pub use subsample::{subsample_rank_ci, RankCI, SubsampleConfig, SubsampleFit};
