//! Scalar distribution functions.

mod edgeworth;
mod marchenko_pastur;
mod normal;
mod tracy_widom;

pub use edgeworth::{edgeworth_density, edgeworth_p1, EdgeworthCoefficients};
pub use marchenko_pastur::{mp_functional, mp_pdf, MpLaw};
pub use normal::{cauchy_pdf, normal_cdf, normal_pdf, normal_quantile};
pub use tracy_widom::{tw1_cdf, tw1_pdf, TW1_MODE};
