//! Censored (tobit) multivariate Gaussian mixtures of regressions.
//!
//! The crate fits finite mixtures of multivariate linear regressions whose
//! responses are subject to known lower and upper detection limits. The
//! E-step uses moments of truncated conditional Gaussians; standard errors
//! come from the empirical outer product of complete-data scores.

pub mod error;
pub mod linalg;
pub mod rng;
pub mod truncated_gaussian;

pub use error::{Error, Result};
pub use truncated_gaussian::{
    conditional_params, mvn_cdf, mvn_logpdf, truncated_moments, CdfResult, GaussianParams, QmcConfig, RectRegion,
    TruncatedMoments,
};
pub mod dataset;
mod estep;
pub mod tobit;

pub use dataset::{apply_censoring, CensoredDataset, DetectionLimits};
pub use tobit::{fit_tobit, tobit_estep, tobit_loglik, EmConfig, EmTrace, RegressionParams};
pub mod mixture;

pub use mixture::{
    classify, component_loglik, e_step, fit_mixture, m_step, mixture_loglik, run_em, FitConfig, FitResult, InitStrategy, MixtureParams,
    MomentCache, Responsibilities,
};
pub mod inference;

pub use inference::{
    complete_score, empirical_information, score_matrix, stationarity, wald_tests, Information, ParamIndex, WaldEntry,
    WaldReport,
};
pub mod selection;

pub use selection::{icl_bic, select_g, Criteria, EntropyKind, SelectionTable};
pub mod simulation;

pub use simulation::{adjusted_rand_index, align_components, generate, ScenarioConfig, Simulated};
