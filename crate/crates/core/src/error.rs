use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance is not positive definite{}", if *.after_repair { " after ridge repair" } else { "" })]
    NotPositiveDefinite { after_repair: bool },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("truncation region has probability {mass:e}, below the floor")]
    DegenerateRegion { mass: f64 },

    #[error("every component is degenerate for observation {row}")]
    AllComponentsDegenerate { row: usize },

    #[error("component {component} collapsed (effective size {effective_size:.3})")]
    ComponentCollapse { component: usize, effective_size: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("every restart failed: {0}")]
    FitFailed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
