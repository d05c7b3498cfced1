use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable / malformed input files.
    #[error("{0}")]
    Input(String),
    /// Numerical failure or a fit that produced no usable result.
    #[error("{0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<censgmr::Error> for CliError {
    fn from(e: censgmr::Error) -> Self {
        match e {
            censgmr::Error::InvalidInput(_) | censgmr::Error::Dimension(_) | censgmr::Error::InvalidRegion(_) | censgmr::Error::RankDeficient => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
