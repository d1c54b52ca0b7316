use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operator power exceeds the ladder height, so the operator is identically zero.
    #[error("S^{power} vanishes on a ladder with N = {n_atoms}")]
    EmptyOperator { power: usize, n_atoms: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("division by zero detuning `{0}`")]
    ZeroDetuning(&'static str),

    #[error("integration accuracy failure: {0}")]
    Accuracy(String),

    #[error("positivity failure: eigenvalue {0:e} below tolerance")]
    Positivity(f64),

    #[error("search failure: {0}")]
    Search(String),

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("model `{0}` has no dissipative specification")]
    NoDissipation(&'static str),

    #[error("logic error: {0}")]
    Logic(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of numerical accuracy (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Accuracy(_) | Error::Positivity(_) | Error::Search(_) | Error::Fit(_)
        )
    }
}
