use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// Invalid configuration: bad grid, unnormalized density, unknown experiment, etc.
    #[error("configuration error: {0}")]
    Config(String),

    /// A closed form was evaluated outside its domain (e.g. Z <= 0 before sigma).
    #[error("domain error: {0}")]
    Domain(String),

    /// The (measure change, scenario) pairing has no implementation.
    #[error("unsupported pairing: {spec} on {scenario}")]
    Unsupported { spec: String, scenario: String },

    /// The path never resolved its terminal event within the extended horizon.
    #[error("path censored: terminal event unresolved within the horizon")]
    Censored,

    /// Weighted statistic with too few effective samples.
    #[error("degenerate weights: effective sample size {n_eff:.1} < {min}")]
    DegenerateWeights { n_eff: f64, min: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
