use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent run configuration.
    #[error("config: {0}")]
    Config(String),

    /// Topology file problems: parse errors, schema violations, disconnected graphs.
    #[error("topology: {0}")]
    Topology(String),

    /// Bad input data: label violations, missing artifacts, malformed scenario files.
    #[error("data: {0}")]
    Data(String),

    /// Dimension disagreements between tensors, windows, models and scenarios.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Model file format problems: bad magic, version or section layout.
    #[error("model file: {0}")]
    ModelFile(String),

    /// Numerical failures: divergence, non-finite values, solver non-convergence.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for data/model/I-O problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Topology(_)
            | Error::Data(_)
            | Error::Shape(_)
            | Error::ModelFile(_)
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
