use thiserror::Error;

/// Exit codes: 0 success, 1 check failure or I/O failure, 2 configuration
/// error, 3 runtime divergence.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] driftflow::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("failed to parse config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Toml(_) => 2,
            CliError::Lib(e) => lib_code(e),
            _ => 1,
        }
    }
}

fn lib_code(e: &driftflow::Error) -> i32 {
    use driftflow::Error as E;
    match e {
        E::Config(_) | E::Argument(_) | E::Shape(_) => 2,
        E::NonFinite(_) | E::Singularity { .. } | E::NotConverged { .. } => 3,
        E::AtStep { source, .. } => lib_code(source),
        E::Io(_) | E::Csv(_) | E::Json(_) => 1,
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Numeric failures inside a run (density underflow, non-convergence,
/// non-finite values) as opposed to bad input.
pub fn is_runtime(e: &driftflow::Error) -> bool {
    lib_code(e) == 3
}
