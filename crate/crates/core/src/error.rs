use thiserror::Error;

/// Errors raised by drift evaluation, flows and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("density underflow at query point {point:?}: {context}")]
    Singularity { point: Vec<f64>, context: String },

    #[error(
        "sinkhorn did not converge after {iterations} iterations \
         (row error {row_err:.3e}, column error {col_err:.3e})"
    )]
    NotConverged {
        iterations: usize,
        row_err: f64,
        col_err: f64,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
