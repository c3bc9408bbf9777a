use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration blew up at step {step} (|x| > {limit:e} or non-finite)")]
    BlowUp { step: usize, limit: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("Gram matrix is rank deficient: rank {rank} < {size}")]
    RankDeficient { rank: usize, size: usize },

    #[error("degenerate intersection: the two quadratics coincide")]
    DegenerateIntersection,

    #[error("no intersection in [{lo}, {hi}]; widen the assumed-parameter scan")]
    NoIntersection { lo: f64, hi: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Numerical failures (blow-up, degeneracy) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::NonFinite(_)
                | Error::RankDeficient { .. }
                | Error::DegenerateIntersection
                | Error::NoIntersection { .. }
        )
    }
}
