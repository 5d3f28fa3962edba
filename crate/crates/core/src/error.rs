use thiserror::Error;

use crate::grid::Field;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid exponent {name} = {value}: expected a value in [1, inf]")]
    InvalidExponent { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An index tuple outside the hypotheses of the estimate being checked.
    /// The message names the violated inequality.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("frequency partition does not cover the spectrum: {0}")]
    InsufficientPartition(String),

    #[error("Hermite truncation tail {tail:.3e} exceeds {limit:.1e}")]
    TruncationTail { tail: f64, limit: f64 },

    #[error("Picard iteration is not contracting (measured ratio {ratio:.4} after {iterations} iterations)")]
    Diverged { ratio: f64, iterations: usize },

    #[error("blow-up suspected at t = {time}: non-finite state")]
    BlowUp { time: f64, last: Box<Field> },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
