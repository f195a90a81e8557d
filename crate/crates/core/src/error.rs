use thiserror::Error;

/// Errors produced by the model, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (negative capacity,
    /// nonpositive demand, an output factor outside `[0, 1]`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("index out of range: {what} {index} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// The regulated profit floor cannot be met.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// No sign change was found while growing the search interval.
    #[error("no bracket found: {0}")]
    NoBracket(String),

    /// A certificate check on a computed solution failed. Indicates a bug or
    /// a numerically degenerate instance rather than bad user input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { what, index, len })
    }
}
