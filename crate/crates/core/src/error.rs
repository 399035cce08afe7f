use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{j} = {divisor}·{cofactor} not prime")]
    NotPrime {
        j: usize,
        divisor: usize,
        cofactor: usize,
    },
    #[error("J = {0} is not prime (J must be a prime ≥ 2)")]
    TooSmall(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mask has {count} occupied cells but J = {j}; raise J or coarsen the mask")]
    TooManyCells { count: usize, j: usize },
    #[error("cells {first:?} and {second:?} coincide modulo J = {j}")]
    AliasedCells {
        first: (usize, usize),
        second: (usize, usize),
        j: usize,
    },
    #[error("nonzero scattering mass in cell ({a}, {b}) outside the cover")]
    MassOutsideCover { a: usize, b: usize },
    #[error("invalid scattering value {value} at cell {cell}, sample ({s}, {q})")]
    InvalidValue {
        cell: usize,
        s: usize,
        q: usize,
        value: f64,
    },
    #[error("ill-conditioned frame submatrix (cond = {cond:.3e}); reseed weights")]
    IllConditioned { cond: f64 },
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("echo ensemble is empty")]
    EmptyEnsemble,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::IllConditioned { .. })
    }
}
