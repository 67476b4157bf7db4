use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the requested quantity.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Sample/population pairing is inconsistent for one cell.
    #[error("cell {cell}: sample frequency {sample} exceeds population frequency {population}")]
    PairingViolation {
        cell: String,
        sample: u64,
        population: u64,
    },

    /// A root-finding or optimisation routine did not settle.
    #[error("{routine} did not converge: {detail}")]
    NonConvergence {
        routine: &'static str,
        detail: String,
    },

    /// The estimating equation has no finite solution for this data.
    #[error("no finite solution: {0}")]
    Unbounded(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
