use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("probability {name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },

    #[error("outcome {outcome} of qubit {qubit} has zero probability")]
    ZeroProbabilityBranch { qubit: usize, outcome: u8 },

    #[error("invalid attack operator: {0}")]
    InvalidAttack(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent observation: {0}")]
    Inconsistent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Probability { name, value })
    }
}
