use thiserror::Error;

/// Errors surfaced by the simulation, sampling and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible operating point: {0}")]
    InfeasibleOperatingPoint(String),

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error(
        "cyclic steady state not reached after {switches} switches (residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    CssNotConverged {
        switches: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("degenerate simulation: {0}")]
    DegenerateSimulation(String),

    #[error("diagnostic undefined: {0}")]
    UndefinedDiagnostic(String),

    #[error("rank-deficient jacobian: smallest singular value {min_sv:.3e} of largest {max_sv:.3e}")]
    RankDeficientJacobian { min_sv: f64, max_sv: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
