use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off_diagonal:.3e})")]
    EigenNoConvergence { sweeps: usize, off_diagonal: f64 },

    #[error("zero-field levels are degenerate (smallest gap {min_gap_hz:.3e} Hz); closed-form perturbation theory is undefined")]
    DegenerateLevels { min_gap_hz: f64 },

    #[error("hyperfine and g tensor principal frames are not aligned")]
    MisalignedTensors,

    #[error("no unique zero-field partner state for level {level} along principal axis {axis}")]
    NoUniquePartner { level: usize, axis: usize },

    #[error("{level} electronic level is not configured")]
    MissingLevel { level: &'static str },

    #[error("optimizer did not converge after {iterations} iterations (best objective {best_value:.6e} at {best_point:?})")]
    NoConvergence {
        iterations: usize,
        best_value: f64,
        best_point: Vec<f64>,
    },

    #[error("decay curve is degenerate (constant amplitude)")]
    DegenerateCurve,

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
