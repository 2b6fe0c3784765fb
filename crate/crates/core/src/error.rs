use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum NepError {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("game not strongly monotone: smallest eigenvalue of the symmetric pseudo-gradient part is {mu:.3e}")]
    NotStronglyMonotone { mu: f64 },

    #[error("graph is not connected")]
    Disconnected,

    #[error("graph effectively disconnected: lambda_2(I - W) = {lambda2:.3e}")]
    EffectivelyDisconnected { lambda2: f64 },

    #[error("invalid mixing matrix: {0}")]
    MixingMatrix(String),

    #[error("step size {alpha:.6e} violates the restricted monotonicity bound alpha_max = {alpha_max:.6e}")]
    StepTooLarge { alpha: f64, alpha_max: f64 },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error(
        "equilibrium oracle did not converge after {iters} iterations (residual {residual:.3e})"
    )]
    OracleFailure { iters: usize, residual: f64 },

    #[error("local proximal subproblem of agent {agent} did not converge after {iters} iterations (residual {residual:.3e})")]
    InnerSolve {
        agent: usize,
        iters: usize,
        residual: f64,
    },

    #[error("divergence detected at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NepError>;
