//! Error taxonomy shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of schedules, controllers, samplers and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated (dimension mismatch, bad range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A `1/(1-t)` controller or flow formula was evaluated at `t >= 1`.
    #[error("singular time: t = {t} but the formula requires t < 1")]
    SingularTime { t: f64 },

    /// DDIM denoise direction is undefined: `alpha_bar = 1` while the clean
    /// estimate differs from the state.
    #[error("singular denoise at step {step}: alpha_bar = 1 but the clean estimate differs from the state")]
    SingularDenoise { step: usize },

    /// A NaN or infinity surfaced mid-computation; the context names the step.
    #[error("numerical failure: {context}")]
    NumericalFailure { context: String },

    /// A simulated trajectory left the finite domain.
    #[error("trajectory aborted at step {step}: non-finite state; last finite state {last_state:?}")]
    AbortedTrajectory { step: usize, last_state: Vec<f64> },

    /// The shooting root-finder hit its iteration cap.
    #[error("root finder did not converge after {iterations} iterations (final residual {residual:.3e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    /// A linear system required by a closed form was singular.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Experiment configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract of the CLI: 2 for config problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        Error::NumericalFailure {
            context: context.into(),
        }
    }
}
