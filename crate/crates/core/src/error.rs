use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate distribution: every outcome probability is below the floor {floor:e}")]
    DegenerateDistribution { floor: f64 },

    #[error("non-informative point: Fisher information is zero")]
    NonInformative,

    #[error("Poisson truncation at m = {max_m} leaves tail mass {tail:e}")]
    InsufficientTruncation { max_m: usize, tail: f64 },

    #[error("distance {r} um is below the interaction model floor {floor} um")]
    DistanceBelowFloor { r: f64, floor: f64 },

    #[error("{n_atoms} atoms exceed the dense engine cap of {max}")]
    DimensionOverflow { n_atoms: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t:e} s")]
    StepBudgetExhausted { t: f64, max_steps: usize },

    #[error("density matrix invariant violated: {what} = {value:e} (limit {limit:e})")]
    InvariantViolation { what: &'static str, value: f64, limit: f64 },

    #[error("leakage {leakage:.4} out of the qubit subspace exceeds {threshold:.4}")]
    Leakage { leakage: f64, threshold: f64 },

    #[error("poor unitary fit: residual {residual:.4} > {threshold:.4}")]
    PoorFit { residual: f64, threshold: f64 },

    #[error("fit did not converge after {iterations} iterations (initial guess {initial:?})")]
    FitNonConvergence { iterations: usize, initial: [f64; 3] },

    #[error("not enough points: need {need}, have {have}")]
    NotEnoughPoints { need: usize, have: usize },

    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Trajectory { context: String, source: Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

impl Error {
    /// Wrap with the work item that raised it.
    pub fn within(self, context: impl Into<String>) -> Self {
        Error::Trajectory { context: context.into(), source: Box::new(self) }
    }
}
