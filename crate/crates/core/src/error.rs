use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A static user whose rate floor cannot be met.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    /// Index of the user inside the static set handed to the solver.
    pub user: usize,
    /// Power needed to reach the rate floor on the assigned link (W).
    pub required_w: f64,
    /// Budget that was available (W).
    pub budget_w: f64,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "user {} needs {:.6e} W to reach the rate floor, budget is {:.6e} W",
            self.user, self.required_w, self.budget_w
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-terminating contention cascade: {remaining} contenders left after {rounds} rounds")]
    NonTerminatingCascade { rounds: usize, remaining: usize },

    #[error("degenerate frame: no static and no mobile users")]
    DegenerateFrame,

    #[error("infeasible rate floor: {0}")]
    Infeasible(Infeasibility),

    #[error("{users} static users exceed the scheduling capacity of {capacity} slots")]
    Capacity { users: usize, capacity: usize },

    #[error("no RIS available")]
    NoRisAvailable,

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("allocation does not match mode {0}")]
    ModeMismatch(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
