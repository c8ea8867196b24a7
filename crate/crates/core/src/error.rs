use thiserror::Error;

/// Errors raised by the solvers and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("p out of subcritical range: p = {p}, must lie in (1, {upper}) for d = {d}")]
    SupercriticalPower { p: f64, d: usize, upper: f64 },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("grid function length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample {index} is exactly zero and the zero policy is `reject`")]
    DegenerateZero { index: usize },

    #[error("component {component} has a non-positive L^(p+1) quadrature ({value})")]
    EmptyComponent { component: usize, value: f64 },

    #[error("bracket expansion failed: {nodes} sign changes at b = {b} after {doublings} doublings, target {target}")]
    BracketExpansionFailed {
        target: usize,
        b: f64,
        nodes: usize,
        doublings: usize,
    },

    #[error("node count changed from {expected} to {found} at iteration {iteration}")]
    NodeCountChanged {
        expected: usize,
        found: usize,
        iteration: usize,
    },

    #[error("maximum iteration count {max_iter} exceeded (last criterion {crit:e})")]
    MaxIterExceeded { max_iter: usize, crit: f64 },

    #[error("initial datum has {found} sign changes, fewer than the {requested} requested")]
    NotEnoughNodes { requested: usize, found: usize },

    #[error("grid sizes are not nested: {n} does not divide {n_ref}")]
    NonNestedGrids { n: usize, n_ref: usize },

    #[error("rank-deficient least-squares problem: {0}")]
    RankDeficient(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl SolverError {
    /// Stable machine-readable identifier, used in error reports.
    pub fn code(&self) -> &'static str {
        match self {
            SolverError::InvalidParameter(_) => "InvalidParameter",
            SolverError::SupercriticalPower { .. } => "SupercriticalPower",
            SolverError::NonFinite { .. } => "NonFinite",
            SolverError::LengthMismatch { .. } => "LengthMismatch",
            SolverError::DegenerateZero { .. } => "DegenerateZero",
            SolverError::EmptyComponent { .. } => "EmptyComponent",
            SolverError::BracketExpansionFailed { .. } => "BracketExpansionFailed",
            SolverError::NodeCountChanged { .. } => "NodeCountChanged",
            SolverError::MaxIterExceeded { .. } => "MaxIterExceeded",
            SolverError::NotEnoughNodes { .. } => "NotEnoughNodes",
            SolverError::NonNestedGrids { .. } => "NonNestedGrids",
            SolverError::RankDeficient(_) => "RankDeficient",
            SolverError::Precondition(_) => "Precondition",
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;
