use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("singular point: |f'(x)| = {deriv:e} at x = {x}")]
    Singularity { x: f64, deriv: f64 },
    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },
    #[error("degenerate saddle-node: second derivative {0:e}")]
    Degenerate(f64),
    #[error("orientation check failed: {0}")]
    Orientation(String),
    #[error("continuation lost at gamma = {gamma}")]
    ContinuationLost { gamma: f64 },
    #[error("displacement has the wrong sign for gamma = {gamma}")]
    DisplacementSign { gamma: f64 },
    #[error("phase quadrature is not monotone")]
    NonMonotone,
    #[error("point {x} is outside the chart domain")]
    OutOfDomain { x: f64 },
    #[error("lost bracket while solving for {what}")]
    BracketLoss { what: String },
    #[error("no root in rung {l}")]
    NoRootInRung { l: usize },
    #[error("orbit escaped from {0}")]
    Escape(&'static str),
    #[error("backward solve failed at depth {0}")]
    BackwardSolve(usize),
    #[error("empty interval")]
    EmptyInterval,
    #[error("binding period exceeded cap {0}")]
    CapReached(usize),
    #[error("only {0} unmasked points, need at least 6")]
    InsufficientPoints(usize),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

impl Error {
    /// Short stable code for failure records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Singularity { .. } => "singularity",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Degenerate(_) => "degenerate",
            Error::Orientation(_) => "orientation",
            Error::ContinuationLost { .. } => "continuation_lost",
            Error::DisplacementSign { .. } => "displacement_sign",
            Error::NonMonotone => "non_monotone",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::BracketLoss { .. } => "bracket_loss",
            Error::NoRootInRung { .. } => "no_root_in_rung",
            Error::Escape(_) => "escape",
            Error::BackwardSolve(_) => "backward_solve",
            Error::EmptyInterval => "empty_interval",
            Error::CapReached(_) => "cap_reached",
            Error::InsufficientPoints(_) => "insufficient_points",
            Error::Geometry(_) => "geometry",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
