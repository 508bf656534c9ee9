use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("robots {0} and {1} have coincident centers")]
    CoincidentCenters(u32, u32),
    #[error("robot center lies on obstacle segment")]
    RobotOnSegment,
    #[error("QP solver failed: {0}")]
    Solver(#[from] QpError),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("tick {tick} aborted for robot {robot}: {source}\nsnapshot: {snapshot}")]
    TickAborted {
        tick: u64,
        robot: u32,
        source: Box<McError>,
        snapshot: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("quadratic form is not positive definite on the feasible subspace")]
    NotConvex,
    #[error("equality constraints are inconsistent (residual {0:.3e})")]
    InconsistentEqualities(f64),
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("no convergence after {iterations} iterations (KKT residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("malformed problem: {0}")]
    Malformed(String),
}
