use thiserror::Error;

/// Errors shared across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("dynamics blow-up at node {node}")]
    DynamicsBlowUp { node: usize },

    #[error("strong convexity violated at node {node}: g''(u) = {value}")]
    StrongConvexityViolated { node: usize, value: f64 },

    #[error("non-finite coefficient at node {node}: {what}")]
    NonFiniteCoefficient { node: usize, what: String },

    #[error("infeasible boxes at node {node}: alpha = {alpha} > beta = {beta}")]
    InfeasibleBoxes { node: usize, alpha: f64, beta: f64 },

    #[error("rank-deficient equality system: {0}")]
    RankDeficient(String),

    #[error("KKT factorization failure: {0}")]
    KktFactorization(String),

    #[error("max iterations exceeded after {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("max outer iterations exceeded after {iterations} iterations (step norm {step_norm:.3e})")]
    MaxOuterIterations { iterations: usize, step_norm: f64 },

    #[error("unbounded dual: objective fell below {0:.3e}")]
    UnboundedDual(f64),

    #[error("line search stalled at outer iteration {iteration}")]
    LineSearchStalled { iteration: usize },

    #[error("instance too large for enumeration oracle: {n_controls} controls (limit {limit})")]
    InstanceTooLarge { n_controls: usize, limit: usize },

    #[error("third derivative unavailable")]
    ThirdDerivativeUnavailable,

    #[error("terminal constraint present: use the line-search algorithm")]
    TerminalConstraintUnsupported,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("derivative check failed: {0}")]
    DerivativeCheck(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with outer-loop context.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
