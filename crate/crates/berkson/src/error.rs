use thiserror::Error;

/// Errors surfaced by the estimation and verification machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Polynomial design matrix does not have full column rank.
    #[error("rank-deficient design matrix for polynomial order {order}")]
    RankDeficient { order: usize },

    /// The 2x2 system eliminating the first two density coefficients is singular.
    #[error("singular constraint elimination system (det = {det:e})")]
    SingularElimination { det: f64 },

    /// The starting point remained infeasible after repeated scale inflation.
    #[error("no feasible starting point after {attempts} scale inflations")]
    NoFeasibleStart { attempts: usize },

    /// The optimizer's initial point was rejected by the objective.
    #[error("initial point is infeasible")]
    InfeasibleStart,

    #[error("objective returned a non-finite value")]
    NonFiniteObjective,

    /// An observed operator matrix is too ill-conditioned to invert.
    #[error("matrix numerically singular (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    /// No eigenvector ordering satisfied the centering rule.
    #[error("no eigenvector ordering meets the centering tolerance (best violation {violation:.3e})")]
    CenteringFailure { violation: f64, profile: Vec<f64> },

    /// A constructed value violates a documented invariant.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
