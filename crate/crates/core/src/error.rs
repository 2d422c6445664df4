use thiserror::Error;

/// Errors raised by model construction, solvers and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid jump specification for asset {asset}: {reason}")]
    InvalidJumpSpec { asset: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("volatility matrix is singular at node {node} (|det| = {det:e})")]
    SingularSigma { node: usize, det: f64 },

    #[error("1 + pi*z <= 0 on the jump support of asset {asset} (pi = {pi})")]
    UnsupportedSupport { asset: usize, pi: f64 },

    #[error("time {0} is not a grid node")]
    OffGrid(f64),

    #[error("exponential moment of the jump functional is not finite")]
    MomentDiverges,

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("drift of asset {asset} is below the riskless rate at node {node}")]
    DriftBelowRate { asset: usize, node: usize },

    #[error("first-order system did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("kappa = {kappa} outside the admissible range ({lo}, {hi})")]
    KappaOutOfRange { kappa: f64, lo: f64, hi: f64 },

    #[error("negative jump sizes present but assumption (J) is required")]
    AssumptionJViolated,

    #[error("negative jump sizes present and negative-jump adjustment is off")]
    NegativeJumpsPresent,

    #[error("adjusted market price of risk has a negative component (asset {asset}, node {node})")]
    ThetaHatNegative { asset: usize, node: usize },

    #[error("condition violated: {name} (lhs = {lhs}, rhs = {rhs})")]
    ConditionViolated { name: String, lhs: f64, rhs: f64 },

    #[error("negative-jump probability {epsilon} is not below beta = {beta}")]
    EpsilonTooLarge { epsilon: f64, beta: f64 },

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("no feasible candidate on the oracle grid")]
    EmptyFeasibleSet,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
