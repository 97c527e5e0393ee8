use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate feature{}", .name.as_ref().map(|n| format!(" '{n}'")).unwrap_or_default())]
    DegenerateFeature { name: Option<String> },

    #[error("invalid basis size: {0}")]
    InvalidBasisSize(String),

    #[error("over-parameterized design: n = {n} must exceed q = {q}")]
    OverParameterized { n: usize, q: usize },

    #[error("randomization covariance not positive definite")]
    RandomizationNotPd,

    #[error("group lasso did not converge after {sweeps} sweeps (kkt residual {kkt_residual:e})")]
    NonConvergence { sweeps: usize, kkt_residual: f64 },

    #[error("KKT violation: invalid inactive subgradient for group {group} (norm {norm})")]
    KktViolation { group: usize, norm: f64 },

    #[error("rank-deficient design")]
    RankDeficient,

    #[error("collinear augmented design for pair ({j}, {k})")]
    CollinearAugmentedDesign { j: usize, k: usize },

    #[error("empty selection: selective inference undefined")]
    EmptySelection,

    #[error("non-PD reduced covariance")]
    NonPdReducedCovariance,

    #[error("Jacobian not positive definite")]
    JacobianNotPd,

    #[error("barrier line search cannot keep the iterate feasible (iteration {iteration}, gradient norm {grad_norm:e})")]
    BarrierInfeasible { iteration: usize, grad_norm: f64 },

    #[error("barrier problem did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    BarrierNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("degenerate information")]
    DegenerateInformation,

    #[error("invalid correlation configuration")]
    InvalidCorrelation,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
