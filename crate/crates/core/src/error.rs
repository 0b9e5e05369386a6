use thiserror::Error;

/// Errors raised by the numerical routines and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("matrix is singular (|det| = {det:e} below floor)")]
    SingularMatrix { det: f64 },
    #[error("singular values coincide; singular directions are undefined")]
    DegenerateSingularValues,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("matrix product overflowed (norm above 1e300)")]
    Overflow,
    #[error("cocycle is not simultaneously diagonalizable (best residual {residual:e})")]
    NotDiagonalizable { residual: f64 },
    #[error("line is not invariant (max deviation {deviation:e})")]
    NotInvariant { deviation: f64 },
    #[error("zero eigenvalue")]
    ZeroEigenvalue,
    #[error("Lyapunov exponent is zero")]
    ZeroLyapunov,
    #[error("matrix for symbol {0} is not hyperbolic")]
    NotHyperbolic(usize),
    #[error("cone axes collapsed (distance {distance:e})")]
    ConesCollapsed { distance: f64 },
    #[error("irreducibility measurement rho is zero")]
    ZeroRho,
    #[error("constant ledger infeasible: {0}")]
    LedgerInfeasible(String),
    #[error("chain too short for the avalanche principle (n = {n}, need at least 3)")]
    ChainTooShort { n: usize },
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("curvature of the pressure is degenerate")]
    DegenerateCurvature,
    #[error("zero off-diagonal weight")]
    ZeroWeight,
    #[error("energy grid too narrow: N = {low} at the left edge, {high} at the right edge")]
    GridTooNarrow { low: f64, high: f64 },
    #[error("matrix is not stochastic: {0}")]
    NotStochastic(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("experiment failed: {0}")]
    ExperimentFailed(String),
}

impl LabError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::SingularMatrix { .. } => "SingularMatrix",
            LabError::DegenerateSingularValues => "DegenerateSingularValues",
            LabError::DimensionMismatch { .. } => "DimensionMismatch",
            LabError::InvalidProbabilities(_) => "InvalidProbabilities",
            LabError::Overflow => "Overflow",
            LabError::NotDiagonalizable { .. } => "NotDiagonalizable",
            LabError::NotInvariant { .. } => "NotInvariant",
            LabError::ZeroEigenvalue => "ZeroEigenvalue",
            LabError::ZeroLyapunov => "ZeroLyapunov",
            LabError::NotHyperbolic(_) => "NotHyperbolic",
            LabError::ConesCollapsed { .. } => "ConesCollapsed",
            LabError::ZeroRho => "ZeroRho",
            LabError::LedgerInfeasible(_) => "LedgerInfeasible",
            LabError::ChainTooShort { .. } => "ChainTooShort",
            LabError::NoConvergence { .. } => "NoConvergence",
            LabError::DegenerateCurvature => "DegenerateCurvature",
            LabError::ZeroWeight => "ZeroWeight",
            LabError::GridTooNarrow { .. } => "GridTooNarrow",
            LabError::NotStochastic(_) => "NotStochastic",
            LabError::InvalidArgument(_) => "InvalidArgument",
            LabError::ConfigInvalid(_) => "ConfigInvalid",
            LabError::ExperimentFailed(_) => "ExperimentFailed",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
