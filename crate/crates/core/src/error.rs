use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside [0,1]^2")]
    Domain { x: f64, y: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed matrix file: {0}")]
    MatrixFormat(String),

    #[error("bridge solver did not converge after {iterations} iterations (residual {residual:e})")]
    BridgeNonConvergence { iterations: usize, residual: f64 },

    #[error("exponent {value:e} exceeds the overflow guard {bound}")]
    Overflow { value: f64, bound: f64 },

    #[error("density source is not symmetric (max deviation {deviation:e})")]
    AsymmetricSource { deviation: f64 },

    #[error("negative kernel entry {value:e} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("kernel row {row} has no positive entry")]
    ZeroRow { row: usize },

    #[error("balancing ({method}) did not converge after {iterations} iterations (residual {residual:e})")]
    BalanceNonConvergence { method: &'static str, iterations: usize, residual: f64 },

    #[error("I + R_n is singular at n = {n}")]
    SingularSystem { n: usize },

    #[error("perturbation left the ball: ||h||_2n = {norm:e} > 1/2")]
    BallExit { norm: f64 },

    #[error("nonpositive scaling entry {value:e} at index {index}")]
    NonPositiveScaling { index: usize, value: f64 },

    #[error("matrix order {n} exceeds the permanent cap {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    AsymmetricMatrix { deviation: f64 },

    #[error("annihilation check B J = J B = 0 failed (max entry {deviation:e})")]
    Annihilation { deviation: f64 },

    #[error("matrix is not doubly stochastic (max line-sum deviation {deviation:e})")]
    NotDoublyStochastic { deviation: f64 },

    #[error("spectral hypothesis violated: eigenvalue modulus {modulus} too close to 1")]
    SpectralGap { modulus: f64 },

    #[error("determinant identity mismatch: {lhs:e} vs {rhs:e}")]
    IdentityMismatch { lhs: f64, rhs: f64 },
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BridgeNonConvergence { .. } | Error::Overflow { .. } => 3,
            Error::ZeroRow { .. }
            | Error::BalanceNonConvergence { .. }
            | Error::SingularSystem { .. }
            | Error::BallExit { .. }
            | Error::NonPositiveScaling { .. }
            | Error::Annihilation { .. } => 4,
            Error::SpectralGap { .. } | Error::IdentityMismatch { .. } | Error::NotDoublyStochastic { .. } => 5,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
