use thiserror::Error;

/// Crate-wide error type. Messages carry enough context to locate the
/// failing module and quantity.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{context}: matrix or vector contains a non-finite entry")]
    NotFinite { context: &'static str },

    #[error("{context}: matrix is not symmetric positive definite")]
    NotSpd { context: &'static str },

    #[error("{context}: matrix has a negative eigenvalue ({value:.3e})")]
    NotPsd { context: &'static str, value: f64 },

    #[error("QP is infeasible")]
    QpInfeasible,

    #[error("QP active-set iteration limit reached ({0} iterations)")]
    QpMaxIter(usize),

    #[error("Riccati iteration did not converge after {iters} sweeps (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("(eta, eps) is not a unit quaternion: eta^2 + |eps|^2 = {0}")]
    NotUnitQuaternion(f64),

    #[error("Euler-parameter vector part left the unit ball: |eps| = {0}")]
    EpsOutOfRange(f64),

    #[error("active set is degenerate: {0}")]
    DegenerateActiveSet(String),

    #[error("sampling exhausted: acceptance rate {rate:.2e} over {draws} draws")]
    SamplingExhausted { rate: f64, draws: usize },

    #[error("no samples supplied")]
    EmptySamples,

    #[error("MPC infeasible at simulation step {step}")]
    MpcInfeasible { step: usize },

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("lattice file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
