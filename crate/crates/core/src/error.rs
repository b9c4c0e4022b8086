use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("grid too coarse: n = {n}, need n >= 16")]
    GridTooCoarse { n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Metzler condition violated: h = {h:.6e} exceeds {bound:.6e}; use n >= {required_n}")]
    Metzler { h: f64, bound: f64, required_n: usize },

    #[error("singular or ill-conditioned system: {0}")]
    Singular(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("reducible coupling: {0}")]
    ReducibleCoupling(String),

    #[error("(H4) fails: kappa_1(0) = {0:.6e} <= 0")]
    H4Fails(f64),

    #[error("(H6) fails at lambda = {lambda:.6e}: gap {gap:.3e}")]
    H6Fails { lambda: f64, gap: f64 },

    #[error("bracket not found below lambda_max = {0}")]
    NoBracket(f64),

    #[error("no front: c = {c:.10} < c_plus0 = {c_plus0:.10}")]
    SpeedBelowMinimal { c: f64, c_plus0: f64 },

    #[error("nonpositive solution: {0}")]
    NonPositive(String),

    #[error("Richardson inconsistency: {0}")]
    Richardson(String),

    #[error("box invariance violated: {0}")]
    BoxViolation(String),

    #[error("front guard: {0}")]
    FrontGuard(String),

    #[error("no crossing: {0}")]
    NoCrossing(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("(H7) fails: {0}")]
    H7Fails(String),

    #[error("sigma = {0:.6e} stays nonnegative after halving epsilon")]
    SigmaNonNegative(f64),

    #[error("no z0 in [0, {0}] satisfies the shift inequality")]
    NoShift(f64),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status for the CLI: 2 for configuration problems, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
