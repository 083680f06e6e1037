use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("rotation angle {angle} is at the logarithm cut (pi); pass a branch hint")]
    AngleAtCut { angle: f64 },
    #[error("evaluation width {requested} exceeds the series width {available}")]
    WidthExceeded { requested: f64, available: f64 },
    #[error("sample grid of size {grid} is too coarse for cutoff {cutoff}")]
    GridTooCoarse { grid: usize, cutoff: usize },
    #[error("frequency is rational to working precision (partial quotient {index})")]
    RationalInput { index: usize },
    #[error("working precision exhausted at depth {depth}")]
    PrecisionExhausted { depth: usize },
    #[error("resonant site {k:?} lies outside the lattice line through ({q}, {p})")]
    LemmaViolated { q: i64, p: i64, k: (i64, i64) },
    #[error("least-squares fit is poor (R^2 = {r2})")]
    PoorFit { r2: f64 },
    #[error("Birkhoff averages have not settled (grid variance {variance})")]
    SlowConvergence { variance: f64 },
    #[error("continued fraction depth {requested} exceeds the available depth {available}")]
    DepthExceeded { requested: usize, available: usize },
    #[error("first generator is not close to the identity (distance {distance})")]
    NotNearIdentity { distance: f64 },
    #[error("normalization stalled at residual {residual}")]
    NoConvergence { residual: f64 },
    #[error("divisor {divisor} at mode {k:?} below its threshold {threshold}")]
    DivisorUnderflow { k: (i64, i64), divisor: f64, threshold: f64 },
    #[error("inner elimination loop stalled at {residual}")]
    InnerLoopStall { residual: f64 },
    #[error("monodromy logarithm is ambiguous (angle {angle})")]
    MonodromyLogAtCut { angle: f64 },
    #[error("small divisor {divisor} at mode {k} below floor")]
    SmallDivisorFloor { k: i64, divisor: f64 },
    #[error("conjugated cocycle left the injectivity radius of exp")]
    LogBranch,
    #[error("L2 denominator {value} is degenerate")]
    DegenerateDenominator { value: f64 },
    #[error("error sizes increased for three consecutive steps")]
    Divergence { step: usize },
    #[error("degree snapping failed (residual {residual})")]
    Unclassified { residual: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("internal assertion failed: {0}")]
    Assertion(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_)
            | Error::RationalInput { .. }
            | Error::PrecisionExhausted { .. }
            | Error::DepthExceeded { .. }
            | Error::WidthExceeded { .. }
            | Error::GridTooCoarse { .. } => 1,
            Error::PoorFit { .. }
            | Error::SlowConvergence { .. }
            | Error::Unclassified { .. }
            | Error::NoConvergence { .. }
            | Error::NotNearIdentity { .. }
            | Error::Divergence { .. }
            | Error::InnerLoopStall { .. }
            | Error::DegenerateDenominator { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
