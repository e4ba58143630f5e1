use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("theta = {theta} is not a singular point (|b| = {b:e})")]
    NotASingularPoint { theta: f64, b: f64 },
    #[error("degenerate singular point: c = a(theta0) b'(theta0) = {c:e}")]
    Degenerate { c: f64 },
    #[error("the curve (a, b) passes through the origin near theta = {theta}")]
    LoopThroughOrigin { theta: f64 },
    #[error("zero of a at theta = {theta} is not transverse")]
    TangentZero { theta: f64 },
    #[error("q = a/b is singular at theta = {theta}")]
    SingularAngle { theta: f64 },
    #[error("invalid structure parameter: {0}")]
    InvalidParameter(String),
    #[error("compatibility fails at {point:?}: smallest eigenvalue {min_eigenvalue:e}")]
    PositivityFailure {
        point: [f64; 4],
        min_eigenvalue: f64,
    },
    #[error("point ({s}, {t}) lies outside the closed domain")]
    OutsideDomain { s: f64, t: f64 },
    #[error("field leaves the chart at {point:?}")]
    ChartExceeded { point: [f64; 4] },
    #[error("profile is not monotone into [0, 1]: {0}")]
    NonMonotoneProfile(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bracketing grid too coarse near {lambda}")]
    RangeTooCoarse { lambda: f64 },
    #[error("discretization too coarse: n = {n}")]
    DiscretizationTooCoarse { n: usize },
    #[error("{lambda} is not in the asymptotic spectrum")]
    NotInSpectrum { lambda: f64 },
    #[error("matrix is not symmetric (defect {defect:e})")]
    NotSymmetric { defect: f64 },
    #[error("no spectral gap in [{lo}, {hi}]")]
    NoGap { lo: f64, hi: f64 },
    #[error("frame degenerates at grid node ({i}, {j})")]
    FrameDegenerate { i: usize, j: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("omega is singular at t index {j}")]
    SingularOmega { j: usize },
    #[error("vector field vanishes at s = {s}")]
    ZeroNorm { s: f64 },
    #[error("fitted exponent {lambda} is not close to the spectrum")]
    NoSpectrumMatch { lambda: f64 },
    #[error("grid too short: {0}")]
    GridTooShort(String),
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<crate::solver::SolveOutput>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
