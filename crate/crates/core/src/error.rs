use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex set is not a complete polyhedron: {0}")]
    RejectNotComplete(String),
    #[error("dimension {0} is not supported (expected 1..=3)")]
    RejectDimension(usize),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("sampling plan needs at least two refinement levels")]
    PlanTooSmall,
    #[error("finite-difference step {step} exceeds the slowly varying radius {radius} at {at:?}")]
    StepTooCoarse { step: f64, radius: f64, at: Vec<f64> },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("symbol is not finite at x={x:?}, xi={xi:?}")]
    UnboundedSymbol { x: Vec<f64>, xi: Vec<f64> },
    #[error("constant C_q diverges")]
    DivergentConstant,
    #[error("aliasing risk: {0}")]
    AliasRisk(String),
    #[error("power series does not converge: {0}")]
    SeriesDiverges(String),
    #[error("series has a nonzero constant term")]
    MissingZeroConstantTerm,
    #[error("symbol is not elliptic on the probe region (c_K = {c_k})")]
    NotElliptic { c_k: f64 },
    #[error("no frequency sample with |xi| >= {0} on the grid")]
    EmptyProbeSet(f64),
    #[error("set is not M-conic: {0}")]
    NotMConic(String),
    #[error("cutoff construction failed a posteriori: {0}")]
    ConstructionFailed(String),
    #[error("mask is empty at every scheduled epsilon")]
    EmptyMask,
    #[error("weight chain sigma <= lambda <= Lambda <= lambda^2/sigma broken: {0}")]
    PreconditionChainBroken(String),
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("exponent constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("k must lie in (0,1), got {0}")]
    BadK(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("case mismatch: {0}")]
    CaseMismatch(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
