use crate::linalg::C64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at lambda = {lambda} with {steps} steps; reduce |Im lambda| or raise steps")]
    NonFinite { lambda: C64, steps: usize },

    #[error("function vanishes identically on the contour (max |f| = {max_abs:e})")]
    DegenerateFunction { max_abs: f64 },

    #[error("contour passes too close to a zero (min |f| = {min_abs:e}, threshold {threshold:e})")]
    ContourTooClose { min_abs: f64, threshold: f64 },

    #[error("winding number {value} is not close to an integer; raise quad_nodes")]
    NonIntegerWinding { value: f64 },

    #[error("disc n = {n}: contour count {expected} but {found} roots located")]
    CountMismatch { n: i64, expected: usize, found: usize },

    #[error("beta_o = {beta_o:e}: the leading term of the discriminant vanishes and the disc count is not available")]
    DegenerateFamily { beta_o: f64 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("radius_cap {radius_cap} < 4|lambda| = {needed}")]
    InsufficientCoverage { radius_cap: f64, needed: f64 },

    #[error("D(0) vanishes for parity {parity}; the normalized product is undefined")]
    ZeroAtOrigin { parity: i32 },

    #[error("quasimomentum branch ambiguous at lambda = {lambda}")]
    BranchAmbiguity { lambda: C64 },

    #[error("fit design matrix condition {cond:e} exceeds 1e8")]
    IllConditionedFit { cond: f64 },

    #[error("multiplier labeling failed at lambda = {lambda}: |tau_a tau_b| = {product}")]
    LabelingFailure { lambda: f64, product: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
