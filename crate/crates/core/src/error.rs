use thiserror::Error;

/// Unified error type for the whole crate.
///
/// Numerical failures (a covariance that cannot be factored, a PSD check that
/// fails) are kept distinct from precondition violations (dimension too large
/// for the sample, mismatched shapes) so callers can map them to different
/// exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("insufficient sample: need at least 2 observations, got {n}")]
    InsufficientSample { n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asym:.3e})")]
    NotSymmetric { asym: f64 },

    #[error("not positive definite: pivot {pivot} is non-positive")]
    NotPositiveDefinite { pivot: usize },

    #[error("not PSD: eigenvalue {value:.6e} below tolerance")]
    NotPsd { value: f64 },

    #[error("covariance of class {class} is not positive definite (pivot {pivot}); the fit needs n > p + 1 per class")]
    ClassCovarianceSingular { class: u8, pivot: usize },

    #[error("moderate-dimension precondition violated: p = {p} must satisfy 0 < p < min(n1, n2) - 1 = {limit}")]
    ModerateDimension { p: usize, limit: isize },

    #[error("degrees of freedom must be at least 5, got {df}")]
    DfTooSmall { df: u32 },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("p0 too large for sample sizes: p0 = {p0}, n1 = {n1}, n2 = {n2}")]
    P0TooLarge { p0: usize, n1: usize, n2: usize },

    #[error("p0 = {p0} exceeds dimension p = {p}")]
    P0ExceedsDim { p0: usize, p: usize },

    #[error("group too small for dimension: p = {p}, group sizes ({m1}, {m2})")]
    GroupTooSmall { p: usize, m1: usize, m2: usize },

    #[error(
        "groups too small for dimension: c1*H = {c1h:.4}, c2*H = {c2h:.4} must both be below 1"
    )]
    GroupsTooSmall { c1h: f64, c2h: f64 },

    #[error("negative variance: {value:.6e}")]
    NegativeVariance { value: f64 },

    #[error("concentration ratio out of range: c = {c:.4} must lie in (0, 1)")]
    RatioOutOfRange { c: f64 },

    #[error("dimension too small: p = {p} must be at least {min}")]
    DimTooSmall { p: usize, min: usize },

    #[error("unknown case id {id}; known cases are 1..=7")]
    UnknownCase { id: u32 },

    #[error("case block size 3*floor(sqrt(p)) = {block} exceeds dimension p = {p}")]
    BlockExceedsDim { block: usize, p: usize },

    #[error("replication {rep}: {source}")]
    AtReplication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
