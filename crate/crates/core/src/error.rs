//! Error type shared by all modules of the toolkit.

use thiserror::Error;

/// Everything that can go wrong while building a norm, evaluating jets,
/// or assembling tensors. Numerical guards carry the offending value so
/// callers can report *why* a point was rejected.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be positive")]
    ZeroDimension,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("{what} must be a nonzero vector")]
    ZeroVector { what: &'static str },

    #[error("{what} is not symmetric (max asymmetry {deviation:.3e})")]
    NotSymmetric { what: &'static str, deviation: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("eigenvalue {value} of the bipartite endomorphism exceeds the admissible bound {max_allowed}")]
    EigenvalueRange { value: f64, max_allowed: f64 },

    #[error("eigenvalue {value} of the bipartite endomorphism is negative beyond tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("field vector too large: |a|_r = {norm} must be < 1")]
    FieldTooLarge { norm: f64 },

    #[error("fiber vector too close to the slit: distance {distance:.3e} < minimum {minimum:.3e}")]
    SlitProximity { distance: f64, minimum: f64 },

    #[error("jet square root of a nonpositive value ({value:.3e})")]
    SqrtDomain { value: f64 },

    #[error("jet division by a zero-valued jet")]
    DivByZeroJet,

    #[error("principal scalar too close to singular: kappa = {kappa:.3e}")]
    SingularKappa { kappa: f64 },

    #[error("fundamental tensor numerically singular (min |eigenvalue| ratio {ratio:.3e})")]
    SingularMetric { ratio: f64 },

    #[error("operation `{op}` does not apply to family `{family}`")]
    UnsupportedFamily { op: &'static str, family: &'static str },

    #[error("closed-form denominator `{what}` degenerate (value {value:.3e})")]
    DegenerateDenominator { what: &'static str, value: f64 },

    #[error("mesh/branch alignment error: {detail}")]
    Alignment { detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("finite-difference stencil crossed an invalid region: {detail}")]
    StencilDomain { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
