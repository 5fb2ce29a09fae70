use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by the kernels and pipelines.
///
/// Hypothesis and bound failures are reported as values so that the
/// harness can record them per trial instead of aborting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix is numerically singular (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("eigenvalue {eigenvalue} lies within the gap band of endpoint {endpoint}")]
    SpectralGap { eigenvalue: f64, endpoint: f64 },

    #[error("projections too far apart: ||p - q|| = {distance} >= 1")]
    ProjectionsTooFar { distance: f64 },

    #[error("subalgebra inclusion fails (residual {residual:e})")]
    NotIncluded { residual: f64 },

    #[error("element lies outside the domain span (residual {residual:e})")]
    OutsideDomain { residual: f64 },

    #[error("span is not a unital *-algebra: {0}")]
    NotAnAlgebra(String),

    #[error("element is not in the Jones corner (residual {residual:e})")]
    CornerDecoding { residual: f64 },

    #[error("distance hypothesis fails: d_hi = {d_hi} >= 1/15")]
    Hypothesis { d_hi: f64 },

    #[error("runtime bound {name} violated: {value:e} > {bound:e}")]
    BoundViolated {
        name: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("averaged intertwiner is not of the form [[0, y], [0, 0]] (residual {residual:e})")]
    OffDiagonalForm { residual: f64 },

    #[error("polar hypothesis fails: ||y - I|| = {y_minus_i} >= 1")]
    PolarHypothesis { y_minus_i: f64 },

    #[error("pipeline inconsistency: intertwining residual {residual:e}")]
    PipelineInconsistency { residual: f64 },

    #[error("isomorphism certificate unusable: {0}")]
    Certificate(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the distance gate, which the harness records
    /// as skipped rather than failed.
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, Error::Hypothesis { .. })
    }
}
