use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point lies outside the domain (violation {violation:e})")]
    OutsideDomain { violation: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{solver} did not converge after {iterations} iterations")]
    NoConvergence { solver: &'static str, iterations: usize },

    #[error("confidence parameter tau = {tau} outside the admissible window [{min}, {max}]")]
    TauOutOfWindow { tau: f64, min: f64, max: f64 },

    #[error("trace was produced with the threshold for tau = {trace_tau}, certificate requested for tau = {requested}")]
    ThresholdMismatch { trace_tau: f64, requested: f64 },

    #[error("curvature parameter t = {t} is below the Lipschitz constant {lipschitz}")]
    CurvatureBelowLipschitz { t: f64, lipschitz: f64 },

    #[error("noise family has infinite variance (parameter {parameter} <= 2)")]
    InfiniteVariance { parameter: f64 },

    #[error("residuals were not recorded; rerun with `record_residuals`")]
    MissingResiduals,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
