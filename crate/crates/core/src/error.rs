use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter regime not supported: {0}")]
    Regime(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trajectory diverged at time {time}")]
    Divergence { time: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("shooting jacobian is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("variational flow degenerate at time {time} (det {det:e})")]
    FlowDegeneracy { time: f64, det: f64 },

    #[error("no sign change found for {what} on ({lo}, {hi}]")]
    RootBracketing {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("formula domain error in {what}: {details}")]
    FormulaDomain { what: &'static str, details: String },

    #[error("{what} requires argument in its domain: {details}")]
    Domain { what: &'static str, details: String },

    #[error("characteristic function evaluated at Im(u) = {im} outside the strip ({lo}, {hi})")]
    StripViolation { im: f64, lo: f64, hi: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("vanishing density in Dupire ratio: time derivative {numerator:e}, convexity term {denominator:e}")]
    VanishingDensity { numerator: f64, denominator: f64 },

    #[error("no sample mass near y = {y} (kernel weight sum {weight_sum:e})")]
    NoSupport { y: f64, weight_sum: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}
