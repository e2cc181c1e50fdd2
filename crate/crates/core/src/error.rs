use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("belief {0} is outside the open unit interval")]
    InvalidBelief(f64),

    #[error("probability {0} is outside the open unit interval")]
    InvalidProbability(f64),

    #[error("likelihood ratio is undefined at y = {0}: density under H=0 vanishes")]
    ZeroDensity(f64),

    #[error(
        "quadrature did not converge on [{lower}, {upper}]: error estimate {error:e} after {subdivisions} subdivisions"
    )]
    QuadratureNotConverged {
        lower: f64,
        upper: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("log likelihood ratio target {target} is outside the attainable range [{low}, {high}]")]
    ThresholdNotBracketed { target: f64, low: f64, high: f64 },

    #[error("invalid signal model: {0}")]
    InvalidModel(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("grid of {requested} points exceeds the limit of {limit}")]
    GridTooLarge { requested: u128, limit: u128 },
}
