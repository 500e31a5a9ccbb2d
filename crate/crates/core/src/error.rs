use std::fmt;

use thiserror::Error;

/// Which structural assumption on the exponents failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// `2 <= p- <= p(x,y) <= p+ < inf`
    A1,
    /// `p(x,y) = p(y,x)`
    A2,
    /// `p+ < q- <= q(x) <= q+ < p*_s(x)/2 + 1`
    A3,
    /// `s p+ < N`
    A4,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Assumption::A1 => "a1",
            Assumption::A2 => "a2",
            Assumption::A3 => "a3",
            Assumption::A4 => "a4",
        };
        f.write_str(tag)
    }
}

/// A sample point at which an assumption was found to fail.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: f64,
    pub y: Option<f64>,
    pub value: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.y {
            Some(y) => write!(f, "(x={}, y={}) value={}", self.x, y, self.value),
            None => write!(f, "x={} value={}", self.x, self.value),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("assumption ({assumption}) violated at {witness}: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        witness: Witness,
        detail: String,
    },
    #[error("declared exponent bounds [{declared_lo}, {declared_hi}] do not contain sampled range [{sampled_lo}, {sampled_hi}]")]
    DeclaredBoundsMismatch {
        declared_lo: f64,
        declared_hi: f64,
        sampled_lo: f64,
        sampled_hi: f64,
    },
    #[error("degenerate denominator N - s*pbar = {0} <= 0")]
    DegenerateDenominator(f64),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("operator context was built for a different grid")]
    ContextMismatch,
    #[error("grid function is not W0-discrete (nonzero exterior value)")]
    NotW0,
    #[error("exponent {value} at x={x} is out of range (must exceed 1)")]
    ExponentOutOfRange { x: f64, value: f64 },
    #[error("the zero function has no Nehari scaling")]
    ZeroFunction,
    #[error("non-finite state at t={0}")]
    NonFinite(f64),
    #[error("inner proximal solve stalled after {iterations} iterations (residual {residual:e})")]
    InnerSolveStalled { iterations: usize, residual: f64 },
    #[error("time step underflow: dt={dt:e} < dt_min at t={t}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("audit failed at step {step}: {reason}")]
    AuditFailed { step: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
