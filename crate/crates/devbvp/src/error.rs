//! Crate-wide error type.
//!
//! Violations found by problem validation are ordinary data (see
//! [`crate::model::Violation`]); this enum covers genuine failures such as
//! malformed expressions, out-of-domain evaluation, or a solver that cannot
//! make progress.

use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("nonlinearity undefined at (t={t}, x={x}, y={y}): {source}")]
    RhsUndefined {
        t: f64,
        x: f64,
        y: f64,
        source: EvalError,
    },

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("evaluation point t={t} outside grid domain [{lo}, {hi}]")]
    Extrapolation { t: f64, lo: f64, hi: f64 },

    #[error("grid function value at node {index} is not finite")]
    NonFiniteValue { index: usize },

    #[error("value mismatch at t=0 when gluing history: |{left} - {right}| > {tol}")]
    Gluing { left: f64, right: f64, tol: f64 },

    #[error("coefficient is negative at t={t}: value {value}")]
    InvalidCoefficient { t: f64, value: f64 },

    #[error("contraction estimate q={q} is not < 1; refusing to iterate")]
    ContractionRefused { q: f64 },

    #[error("Picard iteration did not reach tolerance {tol} in {iterations} sweeps (last update {last_delta})")]
    NonConvergence {
        iterations: usize,
        tol: f64,
        last_delta: f64,
        deltas: Vec<f64>,
    },

    #[error("monotone ordering violated at t={t} on outer step {step} ({side}): defect {defect} exceeds {tol}")]
    OrderingViolation {
        t: f64,
        step: usize,
        side: &'static str,
        defect: f64,
        tol: f64,
    },

    #[error("outer iteration did not converge in {steps} steps (last update {last_delta})")]
    OuterNonConvergence { steps: usize, last_delta: f64 },

    #[error("iterate leaves the admissible interval at t={t} by {defect}")]
    OutsideBracket { t: f64, defect: f64 },

    #[error("jump condition fails at x={at}: {detail}")]
    CertificateRefused { at: f64, detail: String },

    #[error("shifted function is not nondecreasing near x={at} (defect {defect}); increase sampling")]
    CertificateInconsistent { at: f64, defect: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
