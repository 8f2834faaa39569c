//! Crate error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("eigensolver did not converge at B0 = {b0} T")]
    NonConvergence { b0: f64 },

    #[error("eigenvector {level} at B0 = {b0} T has <Fz> = {m_f} off the half-integer grid")]
    BadProjection { b0: f64, level: usize, m_f: f64 },

    #[error("branch tracking ambiguity at B0 = {b0} T (best overlap^2 = {overlap})")]
    TrackingAmbiguity { b0: f64, overlap: f64 },

    #[error("lost root bracket on [{lo}, {hi}] T: {detail}")]
    BracketLost { lo: f64, hi: f64, detail: String },

    #[error("finite-difference step refinement failed at B0 = {b0} T (residual {residual})")]
    StepSizeFailure { b0: f64, residual: f64 },

    #[error("no peak {index} in spectrum ({found} peaks found)")]
    NoSuchPeak { index: usize, found: usize },

    #[error("peak is unresolved: {0}")]
    UnresolvedPeak(String),

    #[error("rank-deficient fit input: {0}")]
    RankDeficient(String),

    #[error("unidentifiable fit: {0}")]
    Identifiability(String),

    #[error("no decay detected in echo data")]
    NoDecay,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("fit did not converge after {iterations} iterations (ssq {ssq})")]
    FitDiverged { iterations: usize, ssq: f64 },

    #[error("fitted parameters are outside the physical range: {0}")]
    NonPhysicalFit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
