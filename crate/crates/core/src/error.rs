use thiserror::Error;

/// Errors produced by the toolkit's models and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally valid input that violates a model invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// The iterative solver stopped without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e}, best iterate {best:?})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
        best: [f64; 3],
    },

    /// The trap minimum sits at or below the electrode plane.
    #[error("invalid layout: minimum found at z = {z:.3e} m")]
    InvalidLayout { z: f64 },

    /// A Hessian eigenvalue at the minimum is not positive.
    #[error("unstable trap along axis {axis} (curvature eigenvalue {eigenvalue:.3e} J/m^2)")]
    UnstableTrap { axis: usize, eigenvalue: f64 },

    /// No escape saddle was found below the search bound.
    #[error("no escape saddle below z = {bound:.3e} m")]
    UnboundedSearch { bound: f64 },

    /// Calibration could not meet its targets within parameter bounds.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Bright and dark count distributions cannot be told apart.
    #[error("bright rate {bright} does not exceed dark rate {dark}")]
    NotDiscriminable { bright: f64, dark: f64 },

    /// The fidelity target cannot be reached.
    #[error("target fidelity {target} unreachable (supremum {supremum})")]
    Infeasible { target: f64, supremum: f64 },

    /// Invalid simulation settings.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
