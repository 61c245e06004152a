//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by filter, consensus and detection routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A covariance (or information) matrix failed its positive-definite
    /// factorization.
    #[error("singular covariance: {context}")]
    SingularCovariance { context: &'static str },

    /// Consensus step size outside the admissible range for the graph.
    #[error("step size {eps} outside (0, {bound})")]
    StepSizeTooLarge { eps: f64, bound: f64 },

    /// The step-size bound is undefined when every node is isolated.
    #[error("step-size bound undefined: graph has no edges")]
    NoEdges,

    /// Difference sequences feeding a square Hankel matrix must have odd
    /// length.
    #[error("difference sequence must have odd length, got {len}")]
    WrongLength { len: usize },

    /// The kernel vector cannot be normalized to last component one.
    #[error("kernel vector has vanishing last component")]
    DegenerateKernel,

    /// A denominator or pivot fell below the working tolerance.
    #[error("numerical failure: {context}")]
    NumericalFailure { context: &'static str },

    /// Polynomial coefficients do not encode a root at one.
    #[error("polynomial has no root at one (coefficient sum {sum:e})")]
    NoRootAtOne { sum: f64 },

    /// An operation received an all-zero vector where a direction was needed.
    #[error("zero vector where a nonzero direction is required")]
    ZeroVector,

    /// A constructed perturbation failed its contract checks.
    #[error("perturbation contract violated: {context}")]
    PropertyViolation { context: String },

    /// Scenario or model description invalid before any simulation ran.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// Wraps a module error with the node and step where it occurred.
    #[error("node {node}, step {step}: {source}")]
    AtStep {
        node: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, node: usize, step: usize) -> Error {
        Error::AtStep {
            node,
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
