//! Safety analysis for distributed controllers over finite abstractions.
//!
//! The pipeline has four stages:
//!
//! 1. [`abstraction`] turns sampled continuous dynamics into a finite
//!    [`TransitionSystem`](system::TransitionSystem) over a uniform grid,
//!    over-approximating one-step reachable sets with axis-aligned boxes.
//! 2. [`synthesis`] computes the maximal controlled invariant set inside a
//!    safe region and extracts the maximally permissive safety controller.
//! 3. [`coordination`] replaces the controller with its minimal independent
//!    (coordination-free) counterpart, iterates the coordination-free
//!    predecessor to a fixed point, and decomposes the invariant set into
//!    layers that bound how long agents may act without communicating.
//! 4. [`simulation`] executes closed loops under delayed-connection and
//!    self-triggered communication regimes and provides an exhaustive
//!    adversarial oracle for validating the layer semantics.
//!
//! Scenario definitions, artifact persistence, and SVG rendering live in
//! [`scenario`], [`artifact`], and [`render`].

pub mod abstraction;
pub mod artifact;
pub mod controller;
pub mod coordination;
pub mod grid;
pub mod render;
pub mod scenario;
pub mod sets;
pub mod simulation;
pub mod space;
pub mod synthesis;
pub mod system;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid in dimension {dim}: {reason}")]
    InvalidGrid { dim: usize, reason: String },
    #[error("point component {value} in dimension {dim} is outside the grid (valid range [{lo}, {hi}])")]
    OutOfBounds { dim: usize, value: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown equivalence class {class}: partition has {classes} classes")]
    UnknownClass { class: usize, classes: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("successor box invalid in dimension {dim}: [{lo}, {hi}] must satisfy lo <= hi and fit in the state grid")]
    InvalidBox { dim: usize, lo: u32, hi: u32 },
    #[error("index {index} out of range for {context} of size {size}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        size: usize,
    },
    #[error("non-finite value while integrating dimension {dim}")]
    NonFinite { dim: usize },
    #[error("integrator requires a right-hand side declared affine (constant in the state)")]
    NotAffine,
    #[error("transition table for {states} states x {inputs} inputs needs about {estimated_bytes} bytes, over the {budget_bytes} byte budget")]
    MemoryBudget {
        states: usize,
        inputs: usize,
        estimated_bytes: u64,
        budget_bytes: u64,
    },
    #[error("grid dimension has {count} points, more than the supported maximum {max}")]
    GridTooLarge { count: usize, max: usize },
    #[error("controller does not leave the given set invariant: spre(W) != W")]
    NotInvariant,
    #[error("chain is not descending at index {index}")]
    NotDescending { index: usize },
    #[error("chain element {index} changed after the declared fixed point")]
    NotAFixedPoint { index: usize },
    #[error("state {state} is outside the controlled invariant set")]
    OutsideInvariantSet { state: usize },
    #[error("no admissible nonblocking input at state {state} (step {step})")]
    Blocking { state: usize, step: usize },
    #[error("exhaustive search needs {needed} nodes, over the {budget} node budget")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("policy not usable here: {0}")]
    PolicyUnsupported(String),
    #[error("artifact hash mismatch: {context}")]
    HashMismatch { context: String },
    #[error("malformed artifact: {0}")]
    Artifact(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
