//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors produced by simulation, estimation and I/O operations.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Pilot Gram matrix is too ill-conditioned for a least-squares solve.
    #[error("ill-conditioned pilots: Gram condition number {cond:.3e}")]
    IllConditionedPilots { cond: f64 },

    /// Pencil sub-array sizes violate the identifiability constraints.
    #[error("invalid pencil config: {0}")]
    InvalidPencilConfig(String),

    /// The truncated SVD found fewer than the requested number of targets.
    #[error("rank deficient pencil: sigma_q/sigma_1 = {ratio:.3e} for q = {q}")]
    RankDeficient { q: usize, ratio: f64 },

    /// AoD estimates too close together for the manifold least-squares fit.
    #[error("degenerate AoD set: steering Gram condition number {cond:.3e}")]
    DegenerateAod { cond: f64 },

    /// A manifold column carried no energy.
    #[error("zero-energy target column {index}")]
    ZeroEnergyTarget { index: usize },

    /// Fisher matrix cannot be inverted for this scenario.
    #[error("unidentifiable scenario: FIM condition number {cond:.3e}")]
    UnidentifiableScenario { cond: f64 },

    /// Requested grid is beyond the evaluation budget.
    #[error("grid too large: {points} hypotheses exceed the 1e7 budget")]
    GridTooLarge { points: u128 },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    /// Network architecture does not match a supported closed-form count.
    #[error("unsupported network shape: {0}")]
    UnsupportedShape(String),

    /// Malformed binary file.
    #[error("bad file format: {0}")]
    BadFormat(String),

    /// Iterative numeric routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
