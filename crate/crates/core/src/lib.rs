//! Bistatic ISAC simulation and joint AoA/AoD estimation.
//!
//! The library simulates OFDM frequency-domain channel observations for a
//! bistatic sensing setup (base station transmits, radar unit listens to the
//! backscatter) and estimates per-target angles of departure and arrival
//! from the least-squares channel estimates. Three interchangeable
//! estimation strategies live behind the [`estimator::AngleEstimator`] trait:
//!
//! * `pencil` — a block-Hankel matrix-pencil algorithm with a truncated SVD
//!   and a two-stage least-squares AoA fit,
//! * `nn` — complex-valued feed-forward networks trained on simulated
//!   snapshots,
//! * `mle` — a desk-scale grid search over the maximum-likelihood criterion,
//!   kept as a correctness benchmark.
//!
//! Cramér-Rao bounds ([`crb`]) and closed-form operation counts
//! ([`complexity`]) provide the reference curves the harness plots.

pub mod complexity;
pub mod crb;
pub mod csi;
pub mod error;
pub mod estimator;
pub mod mle;
pub mod model;
pub mod nn;
pub mod pencil;
pub mod rng;
pub mod tensor;
pub mod types;

pub use error::{CoreError, Result};
pub use types::{CMatrix, CVector, C64};
