//! Model-based multilevel Monte Carlo for random two-phase media.
//!
//! Surrogates of a fine-scale elliptic problem are built by homogenizing the
//! microstructure blockwise with Hashin-Shtrikman bounds; an adjoint-based
//! estimate of the modeling error decides where the microstructure must be
//! resolved, and the resulting model sequence serves as the levels of a
//! multilevel Monte Carlo estimator.

pub mod adapt;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod geometry;
pub mod homogenize;
pub mod media;
pub mod mlmc;
pub mod problem;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
