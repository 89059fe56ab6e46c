//! Calibration-engineering toolkit for semantic-mixing pipelines.
//!
//! The crate is organized around one workflow: measure calibration
//! ([`metrics`], [`tempscale`]), build better soft labels for mixed samples
//! ([`reannotate`], [`mixsim`]), understand which training losses keep
//! confidence honest ([`balance`]), and train a small classifier to observe
//! the effect end to end ([`trainer`]).
//!
//! Everything is deterministic: stochastic routines take a seed and derive
//! per-purpose random streams through [`streams`].

pub mod balance;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixsim;
pub mod reannotate;
pub mod simplex;
pub mod streams;
pub mod tempscale;
pub mod trainer;

pub use error::{Error, Result};
pub use simplex::{LogitVector, ProbVector, SoftLabel};
