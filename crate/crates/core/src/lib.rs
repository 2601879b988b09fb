//! Entropy gain of linear time-invariant filters, computed in the time domain.
//!
//! The crate is organised bottom up:
//!
//! - [`lti`]: rational transfer functions, Jensen integrals, factorizations,
//!   Blaschke products and closed loops.
//! - [`toeplitz`]: square and tall convolution matrices, singular spectra,
//!   decay-rate fits and effective-entropy determinants.
//! - [`gaussian`]: log-determinant entropies, mutual information and the
//!   disturbance, input-disturbance and initial-state gains.
//! - [`processes`]: samplers, nearest-neighbour entropy estimates and the
//!   entropy-balance probe.
//! - [`experiments`]: configurable runners that sweep `n` and compare the
//!   extracted limit with its predicted value.
//!
//! All entropies and rates are in nats.

pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod lti;
pub mod processes;
pub mod toeplitz;
pub mod warning;

mod linalg;
mod poly;

pub use error::{Error, Result};
pub use linalg::{COND_LIMIT, MAX_DIM};
pub use lti::TransferFunction;
pub use warning::Warning;
