//! Uplink spectral-efficiency analysis for cell-free massive MIMO with
//! hardware impairments, spatially correlated Rician fading with random
//! LoS phase shifts, and channel aging.
//!
//! The crate is organised as a pipeline:
//!
//! * [`scenario`] drops APs and UEs on a wrapped square and derives the
//!   large-scale statistics of every link.
//! * [`temporal`] provides the Jakes correlation and the anchored aging
//!   channel generator.
//! * [`hardware`] holds the Bussgang and EVM impairment models.
//! * [`estimation`] builds the LMMSE kernels at the anchor instant.
//! * [`closed_form_se`] evaluates the closed-form SINR, the optimal LSFD
//!   weights and the moment identities they rely on.
//! * [`monte_carlo`] simulates the full receive chain as an oracle.
//! * [`optimizer`] allocates transmit powers by minorization-maximization.
//! * [`harness`] runs experiments and writes result tables.

pub mod closed_form_se;
pub mod error;
pub mod estimation;
pub mod hardware;
pub mod harness;
pub mod linalg;
pub mod monte_carlo;
pub mod optimizer;
pub mod scenario;
pub mod temporal;

pub use error::{Error, Result};
pub use num_complex::Complex64;
