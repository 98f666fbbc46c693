//! Sparse phase retrieval with L0-regularized ADMM.
//!
//! The crate recovers a sparse complex signal `x` from phaseless
//! measurements `b = |A x|`, where `A` is either a unitary DFT or a stack of
//! coded diffraction patterns. Two variational solvers are provided
//! (L0L2PR and L0L1PR, differing in the data-fidelity exponent), a sparse
//! Fienup baseline, and a seeded benchmark harness.
//!
//! Module map:
//!
//! - [`signal`]: complex signal type, L0 count, sparse ground truth, seeded RNG.
//! - [`operators`]: measurement operators (forward, adjoint, gram diagonal).
//! - [`prox`]: closed-form kernels for the three ADMM subproblems.
//! - [`admm`]: the dynamic-penalty ADMM driver and its diagnostics.
//! - [`spr`]: alternating-projection baseline.
//! - [`metrics`]: noise injection, SNR, ambiguity-aligned NMSE, recovery rate.
//! - [`bench`]: experiment configuration, sweeps and result emission.

pub mod admm;
pub mod bench;
pub mod error;
pub mod metrics;
pub mod operators;
pub mod oracle;
pub mod prox;
pub mod signal;
pub mod spr;

pub use error::{Error, Result};
pub use num_complex::Complex64;
