//! Adaptive random-neighbourhood MCMC for Bayesian variable selection in
//! conjugate spike-and-slab linear regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`linmodel`]: data, priors, the incrementally updated model state,
//!   Rao-Blackwellised flip probabilities and exact enumeration for small `p`;
//! - [`proposals`]: neighbourhood and thinning laws, optimal rates and
//!   balancing functions;
//! - [`adapt`]: the shared adaptive state with Robbins-Monro and
//!   Kiefer-Wolfowitz updates;
//! - [`samplers`]: ADS, ASI, ARN, ARNI and PARNI kernels plus the multi-chain
//!   driver;
//! - [`datagen`], [`diagnostics`] and [`experiment`]: simulated and CSV data,
//!   error metrics and artifact files, and the TOML-driven pipeline.

pub mod adapt;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linmodel;
pub mod proposals;
pub mod samplers;

pub use error::{BvsError, Result};
