//! Signal detection in spiked random matrix models through bipartite signed cycles.
//!
//! The crate samples the null `X = Z` and the rank-κ alternatives
//! `X = Θ Uᵀ/√p + Z` (unnormalized) and `X = Θ Vᵀ + Z` with
//! `V = U(UᵀU)^{-1/2}` (normalized), computes the cycle statistics `B_{n,k}`
//! exactly, evaluates the limiting law of the log-likelihood ratio and builds
//! a calibrated test from the truncated cycle expansion of that ratio.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`], [`model`]: κ×κ matrix utilities and the prior/model types.
//! - [`sampler`]: seeded null and alternative draws.
//! - [`cycles`]: brute-force and inclusion–exclusion evaluation of `B_{n,k}`.
//! - [`asymptotics`]: `μ_k`, `σ_b²`, contiguity margins, limiting power.
//! - [`llr`]: the cycle statistic for `log L_n`, the test, and likelihood oracles.
//! - [`experiments`]: Monte Carlo harnesses with CSV/JSON output.
//! - [`config`], [`io`]: document formats and file handling used by the CLI.

pub mod asymptotics;
pub mod config;
pub mod cycles;
pub mod defaults;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod llr;
pub mod model;
pub mod numeric;
pub mod sampler;

pub use error::{Error, Result, Violation};
pub use model::{DataMatrix, ModelSpec, PriorKind, PriorSpec, Provenance, Variant};
