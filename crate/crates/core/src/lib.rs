//! Group-sequential monitoring of two-arm survival trials with weighted
//! log-rank statistics.
//!
//! The crate is organised along the analysis pipeline:
//!
//! - [`survival_data`]: subject records and the aggregated event table.
//! - [`wlr_stat`]: weight functions, cross-moment brackets, score and
//!   variance, and the Z / Brownian scales.
//! - [`drift`]: drift of the Brownian-scale statistic and the weighted
//!   average log relative risk estimators.
//! - [`boundary`]: stopping densities, Lan–DeMets boundaries, and
//!   design-adjusted inference after a sequential stop.
//! - [`projection`]: closed-form end-of-trial functionals for the
//!   ramp-plateau weight, with a quadrature cross-check.
//! - [`sim`]: Monte Carlo trials with piecewise-constant hazards.

pub mod boundary;
pub mod drift;
mod error;
pub mod normal;
pub mod projection;
pub mod quadrature;
pub mod sim;
pub mod survival_data;
pub mod wlr_stat;

pub use error::{Error, Result};
