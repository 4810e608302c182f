//! Optimal-control design of fast atom-chip BEC transport ramps.
//!
//! The single control is the bias field. A trap map turns it into the
//! trap position and frequencies; the centre of mass and the Thomas-Fermi
//! scaling factors are integrated forward, an adjoint system backward, and
//! the ramp is improved by first-order gradient steps. A split-step
//! Gross-Pitaevskii solver checks the result independently.

// negated comparisons reject NaN along with out-of-range values; state vectors are indexed in lockstep
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod gpe;
pub mod metrics;
pub mod oct;
pub mod ramp;
pub mod trap;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
