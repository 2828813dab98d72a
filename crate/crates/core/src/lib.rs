//! Simulation-based evaluation of joint models for a longitudinal biomarker
//! and a time-to-event outcome using normalised prediction distribution
//! errors (NPDE).

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod model;
pub mod numerics;
pub mod report;
pub mod residuals;
pub mod simulator;
pub mod stat_tests;
pub mod study;

pub use error::{Error, Result};
