//! Keyword spotting whose detection sensitivity follows the vehicle's
//! maneuver state.
//!
//! Audio runs through [`dsp`], [`vad`], [`dnn`] and [`scorer`]; GPS traces
//! run through [`telemetry`]; [`fusion`] joins the two per frame.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dnn;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod scorer;
pub mod telemetry;
pub mod vad;

pub use error::{Error, Result};
