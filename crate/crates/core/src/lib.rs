//! Fault-signature identification for BLDC motor drive currents.
//!
//! The analysis chain runs in a fixed order:
//!
//! ```text
//! record ─► decimate ─► smooth ─► whiten + ML-ICA ─► per-source STFT
//!        ─► features ─► fusion ─► signature matching ─► alarm state machine
//! ```
//!
//! [`signal_model`] generates synthetic drive records with known faults,
//! [`pipeline`] wires the stages together and owns the file formats used by
//! the `motorsig` command-line tool.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alarm;
pub mod bss;
pub mod error;
pub mod multirate;
pub mod pipeline;
pub mod signal_model;
pub mod signature;
pub mod stft;

pub use error::{Error, RecordError, Result};
