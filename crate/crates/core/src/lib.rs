//! Pseudo-haptic roughness engine.
//!
//! A visual pointer is jittered in proportion to pen speed while a
//! speed-driven square wave drives a vibrotactile actuator. The crate also
//! runs the two perception protocols (forced-choice comparison and
//! method-of-adjustment matching) with synthetic observers and analyzes the
//! resulting data.

// `!(x > 0.0)` is used on purpose so NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod distortion;
pub mod error;
pub mod experiment;
pub mod kinematics;
pub mod logs;
pub mod observer;
pub mod seeding;
pub mod service;
pub mod signal;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
