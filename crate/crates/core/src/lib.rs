//! Jump segmentation and jump height estimation from 6-channel waist IMU
//! recordings.
//!
//! A multi-stage temporal convolutional network labels every sample of a
//! session; contiguous runs become jump segments. Fixed-width windows around
//! height-eligible jumps are summarized into handcrafted features from which
//! random forest, gradient-boosted or MLP regressors estimate jump height.

// `!(x > 0.0)` comparisons are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod nn;
pub mod regression;
pub mod segmentation;
pub mod tcn;

pub use error::{Error, Result};
