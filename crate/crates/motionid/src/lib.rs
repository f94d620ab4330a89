//! Replay containers, pipeline stages and the command-line front end for
//! motion-based user identification. The numerical work lives in
//! `motionid-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsor;
pub mod cli;
pub mod error;
pub mod formats;
pub mod midr;
pub mod modeldir;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
pub use motionid_core as core;
