//! Motion-based identification of VR users.
//!
//! The crate is `no_std` (with `alloc`) and covers everything that does not
//! touch a file system: the canonical replay model, sessionization and split
//! assignment, hybrid featurization, z-score scaling, a histogram gradient
//! boosted tree classifier, the three-layer identification ensemble, the
//! evaluation metrics and a synthetic user generator.
//!
//! The `std` feature (on by default) enables parallel training and
//! prediction through `rayon`. Numeric results are identical with and without
//! it: training and prediction route transcendental functions through `libm`
//! and every parallel reduction is ordered.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated float comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod classifier;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod hierarchy;
pub mod matrix;
pub mod replay;
pub mod scaler;
pub mod session;
pub mod synth;

mod math;
mod par;
#[cfg(test)]
mod testutil;

pub use classifier::{Classifier, Trainer};
pub use math::{hash_str, mix_seed};
pub use error::{Error, Result};
pub use features::{FeatureVector, Featurizer, Variant, WindowSpec};
pub use gbdt::{GbdtConfig, GbdtTrainer, TreeModel};
pub use hierarchy::{HierarchicalModel, HierarchyConfig};
pub use matrix::{Dataset, Matrix};
pub use replay::{Frame, NoteEvent, Pose, Replay, ReplayMetadata, UserId};
pub use scaler::Scaler;
pub use session::{Session, SplitAssignment, SplitRatios};
