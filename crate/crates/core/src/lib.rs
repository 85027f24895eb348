//! Human-object interaction detection: interaction patterns, human-object
//! proposals, a multi-stream scoring network and the min-IoU mAP benchmark.

pub mod bbox;
pub mod benchmark;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod formats;
pub mod interaction;
pub mod model;
pub mod nn;
pub mod par;
pub mod proposals;
pub mod score;
pub mod synth;
pub mod train;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use bbox::BBox;
pub use error::{Error, Result};
