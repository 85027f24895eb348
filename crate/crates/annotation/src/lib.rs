//! Annotation task server: one task per (image, positive class), claimed
//! under a lease, answered with boxes and human-object links, and exported
//! as an ordinary annotations file.

pub mod error;
pub mod server;
pub mod store;

pub use error::{AnnotateError, Result};
pub use server::{router, spawn, ServerHandle};
pub use store::{
    system_clock, AnnotationTask, Clock, NextTask, Progress, TaskState, TaskStore, TaskSubmission, DEFAULT_LEASE_MS,
};
