//! Sim-and-real co-training workbench.
//!
//! * [`trajectory`]: demonstration data model and on-disk container.
//! * [`world`]: the planar TwinWorld, its scripted expert and demo collection.
//! * [`mimicgen`]: segment-transform-replay multiplication of source demos.
//! * [`sampler`]: co-training mixture weights and batch sampling.
//! * [`policy`]: MLP policy, manual backprop, training and evaluation.
//! * [`composition`]: data-composition summaries and diffs.
//! * [`harness`]: experiment protocols and result emission.

pub mod composition;
pub mod geometry;
pub mod harness;
pub mod mimicgen;
pub mod policy;
pub mod rng;
pub mod sampler;
pub mod trajectory;
pub mod world;

pub use geometry::{Pose2, Rect};
