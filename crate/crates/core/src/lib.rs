//! Scene-budget optimization engine for real-time and VR visualization of
//! large static city models, plus a small pose relay for co-simulation.
//!
//! The pipeline mirrors what a game engine does before a frame reaches the
//! GPU: frustum culling, baked occlusion culling, LOD selection and static
//! batching, all reduced to drawcall and triangle tallies and fed to an
//! affine frame-time model that is checked against VR budgets.

// `!(a < b)` is deliberate throughout: it rejects NaN along with ordering failures.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod citygen;
pub mod framesim;
pub mod geometry;
pub mod math;
pub mod optimize;
pub mod reduction;
pub mod scene;
pub mod visibility;

pub use math::{Aabb, Quat, Transform, Vec3};
