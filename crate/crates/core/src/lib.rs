//! Group-equivariant soft actor-critic for image-based manipulation.
//!
//! The crate bundles the symmetry-group machinery, equivariant actor /
//! invariant critic networks, the SAC trainer with rotational data
//! augmentation, a deterministic kinematic heightmap simulator with four
//! sparse-reward tasks, non-equivariant baselines, and the experiment
//! harness behind the `equisac` CLI.

pub mod action;
pub mod autodiff;
pub mod equinet;
pub mod group;

pub use action::{ActionBounds, ActionVector};
