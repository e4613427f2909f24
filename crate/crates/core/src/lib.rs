//! Category-level 9DoF pose tracking for rigid and articulated objects.
//!
//! The tracker canonicalizes each incoming point cloud by the inverse of the
//! previous per-part similarity estimate, asks a rotation predictor and a
//! coordinate predictor for the residual motion, and recovers the absolute
//! pose in closed form. Learned predictors are replaced by noise-configurable
//! oracles driven by a synthetic articulated-object simulator, so every
//! closed-form step can be checked exactly.

pub mod error;
pub mod eval;
pub mod fitting;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod rng;
pub mod sim;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{Pose9, Rot3, Rot6D, Sim3, Vec3};
