//! Uncertainty-driven next-best-view planning over occupancy fields.
//!
//! The crate is organised bottom-up:
//!
//! - [`fields`]: ground-truth occupancy fields built from soft SDF
//!   primitives, voxel grids and their on-disk format.
//! - [`surrogate`]: a deterministic stand-in for a learned reconstructor
//!   whose prediction converges to ground truth where views were acquired.
//! - [`render`]: cameras, rays, ray quadrature and occupancy volume rendering.
//! - [`uncertainty`]: occupancy, silhouette, depth and view uncertainty plus
//!   calibration tooling.
//! - [`policies`]: next-best-view selection (candidate, gradient and the
//!   random/even/odd baselines).
//! - [`metrics`]: IoU and PSNR evaluation.
//! - [`harness`]: episodes, experiments, configuration and CSV reporting.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod policies;
pub mod render;
pub mod seed;
pub mod surrogate;
pub mod uncertainty;

pub use error::{Error, Result};
pub use geometry::{Aabb, Rgb, Vec3};
