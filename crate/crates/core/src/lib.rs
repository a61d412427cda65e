//! Multi-view 3D multi-object tracking from 2D bounding-box detections.
//!
//! The engine ingests per-camera 2D detections (box + appearance feature)
//! from calibrated monocular cameras and produces labeled 3D ellipsoid
//! trajectories. The filtering core is a multi-view GLMB recursion with
//! Gibbs-sampled data association, an occlusion-aware detection probability,
//! clustering-based adaptive track birth, and feature-based re-identification
//! of tentatively terminated tracks.
//!
//! Supporting subsystems: a synthetic scenario simulator, trajectory metrics
//! (OSPA(2), CLEAR-MOT, IDF1) and file adapters for detections, cameras and
//! trajectories.

pub mod assignment;
pub mod birth;
pub mod config;
pub mod geometry;
pub mod glmb;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod occlusion;
pub mod reid;
pub mod sensing;
pub mod sim;
pub mod tracker;

pub use config::RunConfig;
pub use geometry::{BoundingBox, CameraModel, Ellipsoid};
pub use glmb::{Estimate, GlmbDensity, Label, MvGlmbFilter};
pub use sensing::Measurement;
