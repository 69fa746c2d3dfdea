//! Minimum safe frame-processing-rate (FPR) estimation for multi-camera
//! autonomous vehicles.
//!
//! The crate is organised around the kinematic latency model in [`model`]:
//! for every surrounding actor it finds the largest per-frame processing
//! latency that still lets the ego avoid a collision by hard braking, then
//! folds those per-actor latencies into a per-camera rate using the camera
//! field-of-view membership from [`geometry`].
//!
//! Around the model sit an exhaustive brute-force [`oracle`], a closed-loop
//! [`scenario`] engine, a post-deployment [`scheduler`] and the offline
//! [`analysis`] / [`sweep`] reports used by the `zhuyi` command-line tool.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod model;
pub mod oracle;
pub mod params;
pub mod scenario;
pub mod scheduler;
pub mod state;
pub mod sweep;

pub use error::{Result, ZhuyiError};
pub use exec::Execution;
pub use geometry::{CameraConfig, VehicleExtent};
pub use model::{CameraFpr, LatencyEstimate};
pub use params::{Aggregator, L0Policy, ZhuyiParams};
pub use state::{KinematicState, Trajectory};

/// Identifier of a surrounding actor, stable across ticks of a trace.
pub type ActorId = String;

/// Meters per second in one mile per hour.
pub const MPH: f64 = 0.44704;
