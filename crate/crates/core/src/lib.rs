//! Markerless gait analysis pipeline.
//!
//! The crate turns multi-camera 2D keypoint detections into 3D marker
//! trajectories, joint kinematics on a simplified lower-limb model, segmented
//! gait cycles, spatiotemporal parameters, and agreement statistics against
//! reference marker data.
//!
//! Conventions used throughout:
//! - positions in meters, times in seconds, angles in degrees
//! - world frame: X = walking direction, Y = up, Z = right
//! - gaps in trajectories are explicit `None` values, never sentinel zeros

pub mod camera;
pub mod events;
pub mod ik;
pub mod io;
pub mod model;
pub mod params;
pub mod signal;
pub mod stats;
pub mod synth;

pub use camera::{CameraModel, Observation, Triangulation};
pub use events::{EventKind, GaitCycle, GaitCycleSet, GaitEvent, Side};
pub use io::{KeypointFrame, MarkerTrajectorySet, SubjectInfo};
pub use model::{MarkerCorrespondence, PoseVector, SkeletonModel};
pub use params::{SpatiotemporalRecord, WaveformSummary};
pub use stats::AgreementStats;
