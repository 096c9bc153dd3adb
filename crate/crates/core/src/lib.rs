//! Active 3D reconstruction with an online voxel radiance field.
//!
//! The crate trains a coarse explicit density/color voxel grid from
//! images as they arrive, scores candidate viewpoints by the termination
//! entropy of the points they would observe, and plans the camera path
//! between views by gradient descent on a quadratic Bézier control point.
//! After exploration a fine model (denser density grid plus a feature grid
//! decoded by a small MLP) is refined on the whole image database.
//!
//! Module map:
//! - [`grid`]: voxel lattices, trilinear queries and gradients, the entropy volume
//! - [`render`]: cameras, ray sampling, volume rendering and its backward pass
//! - [`model`]: coarse/fine radiance fields, the color MLP, Adam
//! - [`mapping`]: image database, ray pools, the training loops
//! - [`planner`]: agent states, Bézier trajectories, planning objectives
//! - [`simulator`]: analytic ground-truth scenes and view spaces
//! - [`active`]: the exploration loop and next-best-view policies
//! - [`eval`]: PSNR, SSIM and point-cloud geometry metrics

pub mod active;
pub mod error;
pub mod eval;
pub mod grid;
pub mod mapping;
pub mod model;
pub mod parallel;
pub mod planner;
pub mod render;
pub mod simulator;

pub use active::{ActiveConfig, ActiveRun, NbvPolicy, RunOutput, StopCriteria};
pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Linear RGB, nominally in `[0, 1]`.
pub type Rgb = nalgebra::Vector3<f64>;

pub use grid::{EntropyVolume, GridBounds, VoxelGrid};
pub use planner::{AgentState, BezierTrajectory, PlanWeights, SafeZone};
pub use simulator::{AnalyticScene, MotionMode, ViewSpace};
pub use model::{AdamState, CoarseModel, FineModel, ShallowMlp};
pub use render::{Camera, Image, Intrinsics, Ray};
