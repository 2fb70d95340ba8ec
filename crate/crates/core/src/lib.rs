//! Perception, grasp ranking, simulation and evaluation kernels for an
//! autonomous sweet-pepper harvesting pipeline.
//!
//! The crate is organized around the stages of a harvest cycle:
//!
//! - [`cloud`] — point-cloud geometry kernels (indexing, downsampling,
//!   outlier removal, clustering, normals, boundaries, bounding boxes).
//! - [`color`] — rotated-HSV conversion and the Gaussian color classifier.
//! - [`detect`] — crop detection: segmentation, 3D projection, clustering
//!   into targets, target selection and close-range viewpoints.
//! - [`peduncle`] — peduncle localization: 2D region of interest, pluggable
//!   pixel scorers, 3D post-filtering and cutting-pose estimation.
//! - [`grasp`] — grasp candidate generation and utility ranking.
//! - [`sim`] — deterministic synthetic greenhouse, RGB-D rendering, waypoint
//!   trajectories, harvest outcome models and the row state machine.
//! - [`metrics`] — precision/recall, AUC, F1 and harvest reports.
//! - [`io`] — PLY / PPM / PGM readers and writers plus JSON sidecars.
//! - [`config`] — run configuration with validated TOML loading.

pub mod camera;
pub mod cloud;
pub mod color;
pub mod config;
pub mod detect;
pub mod geom;
pub mod grasp;
pub mod image;
pub mod io;
pub mod metrics;
pub mod peduncle;
pub mod sim;

pub use camera::Intrinsics;
pub use cloud::{ColorPointCloud, SpatialIndex, SurfaceSample};
pub use color::{GaussianColorModel, RotatedHsvPixel};
pub use geom::{Aabb3, Mat3, Point3, Pose, Vec3};
