//! No-reference point cloud quality assessment toolkit.
//!
//! The pipeline renders a colored point cloud to six cube-face orthographic
//! projections, scores them through a pluggable rating backend that returns
//! log-probabilities over five quality adjectives, extracts multi-scale
//! eigenvalue-based structural features, fuses both streams with an RBF
//! epsilon-SVR, and evaluates predictions against mean opinion scores under
//! group-level k-fold cross-validation.
//!
//! The main entry points are:
//! - [`pointcloud::load_ply`] for reading PLY files,
//! - [`projection::render_cube_projections`] for the six-face renders,
//! - [`features::extract_structural_features`] for the 12-dimensional
//!   structural descriptor,
//! - [`evaluator`] for prompt construction, SFT export, and scoring,
//! - [`svr`] for training and applying the fusion regressor,
//! - [`metrics`] for SRCC/PLCC/KRCC/RMSE,
//! - [`experiment::run_experiment`] for the full cross-validated run.

pub mod evaluator;
pub mod experiment;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod pointcloud;
pub mod projection;
pub mod rating;
pub mod svr;
pub mod synth;

pub use manifest::{group_kfold, load_manifest, FoldSplit, Manifest, ManifestEntry};
pub use pointcloud::{bounding_box, load_ply, write_ply, Aabb, PointCloud};
pub use rating::{mos_to_level, MosRange, RatingLevel};
