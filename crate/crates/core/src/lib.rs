//! Segmentation of approximately flat regions ("faces") in 3D point clouds.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`patching`]: normalize the cloud and split it into small local patches.
//! 2. [`predictor`]: estimate, for every pair of patches, the probability that
//!    both lie on the same face.
//! 3. [`matchlift`]: denoise the pairwise matrix with a convex (SDP) relaxation.
//! 4. [`rounding`]: merge patches into clusters by column correlation.
//!
//! [`rgs`] provides the classical region-growing baseline and [`datagen`] the
//! labeled polyhedra generator used for training and evaluation.

pub mod clustering;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod matchlift;
pub mod patching;
pub mod pipeline;
pub mod ply;
pub mod predictor;
pub mod rgs;
pub mod rounding;
mod seed;

pub use clustering::Clustering;
pub use error::{Error, Result};
pub use geometry::{LocalSurface, NeighborIndex, Point, PointCloud};
pub use matchlift::{PairKind, PairMatrix, SdpSolution, SolverParams};
pub use patching::{Patch, PatchFeatures, VoxelGrid};
pub use pipeline::PipelineConfig;
pub use predictor::{AnalyticPredictor, MlpModel, PairPredictor};
