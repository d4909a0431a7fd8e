//! 3D object pseudo-labels from monocular video.
//!
//! Given per-frame instance masks, point tracks, metric depth and camera
//! intrinsics, the pipeline associates masks across frames, completes each
//! object's pseudo-LiDAR by similarity registration of tracked
//! correspondences, and fits a 3D box to the completed cloud. The crate also
//! ships the evaluation metrics and a synthetic scene generator with exact
//! ground truth.

pub mod assoc;
pub mod attributes;
pub mod depth;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod types;
pub mod viz;

pub use depth::DepthRaster;
pub use ingest::{KittiLabel, PriorTable, SceneBundle};
pub use types::{
    Box2D, Box3D, CameraIntrinsics, DimensionPrior, Dimensions, InstanceMask, Pixel, PixelSet,
    PointCloud, SimilarityTransform, TrackedMask,
};
