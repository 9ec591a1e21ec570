//! Ordering unordered multi-view images into smooth, video-like
//! subsequences so that an off-the-shelf video super-resolution model can
//! upsample them, then folding the upsampled clips back into one
//! high-resolution image per view.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: floating point images, bicubic resampling, PNG I/O.
//! - [`dataset`]: posed multi-view datasets and camera geometry.
//! - [`orb`]: FAST keypoints and steered 256-bit BRIEF descriptors.
//! - [`similarity`]: Hamming matching and the pairwise dissimilarity measures.
//! - [`ordering`]: greedy ordering, adaptive-length subsequences,
//!   multi-threshold planning and aggregation.
//! - [`metrics`]: L1, PSNR, SSIM and the training loss arithmetic.
//! - [`pipeline`]: the on-disk degrade / plan / upsample / aggregate / eval chain.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod orb;
pub mod ordering;
pub mod pipeline;
pub mod raster;
pub mod similarity;
pub mod synthetic;

mod fsutil;

pub use dataset::{CameraPose, FrameId, FrameRecord, MultiViewSet};
pub use error::{Error, Result};
pub use metrics::LossWeights;
pub use orb::{BinaryDescriptor, DescriptorSet, Keypoint, OrbConfig};
pub use ordering::{
    CoverageState, MisalignmentReport, OrderingConfig, Plan, StartPolicy, Subsequence,
};
pub use raster::RasterImage;
pub use similarity::{Dissimilarity, MatchSet, MeasureKind};

/// Schema version written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;
