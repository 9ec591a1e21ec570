//! ORB features: FAST keypoints over an image pyramid, intensity-centroid
//! orientation and steered 256-bit BRIEF descriptors.
//!
//! Extraction is a pure function of the image and [`OrbConfig`], so
//! repeated calls give identical [`DescriptorSet`]s.

mod brief;
pub mod cache;
mod fast;
pub mod pattern;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::raster::{self, RasterImage};

pub use brief::{orientation, steer, steered_brief};
pub use fast::{corner_score, detect_fast};

/// Keypoints closer than this to a level's border are discarded, so that
/// both the orientation patch and every steered pattern point stay inside
/// the image. Pattern points reach at most `13 * sqrt(2) < 18.4` pixels.
pub const EDGE_BORDER: usize = 19;

/// Radius of the orientation patch.
pub const PATCH_RADIUS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in base-level pixels.
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// Radians in `[0, 2pi)`.
    pub angle: f64,
    pub level: usize,
}

/// 256 packed bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub const BITS: usize = 256;

    pub fn zeros() -> Self {
        BinaryDescriptor([0; 4])
    }

    pub fn ones() -> Self {
        BinaryDescriptor([u64::MAX; 4])
    }

    #[inline]
    pub fn bit(&self, b: usize) -> bool {
        self.0[b / 64] >> (b % 64) & 1 == 1
    }
}

/// Keypoints and their descriptors for one frame. The two lists are parallel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub frame_id: FrameId,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<BinaryDescriptor>,
}

impl DescriptorSet {
    pub fn empty(frame_id: FrameId) -> Self {
        DescriptorSet {
            frame_id,
            keypoints: Vec::new(),
            descriptors: Vec::new(),
        }
    }

    /// A set with only descriptors; keypoints are placeholders at the origin.
    pub fn from_descriptors(frame_id: FrameId, descriptors: Vec<BinaryDescriptor>) -> Self {
        let keypoints = descriptors
            .iter()
            .map(|_| Keypoint {
                x: 0.0,
                y: 0.0,
                score: 0.0,
                angle: 0.0,
                level: 0,
            })
            .collect();
        DescriptorSet {
            frame_id,
            keypoints,
            descriptors,
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbConfig {
    pub max_features: usize,
    /// FAST threshold as a fraction of full scale.
    pub fast_threshold: f64,
    pub n_levels: usize,
    pub scale_factor: f64,
    /// Gaussian sigma of the pre-smoothing applied before BRIEF comparisons.
    pub blur_sigma: f64,
    /// Background for compositing RGBA input before conversion to gray.
    pub background: [f64; 3],
}

impl Default for OrbConfig {
    fn default() -> Self {
        OrbConfig {
            max_features: 500,
            fast_threshold: 0.08,
            n_levels: 8,
            scale_factor: 1.2,
            blur_sigma: 2.0,
            background: [0.0; 3],
        }
    }
}

impl OrbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_levels == 0 {
            return Err(Error::Config("orb.n_levels must be at least 1".into()));
        }
        if self.scale_factor.is_nan() || self.scale_factor <= 1.0 {
            return Err(Error::Config("orb.scale_factor must exceed 1".into()));
        }
        if !(self.fast_threshold > 0.0 && self.fast_threshold < 1.0) {
            return Err(Error::Config("orb.fast_threshold must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Rec. 601 luma. One-channel images are returned as is; alpha is ignored.
pub fn to_grayscale(img: &RasterImage) -> RasterImage {
    if img.channels() == 1 {
        return img.clone();
    }
    RasterImage::from_fn(img.width(), img.height(), 1, |x, y, _| {
        0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
    })
    .expect("luma stays in range")
}

struct Candidate {
    level: usize,
    x: usize,
    y: usize,
    score: f64,
}

/// Full ORB extraction.
///
/// Keypoints are detected independently per pyramid level, pooled, and the
/// `max_features` strongest are kept (ties by level, then raster order).
pub fn extract_orb(frame_id: FrameId, img: &RasterImage, config: &OrbConfig) -> DescriptorSet {
    let base = if img.channels() == 4 {
        to_grayscale(&raster::composite_background(img, config.background))
    } else {
        to_grayscale(img)
    };
    let (w0, h0) = base.dimensions();

    let mut levels = Vec::with_capacity(config.n_levels);
    let mut scales = Vec::with_capacity(config.n_levels);
    for level in 0..config.n_levels {
        let scale = config.scale_factor.powi(level as i32);
        let w = (w0 as f64 / scale).round() as usize;
        let h = (h0 as f64 / scale).round() as usize;
        if w < 2 * EDGE_BORDER + 1 || h < 2 * EDGE_BORDER + 1 {
            break;
        }
        let img = if level == 0 {
            base.clone()
        } else {
            raster::bicubic_resample(&base, w, h).expect("non-empty target")
        };
        levels.push(img);
        scales.push(scale);
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for (level, img) in levels.iter().enumerate() {
        let (w, h) = img.dimensions();
        for kp in detect_fast(img, config.fast_threshold) {
            let (x, y) = (kp.x as usize, kp.y as usize);
            if x < EDGE_BORDER || y < EDGE_BORDER || x >= w - EDGE_BORDER || y >= h - EDGE_BORDER {
                continue;
            }
            candidates.push(Candidate {
                level,
                x,
                y,
                score: kp.score,
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.level.cmp(&b.level))
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    candidates.truncate(config.max_features);

    let mut smoothed: Vec<Option<RasterImage>> = vec![None; levels.len()];
    let mut set = DescriptorSet::empty(frame_id);
    for c in candidates {
        let level_img = &levels[c.level];
        let smooth = smoothed[c.level]
            .get_or_insert_with(|| raster::gaussian_blur(level_img, config.blur_sigma, 3));
        let angle = orientation(level_img, c.x, c.y, PATCH_RADIUS);
        let descriptor = steered_brief(smooth, c.x, c.y, angle);
        let scale = scales[c.level];
        set.keypoints.push(Keypoint {
            x: c.x as f64 * scale,
            y: c.y as f64 * scale,
            score: c.score,
            angle,
            level: c.level,
        });
        set.descriptors.push(descriptor);
    }
    set
}
