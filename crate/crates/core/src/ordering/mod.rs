//! Greedy ordering of unordered views into video-like clips.
//!
//! - [`greedy_order`] chains every frame by repeatedly appending the
//!   nearest remaining neighbour of the current tail.
//! - [`adaptive_length_subsequences`] does the same from many starts but
//!   cuts a clip as soon as the transition to the next neighbour is worse
//!   than a threshold.
//! - [`multi_threshold_plan`] runs that from strict to loose thresholds,
//!   only starting clips at frames that are not yet covered, and falls
//!   back to single frames for whatever is left.
//! - [`aggregate`] keeps exactly one upsampled image per frame, taken from
//!   the earliest clip that contains it.

mod aggregate;
mod greedy;
mod misalign;
mod plan;

use serde::{Deserialize, Serialize};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::similarity::{Dissimilarity, MeasureKind, DEFAULT_MIN_MATCHES};

pub use aggregate::aggregate;
pub use greedy::{adaptive_length_subsequences, extend_greedy, greedy_order};
pub use misalign::{count_misalignments, MisalignmentReport, PlanReport, SequenceReport};
pub use plan::{multi_threshold_plan, CoverageState, Plan, Provenance, RoundSummary};

/// Angle beyond which a consecutive pair counts as misaligned.
pub const MISALIGNMENT_THRESHOLD: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// Every uncovered frame starts a clip.
    EveryImage,
    /// One clip per round, from this frame (or the lowest uncovered frame
    /// once it is covered).
    SingleStart(FrameId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderingConfig {
    /// Measure used to pick the next neighbour.
    pub select_measure: MeasureKind,
    /// Measure compared against the round threshold.
    pub threshold_measure: MeasureKind,
    /// One threshold per round, strictest first, in the units of
    /// `threshold_measure` (radians for angles).
    pub thresholds: Vec<f64>,
    pub min_subseq_len: usize,
    pub start_policy: StartPolicy,
    /// Experimental: interpret thresholds as a neighbour rank by centre
    /// distance (a transition passes when the candidate is among the K
    /// nearest cameras of the tail) instead of using `threshold_measure`.
    pub threshold_by_center_rank: bool,
    /// Point the angle-to-origin measure is taken about.
    pub scene_origin: [f64; 3],
    /// Minimum cross-checked matches for an ORB score to count.
    pub min_matches: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        Self::object_centric()
    }
}

impl OrderingConfig {
    /// ORB neighbours, camera-angle thresholds of 15, 30 and 45 degrees.
    pub fn object_centric() -> Self {
        OrderingConfig {
            select_measure: MeasureKind::OrbMeanMatch,
            threshold_measure: MeasureKind::PoseAngleToOrigin,
            thresholds: [15.0f64, 30.0, 45.0].iter().map(|d| d.to_radians()).collect(),
            min_subseq_len: 8,
            start_policy: StartPolicy::EveryImage,
            threshold_by_center_rank: false,
            scene_origin: [0.0; 3],
            min_matches: DEFAULT_MIN_MATCHES,
        }
    }

    /// Pose neighbours for unbounded scenes, thresholded by neighbour rank (30, 50).
    pub fn unbounded_scene() -> Self {
        OrderingConfig {
            select_measure: MeasureKind::PoseCenterDistance,
            threshold_measure: MeasureKind::PoseCenterDistance,
            thresholds: vec![30.0, 50.0],
            threshold_by_center_rank: true,
            ..Self::object_centric()
        }
    }

    pub fn needs_descriptors(&self) -> bool {
        self.select_measure.needs_descriptors()
            || (!self.threshold_by_center_rank && self.threshold_measure.needs_descriptors())
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        if self.thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::Config("thresholds must not be NaN".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(
                "thresholds must be ordered strictest (smallest) first".into(),
            ));
        }
        if self.min_subseq_len == 0 {
            return Err(Error::Config("min_subseq_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scores of one transition `frames[k] -> frames[k + 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionScore {
    pub select: Dissimilarity,
    pub threshold: Dissimilarity,
}

/// An ordered clip of distinct frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subsequence {
    pub subseq_id: usize,
    /// Index of the threshold round that produced it; `thresholds.len()`
    /// marks a single-frame fallback.
    pub round: usize,
    /// Threshold in force when it was generated, if any.
    pub threshold: Option<f64>,
    pub start_frame: FrameId,
    pub frames: Vec<FrameId>,
    pub transition_scores: Vec<TransitionScore>,
}

impl Subsequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
