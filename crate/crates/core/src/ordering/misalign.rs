use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dataset::{CameraPose, FrameId};
use crate::similarity::pose_angle_to_origin;
use crate::SCHEMA_VERSION;

use super::{Plan, RoundSummary, MISALIGNMENT_THRESHOLD};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentReport {
    pub count: usize,
    /// `(from, to, angle)` for each transition over the threshold.
    pub offending_pairs: Vec<(FrameId, FrameId, f64)>,
}

/// Consecutive pairs whose angle about `origin` is greater than `threshold`.
///
/// Pairs with an undefined angle (a camera on the origin) are not counted.
pub fn count_misalignments(
    frames: &[FrameId],
    poses: &[CameraPose],
    origin: &Vector3<f64>,
    threshold: f64,
) -> MisalignmentReport {
    let offending_pairs: Vec<_> = frames
        .windows(2)
        .filter_map(|w| {
            let d = pose_angle_to_origin(&poses[w[0].0], &poses[w[1].0], origin);
            (d.defined && d.value > threshold).then_some((w[0], w[1], d.value))
        })
        .collect();
    MisalignmentReport {
        count: offending_pairs.len(),
        offending_pairs,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub subseq_id: usize,
    pub round: usize,
    pub length: usize,
    pub misalignments: usize,
}

/// Summary statistics of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub spec_version: u32,
    pub frame_count: usize,
    pub misalignment_threshold: f64,
    pub total_misalignments: usize,
    pub sequences: Vec<SequenceReport>,
    /// Clip length -> number of clips.
    pub length_histogram: BTreeMap<usize, usize>,
    pub rounds: Vec<RoundSummary>,
    /// Misalignments of a single greedy chain over all frames, for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_greedy_misalignments: Option<usize>,
}

impl PlanReport {
    pub fn build(plan: &Plan, poses: &[CameraPose], origin: &Vector3<f64>) -> Self {
        let mut histogram = BTreeMap::new();
        let sequences: Vec<SequenceReport> = plan
            .subsequences
            .iter()
            .map(|s| {
                *histogram.entry(s.len()).or_insert(0) += 1;
                SequenceReport {
                    subseq_id: s.subseq_id,
                    round: s.round,
                    length: s.len(),
                    misalignments: count_misalignments(&s.frames, poses, origin, MISALIGNMENT_THRESHOLD).count,
                }
            })
            .collect();
        PlanReport {
            spec_version: SCHEMA_VERSION,
            frame_count: plan.frame_count,
            misalignment_threshold: MISALIGNMENT_THRESHOLD,
            total_misalignments: sequences.iter().map(|s| s.misalignments).sum(),
            sequences,
            length_histogram: histogram,
            rounds: plan.rounds.clone(),
            full_greedy_misalignments: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use std::f64::consts::PI;

    fn on_circle(degs: &[f64]) -> Vec<CameraPose> {
        degs.iter()
            .map(|d| {
                let r = d.to_radians();
                CameraPose::from_rotation_translation(Matrix3::identity(), Vector3::new(r.cos(), r.sin(), 0.0))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn counts_large_steps() {
        let poses = on_circle(&[0.0, 30.0, 80.0]);
        let frames = [FrameId(0), FrameId(1), FrameId(2)];
        let r = count_misalignments(&frames, &poses, &Vector3::zeros(), MISALIGNMENT_THRESHOLD);
        assert_eq!(r.count, 1);
        assert_eq!((r.offending_pairs[0].0, r.offending_pairs[0].1), (FrameId(1), FrameId(2)));
        assert!((r.offending_pairs[0].2 - 50f64.to_radians()).abs() < 1e-12);

        assert_eq!(count_misalignments(&frames, &poses, &Vector3::zeros(), PI).count, 0);
        assert_eq!(count_misalignments(&frames[..1], &poses, &Vector3::zeros(), 0.0).count, 0);
    }
}
