use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::similarity::{MeasureKind, PairScore};
use crate::SCHEMA_VERSION;

use super::{adaptive_length_subsequences, OrderingConfig, StartPolicy, Subsequence};

/// Where a frame's output comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub round: usize,
    pub subseq_id: usize,
    pub position: usize,
}

/// Covered frames and the earliest clip each one appears in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageState {
    #[serde(with = "provenance_list")]
    provenance: BTreeMap<FrameId, Provenance>,
}

mod provenance_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        frame_id: FrameId,
        #[serde(flatten)]
        provenance: Provenance,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<FrameId, Provenance>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(&frame_id, &provenance)| Entry {
                frame_id,
                provenance,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<FrameId, Provenance>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.frame_id, e.provenance)).collect())
    }
}

impl CoverageState {
    pub fn is_covered(&self, frame: FrameId) -> bool {
        self.provenance.contains_key(&frame)
    }

    pub fn covered(&self) -> impl Iterator<Item = FrameId> + '_ {
        self.provenance.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn provenance(&self, frame: FrameId) -> Option<Provenance> {
        self.provenance.get(&frame).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameId, Provenance)> + '_ {
        self.provenance.iter().map(|(&f, &p)| (f, p))
    }

    /// Marks every frame of `seq`; the earliest provenance is kept.
    pub fn cover(&mut self, seq: &Subsequence) -> usize {
        let mut added = 0;
        for (position, &frame) in seq.frames.iter().enumerate() {
            let p = Provenance {
                round: seq.round,
                subseq_id: seq.subseq_id,
                position,
            };
            self.provenance
                .entry(frame)
                .and_modify(|old| {
                    if p < *old {
                        *old = p;
                    }
                })
                .or_insert_with(|| {
                    added += 1;
                    p
                });
        }
        added
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    /// `None` for the single-frame fallback round.
    pub threshold: Option<f64>,
    pub starts: usize,
    pub generated: usize,
    pub accepted: usize,
    pub newly_covered: usize,
    pub covered_total: usize,
}

/// Output of multi-threshold planning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub spec_version: u32,
    pub frame_count: usize,
    pub select_measure: MeasureKind,
    pub threshold_measure: MeasureKind,
    pub threshold_by_center_rank: bool,
    pub thresholds: Vec<f64>,
    pub min_subseq_len: usize,
    pub rounds: Vec<RoundSummary>,
    pub subsequences: Vec<Subsequence>,
    pub coverage: CoverageState,
}

impl Plan {
    pub fn subsequence(&self, subseq_id: usize) -> Option<&Subsequence> {
        self.subsequences.iter().find(|s| s.subseq_id == subseq_id)
    }

    /// Checks the structural invariants of a plan read from disk.
    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.subsequences {
            if !ids.insert(s.subseq_id) {
                return Err(Error::Subsequence {
                    subseq_id: s.subseq_id,
                    reason: "duplicate subseq_id".into(),
                });
            }
            if s.frames.is_empty() || s.transition_scores.len() + 1 != s.frames.len() {
                return Err(Error::Subsequence {
                    subseq_id: s.subseq_id,
                    reason: "transition scores do not match frames".into(),
                });
            }
            if s.frames.iter().any(|f| f.0 >= self.frame_count) {
                return Err(Error::Subsequence {
                    subseq_id: s.subseq_id,
                    reason: "frame id out of range".into(),
                });
            }
        }
        if self.coverage.len() != self.frame_count {
            return Err(Error::Config(format!(
                "plan covers {} of {} frames",
                self.coverage.len(),
                self.frame_count
            )));
        }
        for (frame, p) in self.coverage.iter() {
            let ok = self
                .subsequence(p.subseq_id)
                .is_some_and(|s| s.round == p.round && s.frames.get(p.position) == Some(&frame));
            if !ok {
                return Err(Error::Subsequence {
                    subseq_id: p.subseq_id,
                    reason: format!("provenance of frame {frame} does not point at it"),
                });
            }
        }
        Ok(())
    }
}

/// Strict-to-loose rounds of adaptive-length subsequences.
///
/// Round `r` starts a clip at each frame still uncovered when the round
/// begins (per `start_policy`), drawing neighbours from every frame. Clips
/// with at least `min_subseq_len` frames are accepted and cover all their
/// frames. Frames left after the last round become single-frame clips.
pub fn multi_threshold_plan(
    select: &dyn PairScore,
    threshold: &dyn PairScore,
    config: &OrderingConfig,
) -> Result<Plan> {
    config.validate()?;
    let n = select.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if threshold.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "select scores cover {n} frames, threshold scores {}",
            threshold.len()
        )));
    }
    let mut coverage = CoverageState::default();
    let mut accepted_all: Vec<Subsequence> = Vec::new();
    let mut rounds = Vec::new();
    let mut next_id = 0;

    for (round, &epsilon) in config.thresholds.iter().enumerate() {
        let uncovered: Vec<FrameId> = (0..n).map(FrameId).filter(|&f| !coverage.is_covered(f)).collect();
        let starts = match config.start_policy {
            StartPolicy::EveryImage => uncovered,
            StartPolicy::SingleStart(f) => {
                if f.0 < n && !coverage.is_covered(f) {
                    vec![f]
                } else {
                    uncovered.into_iter().take(1).collect()
                }
            }
        };
        let generated = adaptive_length_subsequences(select, threshold, epsilon, round, &starts);
        let before = coverage.len();
        let mut accepted = 0;
        for mut seq in generated.iter().cloned() {
            if seq.len() < config.min_subseq_len {
                continue;
            }
            seq.subseq_id = next_id;
            next_id += 1;
            coverage.cover(&seq);
            accepted_all.push(seq);
            accepted += 1;
        }
        rounds.push(RoundSummary {
            round,
            threshold: Some(epsilon),
            starts: starts.len(),
            generated: generated.len(),
            accepted,
            newly_covered: coverage.len() - before,
            covered_total: coverage.len(),
        });
    }

    let fallback_round = config.thresholds.len();
    let leftovers: Vec<FrameId> = (0..n).map(FrameId).filter(|&f| !coverage.is_covered(f)).collect();
    if !leftovers.is_empty() {
        let before = coverage.len();
        for &frame in &leftovers {
            let seq = Subsequence {
                subseq_id: next_id,
                round: fallback_round,
                threshold: None,
                start_frame: frame,
                frames: vec![frame],
                transition_scores: Vec::new(),
            };
            next_id += 1;
            coverage.cover(&seq);
            accepted_all.push(seq);
        }
        rounds.push(RoundSummary {
            round: fallback_round,
            threshold: None,
            starts: leftovers.len(),
            generated: leftovers.len(),
            accepted: leftovers.len(),
            newly_covered: coverage.len() - before,
            covered_total: coverage.len(),
        });
    }

    Ok(Plan {
        spec_version: SCHEMA_VERSION,
        frame_count: n,
        select_measure: config.select_measure,
        threshold_measure: config.threshold_measure,
        threshold_by_center_rank: config.threshold_by_center_rank,
        thresholds: config.thresholds.clone(),
        min_subseq_len: config.min_subseq_len,
        rounds,
        subsequences: accepted_all,
        coverage,
    })
}
