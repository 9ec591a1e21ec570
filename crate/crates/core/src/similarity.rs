//! Dissimilarity between frames.
//!
//! Every measure is a *dissimilarity*: lower means more alike. A pair with
//! no usable evidence (too few feature matches, a camera sitting on the
//! origin) is `undefined` and ranks after every defined value.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CameraPose, FrameId};
use crate::error::{Error, Result};
use crate::orb::{BinaryDescriptor, DescriptorSet};

/// Matches required before a mean Hamming distance is trusted.
pub const DEFAULT_MIN_MATCHES: usize = 8;

/// Number of differing bits.
#[inline]
pub fn hamming(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    /// Index into the first set.
    pub query: usize,
    /// Index into the second set.
    pub train: usize,
    pub distance: u32,
}

/// Mutually best descriptor pairs, ordered by `query`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sum of Hamming distances over all pairs.
    pub fn total_distance(&self) -> u64 {
        self.pairs.iter().map(|m| m.distance as u64).sum()
    }
}

/// Brute-force matching with cross-checking.
///
/// `(k, l)` is kept iff `l` is the nearest descriptor in `b` to `a[k]` and
/// `k` is the nearest in `a` to `b[l]`. Ties go to the lowest index.
pub fn cross_check_match(a: &[BinaryDescriptor], b: &[BinaryDescriptor]) -> MatchSet {
    if a.is_empty() || b.is_empty() {
        return MatchSet::default();
    }
    let mut best_in_a = vec![(u32::MAX, 0usize); b.len()];
    let mut forward = Vec::with_capacity(a.len());
    for (k, da) in a.iter().enumerate() {
        let mut best = (u32::MAX, 0usize);
        for (l, db) in b.iter().enumerate() {
            let d = hamming(da, db);
            if d < best.0 {
                best = (d, l);
            }
            if d < best_in_a[l].0 {
                best_in_a[l] = (d, k);
            }
        }
        forward.push(best);
    }
    let pairs = forward
        .into_iter()
        .enumerate()
        .filter(|&(k, (_, l))| best_in_a[l].1 == k)
        .map(|(k, (distance, l))| Match {
            query: k,
            train: l,
            distance,
        })
        .collect();
    MatchSet { pairs }
}

/// A dissimilarity value, or the absence of one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub struct Dissimilarity {
    pub value: f64,
    pub defined: bool,
}

impl Dissimilarity {
    pub fn defined(value: f64) -> Self {
        Dissimilarity {
            value,
            defined: true,
        }
    }

    pub fn undefined() -> Self {
        Dissimilarity {
            value: 0.0,
            defined: false,
        }
    }

    pub fn get(&self) -> Option<f64> {
        self.defined.then_some(self.value)
    }

    /// Value used for ranking: undefined is `+inf`.
    pub fn rank_value(&self) -> f64 {
        if self.defined {
            self.value
        } else {
            f64::INFINITY
        }
    }

    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.rank_value().total_cmp(&other.rank_value())
    }

    /// True when the value is missing or strictly greater than `epsilon`.
    pub fn exceeds(&self, epsilon: f64) -> bool {
        !self.defined || self.value > epsilon
    }
}

impl From<Option<f64>> for Dissimilarity {
    fn from(v: Option<f64>) -> Self {
        v.map_or_else(Dissimilarity::undefined, Dissimilarity::defined)
    }
}

impl From<Dissimilarity> for Option<f64> {
    fn from(d: Dissimilarity) -> Self {
        d.get()
    }
}

/// Mean Hamming distance over cross-checked matches.
///
/// Undefined when fewer than `min_matches` (and at least one) pairs survive.
pub fn orb_dissimilarity(a: &DescriptorSet, b: &DescriptorSet, min_matches: usize) -> Dissimilarity {
    let matches = cross_check_match(&a.descriptors, &b.descriptors);
    if matches.is_empty() || matches.len() < min_matches {
        return Dissimilarity::undefined();
    }
    Dissimilarity::defined(matches.total_distance() as f64 / matches.len() as f64)
}

/// Angle between two vectors, `atan2(|u x v|, u . v)`.
fn angle_between(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Angle subtended at `origin` by the two camera centres.
pub fn pose_angle_to_origin(p: &CameraPose, q: &CameraPose, origin: &Vector3<f64>) -> Dissimilarity {
    let u = p.center - origin;
    let v = q.center - origin;
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Dissimilarity::undefined();
    }
    Dissimilarity::defined(angle_between(&u, &v))
}

pub fn pose_center_distance(p: &CameraPose, q: &CameraPose) -> Dissimilarity {
    Dissimilarity::defined((p.center - q.center).norm())
}

/// Angle between the two viewing axes.
pub fn pose_direction_angle(p: &CameraPose, q: &CameraPose) -> Dissimilarity {
    Dissimilarity::defined(angle_between(&p.view_axis, &q.view_axis))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Mean Hamming distance of cross-checked ORB matches (bits).
    OrbMeanMatch,
    /// Angle between the origin-to-centre vectors (radians).
    PoseAngleToOrigin,
    /// Distance between camera centres (world units).
    PoseCenterDistance,
    /// Angle between viewing axes (radians).
    PoseDirectionAngle,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::OrbMeanMatch,
        MeasureKind::PoseAngleToOrigin,
        MeasureKind::PoseCenterDistance,
        MeasureKind::PoseDirectionAngle,
    ];

    pub fn needs_descriptors(&self) -> bool {
        matches!(self, MeasureKind::OrbMeanMatch)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::OrbMeanMatch => "orb_mean_match",
            MeasureKind::PoseAngleToOrigin => "pose_angle_to_origin",
            MeasureKind::PoseCenterDistance => "pose_center_distance",
            MeasureKind::PoseDirectionAngle => "pose_direction_angle",
        }
    }
}

impl std::str::FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown measure {s:?}")))
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a measure may need about the frames of one scene.
#[derive(Clone, Debug)]
pub struct FrameFeatures {
    pub poses: Vec<CameraPose>,
    /// Indexed by frame id; required only for [`MeasureKind::OrbMeanMatch`].
    pub descriptors: Option<Vec<DescriptorSet>>,
    pub origin: Vector3<f64>,
    pub min_matches: usize,
}

impl FrameFeatures {
    pub fn from_poses(poses: Vec<CameraPose>) -> Self {
        FrameFeatures {
            poses,
            descriptors: None,
            origin: Vector3::zeros(),
            min_matches: DEFAULT_MIN_MATCHES,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn measure(&self, kind: MeasureKind, i: FrameId, j: FrameId) -> Result<Dissimilarity> {
        let (p, q) = (&self.poses[i.0], &self.poses[j.0]);
        Ok(match kind {
            MeasureKind::OrbMeanMatch => {
                let sets = self.descriptors.as_ref().ok_or_else(|| {
                    Error::Config("orb_mean_match requires descriptors".into())
                })?;
                orb_dissimilarity(&sets[i.0], &sets[j.0], self.min_matches)
            }
            MeasureKind::PoseAngleToOrigin => pose_angle_to_origin(p, q, &self.origin),
            MeasureKind::PoseCenterDistance => pose_center_distance(p, q),
            MeasureKind::PoseDirectionAngle => pose_direction_angle(p, q),
        })
    }
}

/// Anything that scores a directed transition between two frames.
pub trait PairScore: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn score(&self, from: FrameId, to: FrameId) -> Dissimilarity;
}

/// Dense N x N table of one measure. The diagonal is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub label: String,
    n: usize,
    values: Vec<Dissimilarity>,
}

impl ScoreMatrix {
    /// Fills the upper triangle in parallel and mirrors it.
    pub fn compute(features: &FrameFeatures, kind: MeasureKind) -> Result<Self> {
        let n = features.len();
        if kind.needs_descriptors() && features.descriptors.is_none() {
            return Err(Error::Config(format!("{kind} requires descriptors")));
        }
        let rows: Vec<Vec<Dissimilarity>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| features.measure(kind, FrameId(i), FrameId(j)).expect("checked above"))
                    .collect()
            })
            .collect();
        let mut values = vec![Dissimilarity::defined(0.0); n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(ScoreMatrix {
            label: kind.name().to_string(),
            n,
            values,
        })
    }

    /// Rank of each candidate by centre distance from the source, 1 = nearest.
    ///
    /// Equal distances rank by frame id. Not symmetric.
    pub fn center_rank(poses: &[CameraPose]) -> Self {
        let n = poses.len();
        let mut values = vec![Dissimilarity::defined(0.0); n * n];
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = (poses[a].center - poses[i].center).norm();
                let db = (poses[b].center - poses[i].center).norm();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            for (rank, j) in others.into_iter().enumerate() {
                values[i * n + j] = Dissimilarity::defined((rank + 1) as f64);
            }
        }
        ScoreMatrix {
            label: "pose_center_rank".into(),
            n,
            values,
        }
    }

    pub fn from_fn(label: &str, n: usize, f: impl Fn(usize, usize) -> Dissimilarity) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(if i == j { Dissimilarity::defined(0.0) } else { f(i, j) });
            }
        }
        ScoreMatrix {
            label: label.into(),
            n,
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Dissimilarity {
        self.values[i * self.n + j]
    }

    /// CSV dump: `i,j,measure,value,defined`, off-diagonal entries only.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,measure,value,defined")?;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let d = self.get(i, j);
                match d.get() {
                    Some(v) => writeln!(out, "{i},{j},{},{v},true", self.label)?,
                    None => writeln!(out, "{i},{j},{},,false", self.label)?,
                }
            }
        }
        Ok(())
    }
}

impl PairScore for ScoreMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn score(&self, from: FrameId, to: FrameId) -> Dissimilarity {
        self.get(from.0, to.0)
    }
}
