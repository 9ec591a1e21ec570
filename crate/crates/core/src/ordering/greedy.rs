use rayon::prelude::*;

use crate::dataset::FrameId;
use crate::similarity::{Dissimilarity, PairScore};

use super::{Subsequence, TransitionScore};

/// Greedy nearest-neighbour chain from `start` through the `pool`.
///
/// At every step the remaining frame with the lowest `select` score
/// against the current tail is the candidate (undefined scores rank last,
/// ties by lowest id). With a `stop` rule `(scorer, epsilon)`, the chain
/// ends before the first candidate whose score exceeds `epsilon` or is
/// undefined. Returns the frames and the per-transition scores.
pub fn extend_greedy(
    select: &dyn PairScore,
    stop: Option<(&dyn PairScore, f64)>,
    start: FrameId,
    pool: impl IntoIterator<Item = FrameId>,
) -> (Vec<FrameId>, Vec<TransitionScore>) {
    let mut remaining: Vec<FrameId> = pool.into_iter().filter(|&f| f != start).collect();
    remaining.sort_unstable();
    remaining.dedup();

    let mut frames = vec![start];
    let mut scores = Vec::new();
    let mut tail = start;
    while !remaining.is_empty() {
        let mut best: Option<(usize, Dissimilarity)> = None;
        for (pos, &cand) in remaining.iter().enumerate() {
            let s = select.score(tail, cand);
            if best.is_none_or(|(_, b)| s.rank_value() < b.rank_value()) {
                best = Some((pos, s));
            }
        }
        let (pos, select_score) = best.expect("remaining is non-empty");
        let cand = remaining[pos];
        let threshold_score = match stop {
            Some((scorer, epsilon)) => {
                let t = scorer.score(tail, cand);
                if t.exceeds(epsilon) {
                    break;
                }
                t
            }
            None => Dissimilarity::undefined(),
        };
        remaining.remove(pos);
        frames.push(cand);
        scores.push(TransitionScore {
            select: select_score,
            threshold: threshold_score,
        });
        tail = cand;
    }
    (frames, scores)
}

/// Orders every frame into one chain starting at `start`.
///
/// If `threshold` is given its scores are recorded per transition but
/// never cut the chain.
pub fn greedy_order(select: &dyn PairScore, threshold: Option<&dyn PairScore>, start: FrameId) -> Subsequence {
    let n = select.len();
    let (frames, mut scores) = extend_greedy(select, None, start, (0..n).map(FrameId));
    if let Some(t) = threshold {
        for (s, w) in scores.iter_mut().zip(frames.windows(2)) {
            s.threshold = t.score(w[0], w[1]);
        }
    }
    Subsequence {
        subseq_id: 0,
        round: 0,
        threshold: None,
        start_frame: start,
        frames,
        transition_scores: scores,
    }
}

/// One clip per start, each drawing from the full frame pool.
///
/// Clips are computed independently (in parallel) and returned in the
/// order of `starts`, numbered from zero.
pub fn adaptive_length_subsequences(
    select: &dyn PairScore,
    threshold: &dyn PairScore,
    epsilon: f64,
    round: usize,
    starts: &[FrameId],
) -> Vec<Subsequence> {
    let n = select.len();
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let (frames, transition_scores) =
                extend_greedy(select, Some((threshold, epsilon)), start, (0..n).map(FrameId));
            Subsequence {
                subseq_id: i,
                round,
                threshold: Some(epsilon),
                start_frame: start,
                frames,
                transition_scores,
            }
        })
        .collect()
}
