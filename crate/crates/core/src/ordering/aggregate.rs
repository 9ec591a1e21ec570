use std::collections::BTreeMap;

use crate::dataset::FrameId;
use crate::error::{Error, Result};

use super::Plan;

/// Folds per-clip outputs back into one item per frame.
///
/// `outputs[subseq_id][k]` is the upsampled version of the `k`-th frame of
/// that clip. Every clip of the plan must be present with the right length;
/// each frame takes the item from its recorded provenance (earliest round,
/// then lowest clip id, then earliest position).
pub fn aggregate<T: Clone>(outputs: &BTreeMap<usize, Vec<T>>, plan: &Plan) -> Result<BTreeMap<FrameId, T>> {
    for seq in &plan.subsequences {
        let out = outputs.get(&seq.subseq_id).ok_or_else(|| Error::Subsequence {
            subseq_id: seq.subseq_id,
            reason: "missing upsampled output".into(),
        })?;
        if out.len() != seq.len() {
            return Err(Error::Subsequence {
                subseq_id: seq.subseq_id,
                reason: format!("expected {} upsampled frames, got {}", seq.len(), out.len()),
            });
        }
    }
    let mut result = BTreeMap::new();
    for f in 0..plan.frame_count {
        let frame = FrameId(f);
        let p = plan.coverage.provenance(frame).ok_or_else(|| {
            Error::Config(format!("frame {frame} is not covered by the plan"))
        })?;
        let item = outputs
            .get(&p.subseq_id)
            .and_then(|v| v.get(p.position))
            .ok_or_else(|| Error::Subsequence {
                subseq_id: p.subseq_id,
                reason: format!("no output at position {}", p.position),
            })?;
        result.insert(frame, item.clone());
    }
    Ok(result)
}
