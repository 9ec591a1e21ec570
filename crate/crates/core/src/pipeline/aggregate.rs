use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{FrameId, PoseManifest};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::ordering::aggregate;
use crate::raster;
use crate::SCHEMA_VERSION;

use super::{frame_file_name, rel_path, require, reset_dir, Layout, Pipeline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub frame_id: FrameId,
    pub round: usize,
    pub subseq_id: usize,
    pub position: usize,
    /// Upsampled file the HR frame was copied from, relative to the output directory.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub spec_version: u32,
    pub frames: Vec<ProvenanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateSummary {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Pipeline {
    /// Picks one upsampled image per frame and writes the HR dataset.
    pub fn aggregate(&self) -> Result<AggregateSummary> {
        let plan = self.load_plan()?;
        let manifest = self.load_upsample_manifest()?;
        let layout = &self.layout;

        let mut outputs: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for clip in &manifest.subsequences {
            let seq = plan.subsequence(clip.subseq_id).ok_or_else(|| Error::Subsequence {
                subseq_id: clip.subseq_id,
                reason: "not in the plan".into(),
            })?;
            if !seq.frames.iter().copied().eq(clip.frames.iter().map(|f| f.frame_id)) {
                return Err(Error::Subsequence {
                    subseq_id: clip.subseq_id,
                    reason: "manifest frames differ from the plan".into(),
                });
            }
            outputs.insert(clip.subseq_id, clip.frames.iter().map(|f| f.output_path.clone()).collect());
        }
        manifest.verify_outputs(&layout.out)?;
        let chosen = aggregate(&outputs, &plan)?;

        reset_dir(&layout.hr_dir())?;
        let sizes: Vec<(usize, usize)> = chosen
            .par_iter()
            .map(|(&frame, source)| {
                let src = layout.out.join(source);
                let bytes = fs::read(&src).map_err(|e| Error::io(&src, e))?;
                let dims = raster::png_dimensions(&src)?;
                fsutil::write_atomic(&layout.hr_dir().join(frame_file_name(frame)), &bytes)?;
                Ok(dims)
            })
            .collect::<Result<_>>()?;
        let (width, height) = sizes[0];

        require(&layout.lr_manifest(), "degrade")?;
        let mut hr_manifest = PoseManifest::read(&layout.lr_manifest())?;
        if hr_manifest.frames.len() != plan.frame_count {
            return Err(Error::Config(format!(
                "LR manifest has {} frames, plan {}",
                hr_manifest.frames.len(),
                plan.frame_count
            )));
        }
        let w = &self.config.loss_weights;
        hr_manifest.scale_factor = Some(manifest.scale_factor);
        hr_manifest.extra.insert("w".into(), Value::from(width));
        hr_manifest.extra.insert("h".into(), Value::from(height));
        hr_manifest.extra.insert(
            "loss_weights".into(),
            json!({ "lambda1": w.lambda1, "lambda_ren": w.lambda_ren }),
        );
        for (i, entry) in hr_manifest.frames.iter_mut().enumerate() {
            let name = frame_file_name(FrameId(i));
            entry.file_path = format!("./{name}");
            entry
                .extra
                .insert("lr_file_path".into(), Value::from(rel_path(&["..", Layout::LR, &name])));
        }
        hr_manifest.write(&layout.hr_manifest())?;

        let provenance = ProvenanceReport {
            spec_version: SCHEMA_VERSION,
            frames: chosen
                .iter()
                .map(|(&frame_id, source)| {
                    let p = plan.coverage.provenance(frame_id).expect("aggregate checked coverage");
                    ProvenanceEntry {
                        frame_id,
                        round: p.round,
                        subseq_id: p.subseq_id,
                        position: p.position,
                        source: source.clone(),
                    }
                })
                .collect(),
        };
        fsutil::write_json(&layout.provenance(), &provenance)?;
        log::info!("aggregated {} HR frames", chosen.len());
        Ok(AggregateSummary {
            frames: chosen.len(),
            width,
            height,
        })
    }
}
