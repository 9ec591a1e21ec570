use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{load_pose_manifest, FrameId};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::raster::{self, BackgroundPolicy};
use crate::SCHEMA_VERSION;

use super::{frame_file_name, reset_dir, Pipeline};

/// Sidecar written next to the LR frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSidecar {
    pub spec_version: u32,
    pub scale_factor: usize,
    pub background: BackgroundPolicy,
    pub kernel: String,
    /// How non-divisible sizes are rounded.
    pub size_policy: String,
    pub source_manifest: String,
    pub frames: Vec<DegradedFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradedFrame {
    pub frame_id: FrameId,
    /// `file_path` as written in the source manifest.
    pub source: String,
    pub output: String,
    pub source_size: [usize; 2],
    pub output_size: [usize; 2],
}

impl Pipeline {
    /// Bicubic-downsamples every HR frame by the scale factor into `lr/`.
    pub fn degrade(&self) -> Result<DegradeSidecar> {
        let set = load_pose_manifest(&self.dataset_manifest())?;
        let s = self.config.scale_factor;
        let background = self.config.background;
        let layout = &self.layout;
        let manifest = set.manifest.as_ref().expect("loaded from a manifest");
        reset_dir(&layout.lr_dir())?;

        let frames: Vec<DegradedFrame> = set
            .frames
            .par_iter()
            .map(|f| {
                let hr = background.apply(&raster::read_png(&f.source_path)?);
                let lr = raster::downscale(&hr, s)?;
                raster::write_png(&lr, &layout.lr_frame(f.frame_id))?;
                Ok(DegradedFrame {
                    frame_id: f.frame_id,
                    source: manifest.frames[f.frame_id.0].file_path.clone(),
                    output: frame_file_name(f.frame_id),
                    source_size: [hr.width(), hr.height()],
                    output_size: [lr.width(), lr.height()],
                })
            })
            .collect::<Result<_>>()?;

        if let Some(bad) = frames.iter().find(|f| f.source_size != frames[0].source_size) {
            return Err(Error::DimensionMismatch(format!(
                "frame {} is {}x{}, frame 0 is {}x{}",
                bad.frame_id,
                bad.source_size[0],
                bad.source_size[1],
                frames[0].source_size[0],
                frames[0].source_size[1]
            )));
        }

        let mut lr_manifest = manifest.clone();
        lr_manifest.scale_factor = Some(s);
        let [w, h] = frames[0].output_size;
        lr_manifest.extra.insert("w".into(), Value::from(w));
        lr_manifest.extra.insert("h".into(), Value::from(h));
        for (entry, f) in lr_manifest.frames.iter_mut().zip(&frames) {
            entry.file_path = format!("./{}", f.output);
        }
        lr_manifest.write(&layout.lr_manifest())?;

        let sidecar = DegradeSidecar {
            spec_version: SCHEMA_VERSION,
            scale_factor: s,
            background,
            kernel: format!("bicubic a={} antialiased, edge clamp", raster::BICUBIC_A),
            size_policy: "ceil".into(),
            source_manifest: self.config.dataset.to_string_lossy().replace('\\', "/"),
            frames,
        };
        fsutil::write_json(&layout.degrade_sidecar(), &sidecar)?;
        log::info!("degraded {} frames by x{s}", sidecar.frames.len());
        Ok(sidecar)
    }
}
