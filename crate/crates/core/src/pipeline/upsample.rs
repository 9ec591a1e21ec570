use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::ordering::Plan;
use crate::raster;
use crate::SCHEMA_VERSION;

use super::{frame_file_name, rel_path, reset_dir, subseq_dir_name, Layout, Pipeline, UpsamplerConfig};

/// Environment variable holding the external command timeout in seconds.
pub const UPSAMPLE_TIMEOUT_ENV: &str = "SEQSR_UPSAMPLE_TIMEOUT_SECS";

/// The contract handed to a VSR backend.
///
/// Paths are relative to the directory containing the manifest. The
/// backend reads each clip's LR frames in order and writes the upsampled
/// frame to `output_path`. Clips are raw: no padding or reflection at the
/// ends is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsampleManifest {
    pub spec_version: u32,
    pub scale_factor: usize,
    pub lr_root: String,
    pub output_root: String,
    pub output_pattern: String,
    pub subsequences: Vec<ClipEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub subseq_id: usize,
    pub round: usize,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: FrameId,
    pub lr_path: String,
    pub output_path: String,
    pub lr_size: [usize; 2],
    pub output_size: [usize; 2],
}

impl UpsampleManifest {
    /// One clip entry per plan subsequence; LR files must already exist.
    pub fn build(plan: &Plan, layout: &Layout, scale_factor: usize) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut subsequences = Vec::with_capacity(plan.subsequences.len());
        for seq in &plan.subsequences {
            if !ids.insert(seq.subseq_id) {
                return Err(Error::Subsequence {
                    subseq_id: seq.subseq_id,
                    reason: "duplicate subseq_id".into(),
                });
            }
            let frames = seq
                .frames
                .iter()
                .map(|&f| {
                    let (w, h) = raster::png_dimensions(&layout.lr_frame(f))?;
                    Ok(FrameEntry {
                        frame_id: f,
                        lr_path: rel_path(&[Layout::LR, &frame_file_name(f)]),
                        output_path: rel_path(&[Layout::UPSAMPLED, &subseq_dir_name(seq.subseq_id), &frame_file_name(f)]),
                        lr_size: [w, h],
                        output_size: [w * scale_factor, h * scale_factor],
                    })
                })
                .collect::<Result<_>>()?;
            subsequences.push(ClipEntry {
                subseq_id: seq.subseq_id,
                round: seq.round,
                frames,
            });
        }
        Ok(UpsampleManifest {
            spec_version: SCHEMA_VERSION,
            scale_factor,
            lr_root: Layout::LR.into(),
            output_root: Layout::UPSAMPLED.into(),
            output_pattern: "subseq_{subseq_id:05}/frame_{frame_id:05}.png".into(),
            subsequences,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn frame_count(&self) -> usize {
        self.subsequences.iter().map(|c| c.frames.len()).sum()
    }

    /// Checks that every expected output exists with the expected size.
    pub fn verify_outputs(&self, base: &Path) -> Result<()> {
        for clip in &self.subsequences {
            for f in &clip.frames {
                let path = base.join(&f.output_path);
                if !path.is_file() {
                    return Err(Error::Subsequence {
                        subseq_id: clip.subseq_id,
                        reason: format!("missing output {}", f.output_path),
                    });
                }
                let (w, h) = raster::png_dimensions(&path)?;
                if [w, h] != f.output_size {
                    return Err(Error::Subsequence {
                        subseq_id: clip.subseq_id,
                        reason: format!(
                            "{} is {w}x{h}, expected {}x{}",
                            f.output_path, f.output_size[0], f.output_size[1]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpsampleSummary {
    pub subsequences: usize,
    pub frames: usize,
    /// External invocations made (0 for the reference upsampler).
    pub invocations: usize,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn timeout(config_secs: Option<u64>) -> Result<Option<Duration>> {
    match std::env::var(UPSAMPLE_TIMEOUT_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(|s| Some(Duration::from_secs(s)))
            .map_err(|_| Error::Config(format!("{UPSAMPLE_TIMEOUT_ENV}={v:?} is not a number of seconds"))),
        Err(_) => Ok(config_secs.map(Duration::from_secs)),
    }
}

/// Runs the template through `sh -c` and waits for it.
fn invoke(template: &str, manifest: &Path, outdir: &Path, cwd: &Path, limit: Option<Duration>) -> Result<()> {
    let command = template
        .replace("{manifest}", &shell_quote(&manifest.to_string_lossy()))
        .replace("{outdir}", &shell_quote(&outdir.to_string_lossy()));
    log::info!("running upsampler: {command}");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(cwd)
        .spawn()
        .map_err(|e| Error::Upsampler(format!("failed to start `{command}`: {e}")))?;
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child
            .try_wait()
            .map_err(|e| Error::Upsampler(format!("waiting for `{command}`: {e}")))?
        {
            break status;
        }
        if limit.is_some_and(|l| started.elapsed() > l) {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Upsampler(format!(
                "`{command}` timed out after {}s",
                limit.unwrap_or_default().as_secs()
            )));
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    if status.success() {
        Ok(())
    } else {
        Err(Error::Upsampler(format!("`{command}` failed with {status}")))
    }
}

impl Pipeline {
    pub fn load_upsample_manifest(&self) -> Result<UpsampleManifest> {
        let path = self.layout.upsample_manifest();
        super::require(&path, "plan")?;
        UpsampleManifest::read(&path)
    }

    /// Super-resolves every clip of the manifest into `upsampled/`.
    pub fn upsample(&self) -> Result<UpsampleSummary> {
        let manifest = self.load_upsample_manifest()?;
        let out = &self.layout.out;
        reset_dir(&self.layout.upsampled_dir())?;
        let invocations = match &self.config.upsampler {
            UpsamplerConfig::ReferenceBicubic => {
                self.reference_upsample(&manifest)?;
                0
            }
            UpsamplerConfig::External {
                command,
                per_subsequence,
                timeout_secs,
            } => {
                let limit = timeout(*timeout_secs)?;
                let out_abs = fs::canonicalize(out).map_err(|e| Error::io(out, e))?;
                let outdir = out_abs.join(Layout::UPSAMPLED);
                fs::create_dir_all(&outdir).map_err(|e| Error::io(&outdir, e))?;
                if *per_subsequence {
                    for clip in &manifest.subsequences {
                        let single = UpsampleManifest {
                            subsequences: vec![clip.clone()],
                            ..manifest.clone()
                        };
                        let path = out_abs.join(format!(".upsample_{}.json", subseq_dir_name(clip.subseq_id)));
                        single.write(&path)?;
                        let result = invoke(command, &path, &outdir, &out_abs, limit)
                            .and_then(|_| single.verify_outputs(&out_abs));
                        let _ = fs::remove_file(&path);
                        result.map_err(|e| match e {
                            Error::Upsampler(reason) => Error::Subsequence {
                                subseq_id: clip.subseq_id,
                                reason,
                            },
                            other => other,
                        })?;
                    }
                    manifest.subsequences.len()
                } else {
                    invoke(command, &out_abs.join("upsample_manifest.json"), &outdir, &out_abs, limit)?;
                    1
                }
            }
        };
        manifest.verify_outputs(out)?;
        log::info!("upsampled {} clips", manifest.subsequences.len());
        Ok(UpsampleSummary {
            subsequences: manifest.subsequences.len(),
            frames: manifest.frame_count(),
            invocations,
        })
    }

    fn reference_upsample(&self, manifest: &UpsampleManifest) -> Result<()> {
        let out = &self.layout.out;
        let jobs: Vec<&FrameEntry> = manifest.subsequences.iter().flat_map(|c| &c.frames).collect();
        jobs.par_iter().try_for_each(|f| {
            let lr = raster::read_png(&out.join(&f.lr_path))?;
            let hr = raster::upscale(&lr, manifest.scale_factor)?;
            raster::write_png(&hr, &out.join(&f.output_path))
        })
    }
}
