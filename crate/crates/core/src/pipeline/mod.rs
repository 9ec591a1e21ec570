//! The on-disk chain: degrade, plan, upsample, aggregate, eval.
//!
//! Every step reads the artifacts of the previous ones from the output
//! directory, so steps can be run one at a time or all at once with
//! [`Pipeline::run`]. Artifact paths recorded in JSON files are relative
//! (to the `--root` or to the output directory) so that reruns in a
//! different location produce identical bytes.
//!
//! Output layout:
//!
//! ```text
//! lr/frame_00000.png, lr/transforms.json, lr/degrade.json
//! cache/orb/frame_00000.bin
//! plan.json, upsample_manifest.json, report.json
//! upsampled/subseq_00000/frame_00000.png
//! hr/frame_00000.png, hr/transforms.json, hr/provenance.json
//! eval/metrics.json, eval/metrics.csv
//! ```

mod aggregate;
mod degrade;
mod eval;
mod plan;
mod upsample;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::LossWeights;
use crate::orb::OrbConfig;
use crate::ordering::OrderingConfig;
use crate::raster::BackgroundPolicy;

pub use aggregate::{AggregateSummary, ProvenanceEntry, ProvenanceReport};
pub use degrade::{DegradeSidecar, DegradedFrame};
pub use eval::{EvalReport, FrameMetrics};
pub use plan::PlanOutcome;
pub use upsample::{ClipEntry, FrameEntry, UpsampleManifest, UpsampleSummary, UPSAMPLE_TIMEOUT_ENV};

/// How the clips are super-resolved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpsamplerConfig {
    #[default]
    /// In-process bicubic upsampling. Deterministic stand-in for a VSR model.
    ReferenceBicubic,
    /// A shell command template run with `{manifest}` and `{outdir}` substituted.
    External {
        command: String,
        /// Run the command once per clip instead of once for the whole manifest.
        #[serde(default)]
        per_subsequence: bool,
        /// Overridden by the environment variable [`UPSAMPLE_TIMEOUT_ENV`].
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// HR `transforms.json`, relative to the root.
    pub dataset: PathBuf,
    /// Output directory, relative to the root.
    pub output: PathBuf,
    /// Degradation and super-resolution factor.
    pub scale_factor: usize,
    pub ordering: OrderingConfig,
    pub orb: OrbConfig,
    pub loss_weights: LossWeights,
    pub upsampler: UpsamplerConfig,
    pub background: BackgroundPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: PathBuf::from("transforms.json"),
            output: PathBuf::from("out"),
            scale_factor: 4,
            ordering: OrderingConfig::default(),
            orb: OrbConfig::default(),
            loss_weights: LossWeights::default(),
            upsampler: UpsamplerConfig::default(),
            background: BackgroundPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_factor < 2 {
            return Err(Error::Config(format!(
                "scale_factor must be at least 2, got {}",
                self.scale_factor
            )));
        }
        self.ordering.validate()?;
        if self.ordering.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        self.orb.validate()?;
        self.loss_weights.validate()?;
        if let UpsamplerConfig::External { command, .. } = &self.upsampler {
            for placeholder in ["{manifest}", "{outdir}"] {
                if !command.contains(placeholder) {
                    return Err(Error::Config(format!(
                        "upsampler command must contain {placeholder}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `frame_{id:05}.png`
pub fn frame_file_name(id: FrameId) -> String {
    format!("frame_{:05}.png", id.0)
}

/// `subseq_{id:05}`
pub fn subseq_dir_name(subseq_id: usize) -> String {
    format!("subseq_{subseq_id:05}")
}

/// Paths inside the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub const LR: &'static str = "lr";
    pub const UPSAMPLED: &'static str = "upsampled";
    pub const HR: &'static str = "hr";

    pub fn lr_dir(&self) -> PathBuf {
        self.out.join(Self::LR)
    }

    pub fn lr_manifest(&self) -> PathBuf {
        self.lr_dir().join("transforms.json")
    }

    pub fn degrade_sidecar(&self) -> PathBuf {
        self.lr_dir().join("degrade.json")
    }

    pub fn lr_frame(&self, id: FrameId) -> PathBuf {
        self.lr_dir().join(frame_file_name(id))
    }

    pub fn orb_cache(&self, id: FrameId) -> PathBuf {
        self.out.join("cache").join("orb").join(format!("frame_{:05}.bin", id.0))
    }

    pub fn plan(&self) -> PathBuf {
        self.out.join("plan.json")
    }

    pub fn upsample_manifest(&self) -> PathBuf {
        self.out.join("upsample_manifest.json")
    }

    pub fn report(&self) -> PathBuf {
        self.out.join("report.json")
    }

    pub fn upsampled_dir(&self) -> PathBuf {
        self.out.join(Self::UPSAMPLED)
    }

    pub fn hr_dir(&self) -> PathBuf {
        self.out.join(Self::HR)
    }

    pub fn hr_manifest(&self) -> PathBuf {
        self.hr_dir().join("transforms.json")
    }

    pub fn provenance(&self) -> PathBuf {
        self.hr_dir().join("provenance.json")
    }

    pub fn metrics_json(&self) -> PathBuf {
        self.out.join("eval").join("metrics.json")
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.out.join("eval").join("metrics.csv")
    }
}

/// What [`Pipeline::run`] did.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub degraded: usize,
    pub plan: PlanOutcome,
    pub upsample: UpsampleSummary,
    pub aggregate: AggregateSummary,
    pub eval: EvalReport,
}

/// A validated configuration bound to a root directory.
#[derive(Clone, Debug)]
pub struct Pipeline {
    root: PathBuf,
    config: PipelineConfig,
    layout: Layout,
}

impl Pipeline {
    pub fn new(root: impl Into<PathBuf>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let root = root.into();
        let layout = Layout {
            out: root.join(&config.output),
        };
        Ok(Pipeline { root, config, layout })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dataset_manifest(&self) -> PathBuf {
        self.root.join(&self.config.dataset)
    }

    /// Every step in order, evaluating against the source dataset.
    pub fn run(&self) -> Result<RunSummary> {
        let degraded = self.degrade()?.frames.len();
        let plan = self.plan()?;
        let upsample = self.upsample()?;
        let aggregate = self.aggregate()?;
        let eval = self.eval(None, None)?;
        Ok(RunSummary {
            degraded,
            plan,
            upsample,
            aggregate,
            eval,
        })
    }
}

/// Removes a directory we own before regenerating it.
fn reset_dir(dir: &Path) -> Result<()> {
    match fs::remove_dir_all(dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Slash-separated relative path for JSON artifacts.
fn rel_path(parts: &[&str]) -> String {
    parts.join("/")
}

fn require(path: &Path, step: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} not found; run `{step}` first",
            path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad_scale = PipelineConfig {
            scale_factor: 1,
            ..Default::default()
        };
        assert!(bad_scale.validate().is_err());
        let missing = PipelineConfig {
            upsampler: UpsamplerConfig::External {
                command: "vsr --in {manifest}".into(),
                per_subsequence: false,
                timeout_secs: None,
            },
            ..Default::default()
        };
        assert!(missing.validate().is_err());
        let ok = PipelineConfig {
            upsampler: UpsamplerConfig::External {
                command: "vsr --in {manifest} --out {outdir}".into(),
                per_subsequence: false,
                timeout_secs: None,
            },
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig {
            loss_weights: LossWeights::MIP_NERF_360,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: PipelineConfig = serde_json::from_str(r#"{"scale_factor": 8}"#).unwrap();
        assert_eq!(partial.scale_factor, 8);
        assert_eq!(partial.ordering, OrderingConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"scale": 8}"#).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(frame_file_name(FrameId(7)), "frame_00007.png");
        assert_eq!(subseq_dir_name(12), "subseq_00012");
    }
}
