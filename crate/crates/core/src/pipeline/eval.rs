use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_pose_manifest, FrameId};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::{self, LossWeights, PSNR_SENTINEL_DB};
use crate::raster::{self, BackgroundPolicy, RasterImage};
use crate::SCHEMA_VERSION;

use super::Pipeline;

/// PSNR as a JSON number, or the string `"inf"` for identical images.
mod psnr_value {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Marker(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            Repr::Marker("inf".into()).serialize(s)
        } else {
            Repr::Number(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Marker(m) if m == "inf" => Ok(f64::INFINITY),
            Repr::Marker(m) => Err(serde::de::Error::custom(format!("unexpected PSNR marker {m:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_id: FrameId,
    #[serde(with = "psnr_value")]
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub d_ssim: f64,
    /// HR rendering loss of the prediction against the reference.
    pub render_loss: f64,
    /// Against the LR frame of the same id, when one exists.
    pub subpixel_loss: Option<f64>,
    pub total_loss: Option<f64>,
    /// The prediction was resampled to the reference size first.
    pub resized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec_version: u32,
    pub predicted: String,
    pub reference: String,
    pub background: BackgroundPolicy,
    pub ssim_mode: String,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub loss_weights: LossWeights,
    pub psnr_sentinel_db: f64,
    #[serde(with = "psnr_value")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_l1: f64,
    pub mean_render_loss: f64,
    pub frames: Vec<FrameMetrics>,
}

impl EvalReport {
    /// PSNR with the table sentinel in place of infinity.
    pub fn table_psnr(v: f64) -> f64 {
        if v.is_infinite() {
            PSNR_SENTINEL_DB
        } else {
            v
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,psnr,ssim,l1,d_ssim,render_loss,subpixel_loss,total_loss\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f.frame_id,
                Self::table_psnr(f.psnr),
                f.ssim,
                f.l1,
                f.d_ssim,
                f.render_loss,
                opt(f.subpixel_loss),
                opt(f.total_loss)
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{},,{},,",
            Self::table_psnr(self.mean_psnr),
            self.mean_ssim,
            self.mean_l1,
            self.mean_render_loss
        );
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

/// Metrics of one predicted frame against its reference.
pub(super) fn frame_metrics(
    frame_id: FrameId,
    predicted: &RasterImage,
    reference: &RasterImage,
    lr: Option<&RasterImage>,
    weights: &LossWeights,
) -> Result<FrameMetrics> {
    let resized = predicted.dimensions() != reference.dimensions();
    let pred = if resized {
        log::warn!(
            "frame {frame_id}: prediction is {}x{}, reference {}x{}; resampling",
            predicted.width(),
            predicted.height(),
            reference.width(),
            reference.height()
        );
        raster::bicubic_resample(predicted, reference.width(), reference.height())?
    } else {
        predicted.clone()
    };
    if pred.channels() != reference.channels() {
        return Err(Error::DimensionMismatch(format!(
            "frame {frame_id}: {} channels vs {}",
            pred.channels(),
            reference.channels()
        )));
    }
    let l1 = metrics::l1(&pred, reference)?;
    let ssim = metrics::ssim(&pred, reference)?;
    let d_ssim = 1.0 - ssim;
    let render_loss = metrics::combine_render_loss(l1, d_ssim, weights.lambda1);
    let subpixel_loss = lr
        .filter(|lr| {
            metrics::integer_scale(predicted, lr).is_ok()
                && lr.width().min(lr.height()) >= metrics::SSIM_WINDOW
        })
        .map(|lr| metrics::subpixel_loss(predicted, lr, weights))
        .transpose()?;
    Ok(FrameMetrics {
        frame_id,
        psnr: metrics::psnr(&pred, reference)?,
        ssim,
        l1,
        d_ssim,
        render_loss,
        subpixel_loss,
        total_loss: subpixel_loss.map(|sp| metrics::total_loss(render_loss, sp, weights)),
        resized,
    })
}

impl Pipeline {
    /// Per-frame PSNR / SSIM / losses of `predicted` against `reference`.
    ///
    /// Both are `transforms.json` paths relative to the root and default to
    /// the aggregated HR set and the source dataset. Frames are paired by
    /// manifest order and composited under the configured background.
    pub fn eval(&self, predicted: Option<&Path>, reference: Option<&Path>) -> Result<EvalReport> {
        let out_rel = self.config.output.join("hr").join("transforms.json");
        let predicted_rel: PathBuf = predicted.map(Path::to_path_buf).unwrap_or(out_rel);
        let reference_rel: PathBuf = reference
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.config.dataset.clone());
        let pred_set = load_pose_manifest(&self.root.join(&predicted_rel))?;
        let ref_set = load_pose_manifest(&self.root.join(&reference_rel))?;
        if pred_set.len() != ref_set.len() {
            return Err(Error::Config(format!(
                "{} predicted frames vs {} reference frames",
                pred_set.len(),
                ref_set.len()
            )));
        }
        let background = self.config.background;
        let weights = self.config.loss_weights;
        let frames: Vec<FrameMetrics> = pred_set
            .frames
            .par_iter()
            .zip(&ref_set.frames)
            .map(|(p, r)| {
                let (pi, ri) = (p.image()?, r.image()?);
                let pred = background.apply(&pi);
                let reference = background.apply(&ri);
                let lr_path = self.layout.lr_frame(p.frame_id);
                let lr = if lr_path.is_file() {
                    Some(background.apply(&raster::read_png(&lr_path)?))
                } else {
                    None
                };
                frame_metrics(p.frame_id, &pred, &reference, lr.as_ref(), &weights)
            })
            .collect::<Result<_>>()?;

        let report = EvalReport {
            spec_version: SCHEMA_VERSION,
            predicted: display(&predicted_rel),
            reference: display(&reference_rel),
            background,
            ssim_mode: "per_channel_mean".into(),
            ssim_window: metrics::SSIM_WINDOW,
            ssim_sigma: metrics::SSIM_SIGMA,
            ssim_c1: metrics::SSIM_C1,
            ssim_c2: metrics::SSIM_C2,
            loss_weights: weights,
            psnr_sentinel_db: PSNR_SENTINEL_DB,
            mean_psnr: mean(frames.iter().map(|f| f.psnr)),
            mean_ssim: mean(frames.iter().map(|f| f.ssim)),
            mean_l1: mean(frames.iter().map(|f| f.l1)),
            mean_render_loss: mean(frames.iter().map(|f| f.render_loss)),
            frames,
        };
        fsutil::write_json(&self.layout.metrics_json(), &report)?;
        fsutil::write_atomic(&self.layout.metrics_csv(), report.to_csv().as_bytes())?;
        log::info!(
            "eval: mean PSNR {:.3} dB, mean SSIM {:.4}",
            EvalReport::table_psnr(report.mean_psnr),
            report.mean_ssim
        );
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_marker_round_trip() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "psnr_value")] f64);
        assert_eq!(serde_json::to_string(&W(f64::INFINITY)).unwrap(), r#""inf""#);
        assert_eq!(serde_json::to_string(&W(20.5)).unwrap(), "20.5");
        assert_eq!(serde_json::from_str::<W>(r#""inf""#).unwrap().0, f64::INFINITY);
        assert!(serde_json::from_str::<W>(r#""nan""#).is_err());
    }

    #[test]
    fn identical_frames() {
        let img = RasterImage::from_fn(24, 24, 3, |x, y, c| ((x * 3 + y * 5 + c) % 7) as f64 / 7.0).unwrap();
        let lr = raster::downscale(&img, 2).unwrap();
        let m = frame_metrics(FrameId(0), &img, &img, Some(&lr), &LossWeights::BLENDER).unwrap();
        assert_eq!(m.psnr, f64::INFINITY);
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.l1, 0.0);
        assert_eq!(m.subpixel_loss, Some(0.0));
        assert!(!m.resized);
    }

    #[test]
    fn csv_uses_sentinel() {
        let img = RasterImage::filled(12, 12, 3, 0.3).unwrap();
        let m = frame_metrics(FrameId(0), &img, &img, None, &LossWeights::BLENDER).unwrap();
        let report = EvalReport {
            spec_version: SCHEMA_VERSION,
            predicted: "a".into(),
            reference: "b".into(),
            background: BackgroundPolicy::default(),
            ssim_mode: "per_channel_mean".into(),
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_c1: 1e-4,
            ssim_c2: 9e-4,
            loss_weights: LossWeights::BLENDER,
            psnr_sentinel_db: PSNR_SENTINEL_DB,
            mean_psnr: m.psnr,
            mean_ssim: m.ssim,
            mean_l1: 0.0,
            mean_render_loss: 0.0,
            frames: vec![m],
        };
        let csv = report.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("0,99,"));
        assert!(csv.lines().nth(2).unwrap().starts_with("mean,99,"));
    }
}
