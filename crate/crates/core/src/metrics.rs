//! Image fidelity metrics and the 3DGS-style training loss arithmetic.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), the `[0, 1]` dynamic
//! range constants `C1 = 0.01^2` and `C2 = 0.03^2`, and only windows that
//! lie fully inside the image. Multi-channel images are scored per channel
//! and averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, RasterImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// PSNR shown in tables for identical images.
pub const PSNR_SENTINEL_DB: f64 = 99.0;

/// Weights of the rendering and sub-pixel losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of D-SSIM against L1.
    pub lambda1: f64,
    /// Weight of the HR rendering loss against the sub-pixel loss.
    pub lambda_ren: f64,
}

impl LossWeights {
    /// Object-centric synthetic scenes.
    pub const BLENDER: LossWeights = LossWeights {
        lambda1: 0.2,
        lambda_ren: 0.6,
    };

    /// Unbounded real scenes.
    pub const MIP_NERF_360: LossWeights = LossWeights {
        lambda1: 0.2,
        lambda_ren: 0.4,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda_ren", self.lambda_ren)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::BLENDER
    }
}

fn check_shape(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean absolute difference over all samples.
pub fn l1(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data().len() as f64)
}

pub fn mse(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / m).log10()
    })
}

/// Normalised 1-D Gaussian of length [`SSIM_WINDOW`].
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" filtering of a single-channel plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_window();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
    }
    total / mu_a.len() as f64
}

/// Mean structural similarity, averaged over channels.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shape(a, b)?;
    let (w, h) = a.dimensions();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let ch = a.channels();
    let total: f64 = (0..ch)
        .map(|c| ssim_plane(a.channel(c).data(), b.channel(c).data(), w, h))
        .sum();
    Ok(total / ch as f64)
}

pub fn d_ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    Ok(1.0 - ssim(a, b)?)
}

/// Source of the two loss components, swappable for testing.
pub trait LossComponents {
    fn l1(&self, a: &RasterImage, b: &RasterImage) -> Result<f64>;
    fn d_ssim(&self, a: &RasterImage, b: &RasterImage) -> Result<f64>;
}

/// The real L1 and D-SSIM.
#[derive(Clone, Copy, Debug, Default)]
pub struct StandardComponents;

impl LossComponents for StandardComponents {
    fn l1(&self, a: &RasterImage, b: &RasterImage) -> Result<f64> {
        l1(a, b)
    }

    fn d_ssim(&self, a: &RasterImage, b: &RasterImage) -> Result<f64> {
        d_ssim(a, b)
    }
}

/// `(1 - lambda1) * l1 + lambda1 * d_ssim`.
pub fn combine_render_loss(l1: f64, d_ssim: f64, lambda1: f64) -> f64 {
    (1.0 - lambda1) * l1 + lambda1 * d_ssim
}

pub fn render_loss_with(
    components: &impl LossComponents,
    rendered: &RasterImage,
    target: &RasterImage,
    weights: &LossWeights,
) -> Result<f64> {
    let l = components.l1(rendered, target)?;
    let d = components.d_ssim(rendered, target)?;
    Ok(combine_render_loss(l, d, weights.lambda1))
}

pub fn render_loss(rendered: &RasterImage, target: &RasterImage, weights: &LossWeights) -> Result<f64> {
    render_loss_with(&StandardComponents, rendered, target, weights)
}

/// Integer factor relating an HR raster to its LR counterpart.
pub fn integer_scale(hr: &RasterImage, lr: &RasterImage) -> Result<usize> {
    let (hw, hh) = hr.dimensions();
    let (lw, lh) = lr.dimensions();
    if hr.channels() == lr.channels() && hw % lw == 0 && hh % lh == 0 && hw / lw == hh / lh {
        Ok(hw / lw)
    } else {
        Err(Error::DimensionMismatch(format!(
            "{hw}x{hh}x{} is not an integer multiple of {lw}x{lh}x{}",
            hr.channels(),
            lr.channels()
        )))
    }
}

/// Rendering loss between the bicubic-downsampled HR render and the LR ground truth.
pub fn subpixel_loss_with(
    components: &impl LossComponents,
    rendered_hr: &RasterImage,
    lr_gt: &RasterImage,
    weights: &LossWeights,
) -> Result<f64> {
    integer_scale(rendered_hr, lr_gt)?;
    let down = raster::bicubic_resample(rendered_hr, lr_gt.width(), lr_gt.height())?;
    render_loss_with(components, &down, lr_gt, weights)
}

pub fn subpixel_loss(rendered_hr: &RasterImage, lr_gt: &RasterImage, weights: &LossWeights) -> Result<f64> {
    subpixel_loss_with(&StandardComponents, rendered_hr, lr_gt, weights)
}

/// `lambda_ren * ren + (1 - lambda_ren) * sp`.
pub fn total_loss(ren: f64, sp: f64, weights: &LossWeights) -> f64 {
    weights.lambda_ren * ren + (1.0 - weights.lambda_ren) * sp
}
