//! Floating point rasters, bicubic resampling and PNG I/O.
//!
//! Pixel values are kept as `f64` in `[0, 1]`. Quantisation to 8 bits only
//! happens when writing a PNG.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

/// Keys cubic convolution parameter.
pub const BICUBIC_A: f64 = -0.5;

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    /// Builds an image from raw interleaved data.
    ///
    /// Values outside `[0, 1]` are rejected, as are channel counts other than
    /// 1, 3 or 4.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::DimensionMismatch(format!(
                "unsupported channel count {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch("image has zero area".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::DimensionMismatch(format!(
                "sample {v} outside [0, 1]"
            )));
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![value; width * height * channels])
    }

    /// Evaluates `f(x, y, c)` for every sample. Results are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::from_vec(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Sample with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Extracts a single channel as a one-channel image.
    pub fn channel(&self, c: usize) -> RasterImage {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Keys cubic kernel with `a = -0.5`.
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Precomputed taps for one output coordinate along one axis.
struct AxisTaps {
    /// Source index of the reference tap (nearest to the sample centre).
    anchor: usize,
    taps: Vec<(usize, f64)>,
}

/// Tap tables for resampling an axis of length `src` to length `dst`.
///
/// The kernel is stretched by the scale factor when shrinking so the
/// filter also acts as an anti-aliasing prefilter. Weights are normalised
/// and indices are clamped to the edge.
fn axis_taps(src: usize, dst: usize) -> Vec<AxisTaps> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    let last = src as isize - 1;
    (0..dst)
        .map(|o| {
            let centre = (o as f64 + 0.5) * scale - 0.5;
            let lo = (centre - 2.0 * support).floor() as isize + 1;
            let hi = (centre + 2.0 * support).ceil() as isize - 1;
            let mut taps = Vec::with_capacity((hi - lo + 1).max(1) as usize);
            let mut total = 0.0;
            for j in lo..=hi {
                let w = cubic_kernel((j as f64 - centre) / support);
                if w != 0.0 {
                    taps.push((j.clamp(0, last) as usize, w));
                    total += w;
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            let anchor = (centre.round() as isize).clamp(0, last) as usize;
            AxisTaps { anchor, taps }
        })
        .collect()
}

/// Applies taps relative to the anchor sample so constant input is
/// reproduced exactly: `p_anchor + sum(w * (p - p_anchor))`.
#[inline]
fn apply_taps(taps: &AxisTaps, sample: impl Fn(usize) -> f64) -> f64 {
    let anchor = sample(taps.anchor);
    let delta: f64 = taps.taps.iter().map(|&(i, w)| w * (sample(i) - anchor)).sum();
    anchor + delta
}

/// Bicubic resampling to `out_w x out_h`, channels preserved.
///
/// Output samples are clamped to `[0, 1]`.
pub fn bicubic_resample(img: &RasterImage, out_w: usize, out_h: usize) -> Result<RasterImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::DimensionMismatch(format!(
            "target size {out_w}x{out_h} must be at least 1x1"
        )));
    }
    let (w, h, ch) = (img.width, img.height, img.channels);
    let xt = axis_taps(w, out_w);
    let yt = axis_taps(h, out_h);

    // Horizontal pass: h rows of out_w samples.
    let mut tmp = vec![0.0; out_w * h * ch];
    for y in 0..h {
        for (ox, taps) in xt.iter().enumerate() {
            for c in 0..ch {
                tmp[(y * out_w + ox) * ch + c] = apply_taps(taps, |x| img.get(x, y, c));
            }
        }
    }

    let mut data = vec![0.0; out_w * out_h * ch];
    for (oy, taps) in yt.iter().enumerate() {
        for ox in 0..out_w {
            for c in 0..ch {
                let v = apply_taps(taps, |y| tmp[(y * out_w + ox) * ch + c]);
                data[(oy * out_w + ox) * ch + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(RasterImage {
        width: out_w,
        height: out_h,
        channels: ch,
        data,
    })
}

/// Output size for an integer downscale; non-divisible sides round up.
pub fn downscaled_size(width: usize, height: usize, factor: usize) -> (usize, usize) {
    (width.div_ceil(factor), height.div_ceil(factor))
}

pub fn downscale(img: &RasterImage, factor: usize) -> Result<RasterImage> {
    let (w, h) = downscaled_size(img.width, img.height, factor);
    bicubic_resample(img, w, h)
}

pub fn upscale(img: &RasterImage, factor: usize) -> Result<RasterImage> {
    bicubic_resample(img, img.width * factor, img.height * factor)
}

/// Blends an RGBA image over a solid background and drops alpha.
///
/// Images without alpha are returned unchanged.
pub fn composite_background(img: &RasterImage, background: [f64; 3]) -> RasterImage {
    if img.channels != 4 {
        log::warn!(
            "composite_background on a {}-channel image; passing through",
            img.channels
        );
        return img.clone();
    }
    let mut data = Vec::with_capacity(img.width * img.height * 3);
    for px in img.data.chunks_exact(4) {
        let alpha = px[3];
        for c in 0..3 {
            data.push((px[c] * alpha + background[c] * (1.0 - alpha)).clamp(0.0, 1.0));
        }
    }
    RasterImage {
        width: img.width,
        height: img.height,
        channels: 3,
        data,
    }
}

/// What happens to the alpha channel of RGBA inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BackgroundPolicy {
    /// Keep RGBA as is.
    Keep,
    /// Composite over a solid colour, producing RGB.
    Composite { color: [f64; 3] },
}

impl Default for BackgroundPolicy {
    fn default() -> Self {
        BackgroundPolicy::Composite {
            color: [0.0, 0.0, 0.0],
        }
    }
}

impl BackgroundPolicy {
    pub fn apply(&self, img: &RasterImage) -> RasterImage {
        match self {
            BackgroundPolicy::Composite { color } if img.channels == 4 => {
                composite_background(img, *color)
            }
            _ => img.clone(),
        }
    }

    /// Background colour used when an operation needs one regardless of policy.
    pub fn color(&self) -> [f64; 3] {
        match self {
            BackgroundPolicy::Composite { color } => *color,
            BackgroundPolicy::Keep => [0.0; 3],
        }
    }
}

/// Separable Gaussian blur with edge clamping, per channel.
pub fn gaussian_blur(img: &RasterImage, sigma: f64, radius: usize) -> RasterImage {
    let r = radius as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h, ch) = (img.width, img.height, img.channels);
    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-r..=r) {
                    acc += k * img.get_clamped(x as isize + i, y as isize, c);
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut data = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-r..=r) {
                    let yy = (y as isize + i).clamp(0, h as isize - 1) as usize;
                    acc += k * tmp[(yy * w + x) * ch + c];
                }
                data[(y * w + x) * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    RasterImage {
        width: w,
        height: h,
        channels: ch,
        data,
    }
}

/// Decodes an image file into a normalised raster.
///
/// Gray and RGB files keep their channel count; anything with alpha becomes RGBA.
pub fn read_png(path: &Path) -> Result<RasterImage> {
    let dynamic = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(dynamic))
}

fn from_dynamic(dynamic: DynamicImage) -> RasterImage {
    let color = dynamic.color();
    let (width, height) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, bytes) = if color.has_alpha() {
        (4, dynamic.to_rgba8().into_raw())
    } else if color.has_color() {
        (3, dynamic.to_rgb8().into_raw())
    } else {
        (1, dynamic.to_luma8().into_raw())
    };
    RasterImage {
        width,
        height,
        channels,
        data: bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
    }
}

/// Quantises to 8 bits per sample.
pub fn to_bytes(img: &RasterImage) -> Vec<u8> {
    img.data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Encodes `img` as an 8-bit PNG and writes it atomically.
pub fn write_png(img: &RasterImage, path: &Path) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let raw = to_bytes(img);
    let dynamic = match img.channels {
        1 => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap()),
        3 => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap()),
        _ => DynamicImage::ImageRgba8(ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, raw).unwrap()),
    };
    let mut encoded = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut encoded, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    fsutil::write_atomic(path, encoded.get_ref())
}

/// Reads only the header to get `(width, height)`.
pub fn png_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((w as usize, h as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> RasterImage {
        RasterImage::from_fn(w, h, 1, |x, y, _| (x + y * w) as f64 / (w * h) as f64).unwrap()
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert_eq!(cubic_kernel(2.5), 0.0);
        // partition of unity at a half-pixel offset
        let s: f64 = [-1.5, -0.5, 0.5, 1.5].iter().map(|&x| cubic_kernel(x)).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn benchmark_scale_dimensions() {
        let img = RasterImage::filled(800, 800, 3, 0.25).unwrap();
        let out = downscale(&img, 4).unwrap();
        assert_eq!(out.dimensions(), (200, 200));
        assert_eq!(out.channels(), 3);
    }

    #[test]
    fn constants_survive_any_resize() {
        for &c in &[0.0, 0.1, 0.3, 0.5, 0.7, 1.0] {
            let img = RasterImage::filled(13, 9, 4, c).unwrap();
            for &(w, h) in &[(1, 1), (5, 3), (13, 9), (40, 17), (4, 30)] {
                let out = bicubic_resample(&img, w, h).unwrap();
                assert!(out.data().iter().all(|&v| v == c), "c={c} {w}x{h}");
            }
        }
    }

    #[test]
    fn identity_size_is_identity() {
        let img = ramp(9, 7);
        let out = bicubic_resample(&img, 9, 7).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target_rejected() {
        let img = ramp(4, 4);
        assert!(bicubic_resample(&img, 0, 4).is_err());
        assert!(bicubic_resample(&img, 4, 0).is_err());
    }

    #[test]
    fn ceil_policy_for_non_divisible_sizes() {
        assert_eq!(downscaled_size(801, 799, 4), (201, 200));
        assert_eq!(downscaled_size(3, 3, 8), (1, 1));
    }

    #[test]
    fn composite_cases() {
        let transparent = RasterImage::from_fn(4, 4, 4, |_, _, c| if c == 3 { 0.0 } else { 0.8 }).unwrap();
        let out = composite_background(&transparent, [0.0; 3]);
        assert_eq!(out.channels(), 3);
        assert!(out.data().iter().all(|&v| v == 0.0));

        let opaque = RasterImage::from_fn(4, 4, 4, |x, _, c| if c == 3 { 1.0 } else { x as f64 / 4.0 }).unwrap();
        let out = composite_background(&opaque, [1.0; 3]);
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..3 {
                    assert_eq!(out.get(x, y, c), opaque.get(x, y, c));
                }
            }
        }

        let half = RasterImage::from_fn(2, 2, 4, |_, _, c| if c == 3 { 0.5 } else { 1.0 }).unwrap();
        let out = composite_background(&half, [0.0; 3]);
        assert!(out.data().iter().all(|&v| v == 0.5));

        let rgb = ramp(3, 3);
        assert_eq!(composite_background(&rgb, [0.0; 3]), rgb);
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(RasterImage::from_vec(1, 1, 1, vec![1.5]).is_err());
        assert!(RasterImage::from_vec(1, 1, 2, vec![0.5, 0.5]).is_err());
        assert!(RasterImage::from_vec(2, 1, 1, vec![0.5]).is_err());
    }

    #[test]
    fn png_round_trip_is_quantised() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RasterImage::from_fn(5, 4, 4, |x, y, c| ((x * 3 + y * 7 + c * 11) % 256) as f64 / 255.0).unwrap();
        write_png(&img, &path).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.channels(), 4);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(png_dimensions(&path).unwrap(), (5, 4));
    }
}
