//! Intensity-centroid orientation and rotation-steered BRIEF.

use std::f64::consts::TAU;

use crate::raster::RasterImage;

use super::pattern::ORB_PATTERN;
use super::BinaryDescriptor;

/// Orientation of the intensity centroid of a circular patch.
///
/// `(x, y)` is the integer patch centre; image coordinates are used, so
/// `+y` points down. Moments are accumulated as mirrored differences so a
/// symmetric patch gives exactly zero, which maps to angle `0`. The
/// result is in `[0, 2pi)`.
pub fn orientation(img: &RasterImage, x: usize, y: usize, radius: usize) -> f64 {
    let r = radius as isize;
    let (cx, cy) = (x as isize, y as isize);
    let px = |dx: isize, dy: isize| img.get_clamped(cx + dx, cy + dy, 0);
    let mut m10 = 0.0;
    let mut m01 = 0.0;
    for dy in -r..=r {
        let span = ((r * r - dy * dy) as f64).sqrt().floor() as isize;
        for dx in 1..=span {
            m10 += dx as f64 * (px(dx, dy) - px(-dx, dy));
        }
    }
    for dx in -r..=r {
        let span = ((r * r - dx * dx) as f64).sqrt().floor() as isize;
        for dy in 1..=span {
            m01 += dy as f64 * (px(dx, dy) - px(dx, -dy));
        }
    }
    let angle = m01.atan2(m10);
    if angle < 0.0 {
        angle + TAU
    } else {
        angle
    }
}

/// Rotates a pattern offset and rounds it to the pixel grid.
#[inline]
pub fn steer(dx: i8, dy: i8, cos: f64, sin: f64) -> (isize, isize) {
    let (dx, dy) = (dx as f64, dy as f64);
    (
        (dx * cos - dy * sin).round() as isize,
        (dx * sin + dy * cos).round() as isize,
    )
}

/// 256-bit descriptor at `(x, y)` steered by `angle`.
///
/// Bit `b` is set iff the first point of pair `b` is strictly darker than
/// the second; ties give 0. `img` should already be smoothed.
pub fn steered_brief(img: &RasterImage, x: usize, y: usize, angle: f64) -> BinaryDescriptor {
    let (cos, sin) = (angle.cos(), angle.sin());
    let (cx, cy) = (x as isize, y as isize);
    let mut words = [0u64; 4];
    for (b, pair) in ORB_PATTERN.iter().enumerate() {
        let (px, py) = steer(pair[0], pair[1], cos, sin);
        let (qx, qy) = steer(pair[2], pair[3], cos, sin);
        let p = img.get_clamped(cx + px, cy + py, 0);
        let q = img.get_clamped(cx + qx, cy + qy, 0);
        if p < q {
            words[b / 64] |= 1 << (b % 64);
        }
    }
    BinaryDescriptor(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::gaussian_blur;
    use crate::similarity::hamming;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn moments_oracle(img: &RasterImage, x: usize, y: usize, r: isize) -> (f64, f64) {
        let mut m10 = 0.0;
        let mut m01 = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    let v = img.get_clamped(x as isize + dx, y as isize + dy, 0);
                    m10 += dx as f64 * v;
                    m01 += dy as f64 * v;
                }
            }
        }
        (m10, m01)
    }

    #[test]
    fn symmetric_patch_is_zero() {
        let img = RasterImage::from_fn(41, 41, 1, |x, y, _| {
            let d2 = (x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2);
            (-d2 / 50.0).exp()
        })
        .unwrap();
        assert_eq!(orientation(&img, 20, 20, 15), 0.0);
    }

    #[test]
    fn half_planes() {
        let right = RasterImage::from_fn(41, 41, 1, |x, _, _| if x > 20 { 1.0 } else { 0.0 }).unwrap();
        let (m10, m01) = moments_oracle(&right, 20, 20, 15);
        let a = orientation(&right, 20, 20, 15);
        assert!((a - m01.atan2(m10).rem_euclid(TAU)).abs() < 1e-12);
        assert!(a.min(TAU - a) < 1e-9);

        let down = RasterImage::from_fn(41, 41, 1, |_, y, _| if y > 20 { 1.0 } else { 0.0 }).unwrap();
        let (m10, m01) = moments_oracle(&down, 20, 20, 15);
        let a = orientation(&down, 20, 20, 15);
        assert!((a - m01.atan2(m10)).abs() < 1e-12);
        assert!((a - FRAC_PI_2).abs() < 1e-9);

        let left = RasterImage::from_fn(41, 41, 1, |x, _, _| if x < 20 { 1.0 } else { 0.0 }).unwrap();
        assert!((orientation(&left, 20, 20, 15) - PI).abs() < 1e-9);
    }

    #[test]
    fn orientation_matches_direct_moments() {
        let img = RasterImage::from_fn(50, 50, 1, |x, y, _| {
            ((x as f64 * 0.37).sin() * (y as f64 * 0.21).cos() * 0.5 + 0.5).clamp(0.0, 1.0)
        })
        .unwrap();
        for &(x, y) in &[(20, 20), (25, 30), (30, 18)] {
            let (m10, m01) = moments_oracle(&img, x, y, 15);
            let expected = m01.atan2(m10).rem_euclid(TAU);
            assert!((orientation(&img, x, y, 15) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_patch_gives_zero_descriptor() {
        let img = RasterImage::filled(40, 40, 1, 0.3).unwrap();
        assert_eq!(steered_brief(&img, 20, 20, 1.0), BinaryDescriptor([0; 4]));
    }

    #[test]
    fn deterministic() {
        let img = RasterImage::from_fn(40, 40, 1, |x, y, _| ((x * 31 + y * 17) % 23) as f64 / 22.0).unwrap();
        let a = steered_brief(&img, 20, 20, 0.7);
        let b = steered_brief(&img, 20, 20, 0.7);
        assert_eq!(a, b);
        assert_eq!(hamming(&a, &b), 0);
    }

    /// Rotating the image content by `theta` and steering by `theta` should
    /// reproduce the unrotated descriptor closely.
    #[test]
    fn steering_tracks_rotation() {
        let size = 81;
        let c = 40.0;
        let texture = |x: f64, y: f64| {
            (0.5 + 0.25 * (0.31 * x + 0.17 * y).sin() + 0.25 * (0.23 * x - 0.29 * y).cos())
                .clamp(0.0, 1.0)
        };
        let base = RasterImage::from_fn(size, size, 1, |x, y, _| texture(x as f64, y as f64)).unwrap();
        let base = gaussian_blur(&base, 2.0, 3);
        let reference = steered_brief(&base, 40, 40, 0.0);
        for deg in [-15.0f64, -10.0, -5.0, 5.0, 10.0, 15.0] {
            let theta = deg.to_radians();
            let (cs, sn) = (theta.cos(), theta.sin());
            // rotated(p) = base(R(-theta) (p - c) + c)
            let rotated = RasterImage::from_fn(size, size, 1, |x, y, _| {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                let sx = dx * cs + dy * sn + c;
                let sy = -dx * sn + dy * cs + c;
                texture(sx, sy)
            })
            .unwrap();
            let rotated = gaussian_blur(&rotated, 2.0, 3);
            let d = hamming(&reference, &steered_brief(&rotated, 40, 40, theta.rem_euclid(TAU)));
            assert!(d < 64, "theta {deg} deg gave distance {d}");
        }
    }
}
