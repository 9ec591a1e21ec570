//! FAST-9 segment test corner detector on normalised gray images.

use crate::raster::RasterImage;

use super::Keypoint;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum contiguous arc length.
pub const ARC_LEN: usize = 9;

/// Radius of the circle, and so the minimum border for the test.
pub const RADIUS: usize = 3;

/// Largest threshold at which `(x, y)` still passes the segment test.
///
/// For every arc of nine contiguous circle pixels this is the smallest
/// margin by which the arc is uniformly brighter (or darker) than the
/// centre; the score is the best such margin over all arcs and both
/// polarities. A pixel is a corner at threshold `t` iff `score > t`.
/// The caller must keep `(x, y)` at least [`RADIUS`] pixels from the border.
pub fn corner_score(img: &RasterImage, x: usize, y: usize) -> f64 {
    let p = img.get(x, y, 0);
    let mut diffs = [0.0; 16];
    for (d, &(dx, dy)) in diffs.iter_mut().zip(CIRCLE.iter()) {
        *d = img.get((x as isize + dx) as usize, (y as isize + dy) as usize, 0) - p;
    }
    let mut best = f64::NEG_INFINITY;
    for start in 0..16 {
        let mut brighter = f64::INFINITY;
        let mut darker = f64::INFINITY;
        for k in 0..ARC_LEN {
            let d = diffs[(start + k) % 16];
            brighter = brighter.min(d);
            darker = darker.min(-d);
        }
        best = best.max(brighter).max(darker);
    }
    best
}

/// FAST-9 with 3x3 non-maximum suppression on the corner score.
///
/// Equal scores are resolved in favour of the earliest pixel in raster
/// order, so the output is deterministic. Images smaller than 7x7 yield
/// nothing.
pub fn detect_fast(img: &RasterImage, threshold: f64) -> Vec<Keypoint> {
    let (w, h) = img.dimensions();
    if w < 2 * RADIUS + 1 || h < 2 * RADIUS + 1 {
        return Vec::new();
    }
    let mut scores = vec![f64::NEG_INFINITY; w * h];
    for y in RADIUS..h - RADIUS {
        for x in RADIUS..w - RADIUS {
            let s = corner_score(img, x, y);
            if s > threshold {
                scores[y * w + x] = s;
            }
        }
    }

    let mut out = Vec::new();
    for y in RADIUS..h - RADIUS {
        for x in RADIUS..w - RADIUS {
            let idx = y * w + x;
            let s = scores[idx];
            if s == f64::NEG_INFINITY {
                continue;
            }
            let mut is_max = true;
            'nbhd: for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    let nidx = ny * w + nx;
                    if nidx == idx {
                        continue;
                    }
                    let ns = scores[nidx];
                    if ns > s || (ns == s && nidx < idx) {
                        is_max = false;
                        break 'nbhd;
                    }
                }
            }
            if is_max {
                out.push(Keypoint {
                    x: x as f64,
                    y: y as f64,
                    score: s,
                    angle: 0.0,
                    level: 0,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal segment test: classify every circle pixel, look for a run of
    /// nine on the doubled circle.
    fn segment_test(img: &RasterImage, x: usize, y: usize, t: f64) -> bool {
        let p = img.get(x, y, 0);
        let class: Vec<i8> = CIRCLE
            .iter()
            .map(|&(dx, dy)| {
                let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize, 0);
                if v > p + t {
                    1
                } else if v < p - t {
                    -1
                } else {
                    0
                }
            })
            .collect();
        for polarity in [1i8, -1] {
            let mut run = 0;
            for i in 0..32 {
                if class[i % 16] == polarity {
                    run += 1;
                    if run >= ARC_LEN {
                        return true;
                    }
                } else {
                    run = 0;
                }
            }
        }
        false
    }

    fn brute_force(img: &RasterImage, t: f64) -> Vec<(usize, usize)> {
        let (w, h) = img.dimensions();
        let mut v = Vec::new();
        for y in 3..h - 3 {
            for x in 3..w - 3 {
                if segment_test(img, x, y, t) {
                    v.push((x, y));
                }
            }
        }
        v
    }

    fn score_based(img: &RasterImage, t: f64) -> Vec<(usize, usize)> {
        let (w, h) = img.dimensions();
        let mut v = Vec::new();
        for y in 3..h - 3 {
            for x in 3..w - 3 {
                if corner_score(img, x, y) > t {
                    v.push((x, y));
                }
            }
        }
        v
    }

    fn disc(size: usize, cx: f64, cy: f64, r: f64) -> RasterImage {
        RasterImage::from_fn(size, size, 1, |x, y, _| {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d <= r {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_no_corners() {
        let img = RasterImage::filled(32, 32, 1, 0.4).unwrap();
        assert!(detect_fast(&img, 0.05).is_empty());
    }

    #[test]
    fn tiny_image_is_empty() {
        let img = RasterImage::filled(6, 6, 1, 0.4).unwrap();
        assert!(detect_fast(&img, 0.05).is_empty());
    }

    #[test]
    fn bright_dot() {
        // 5-pixel wide disc
        let img = disc(21, 10.0, 10.0, 2.5);
        let oracle = brute_force(&img, 0.1);
        assert_eq!(score_based(&img, 0.1), oracle);
        assert!(oracle.contains(&(10, 10)));
        let kps = detect_fast(&img, 0.1);
        assert!(!kps.is_empty());
        for k in &kps {
            assert!(oracle.contains(&(k.x as usize, k.y as usize)));
            let d = ((k.x - 10.0).powi(2) + (k.y - 10.0).powi(2)).sqrt();
            assert!(d <= 3.5, "keypoint {k:?} far from the disc");
        }
    }

    #[test]
    fn checkerboard_corners_only() {
        // 8 px squares in a 4x4 board centred on a mid-gray canvas
        let img = RasterImage::from_fn(48, 48, 1, |x, y, _| {
            if (8..40).contains(&x) && (8..40).contains(&y) {
                if ((x - 8) / 8 + (y - 8) / 8) % 2 == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.5
            }
        })
        .unwrap();
        let oracle = brute_force(&img, 0.2);
        assert_eq!(score_based(&img, 0.2), oracle);
        let kps = detect_fast(&img, 0.2);
        assert!(!kps.is_empty());
        for k in &kps {
            // distance to the nearest grid line crossing of the board
            let gx = ((k.x - 8.0) / 8.0).round() * 8.0 + 8.0;
            let gy = ((k.y - 8.0) / 8.0).round() * 8.0 + 8.0;
            let near_corner = (k.x - gx).abs() <= 3.0 && (k.y - gy).abs() <= 3.0;
            assert!(near_corner, "keypoint {k:?} inside a square");
        }
    }

    #[test]
    fn isolated_square_gives_four_corners() {
        let img = RasterImage::from_fn(40, 40, 1, |x, y, _| {
            if (12..28).contains(&x) && (12..28).contains(&y) {
                0.9
            } else {
                0.1
            }
        })
        .unwrap();
        let kps = detect_fast(&img, 0.2);
        for &(cx, cy) in &[(12.0, 12.0), (27.0, 12.0), (12.0, 27.0), (27.0, 27.0)] {
            assert!(
                kps.iter()
                    .any(|k| (k.x - cx).abs() <= 2.0 && (k.y - cy).abs() <= 2.0),
                "no keypoint near ({cx}, {cy})"
            );
        }
        assert!(kps.iter().all(|k| {
            let inside = (16.0..24.0).contains(&k.x) && (16.0..24.0).contains(&k.y);
            !inside
        }));
    }

    #[test]
    fn nms_keeps_local_maxima() {
        let img = RasterImage::from_fn(30, 30, 1, |x, y, _| {
            (((x * 7919 + y * 104729) % 97) as f64 / 96.0).clamp(0.0, 1.0)
        })
        .unwrap();
        let kps = detect_fast(&img, 0.1);
        for a in &kps {
            assert!(a.score > 0.1);
            for b in &kps {
                if a != b {
                    let adjacent = (a.x - b.x).abs() <= 1.0 && (a.y - b.y).abs() <= 1.0;
                    assert!(!adjacent, "{a:?} and {b:?} both survived");
                }
            }
        }
    }
}
