//! Synthetic camera rigs and textured datasets for tests, benches and demos.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};

use crate::dataset::{matrix_to_value, CameraPose, ManifestFrame, PoseManifest};
use crate::error::Result;
use crate::raster::{self, RasterImage};

/// Camera at `center` looking at `target`, OpenGL convention (the camera
/// looks down its local -z, so the z column points away from the target).
pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> CameraPose {
    let z = (center - target).normalize();
    let up = if z.z.abs() > 0.999 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let rot = Matrix3::from_columns(&[x, y, z]);
    CameraPose::from_rotation_translation(rot, center).expect("look_at builds a proper rotation")
}

/// Cameras on a horizontal ring around the origin. Angles in degrees.
pub fn ring_rig(azimuths_deg: &[f64], radius: f64, elevation_deg: f64) -> Vec<CameraPose> {
    let e = elevation_deg.to_radians();
    azimuths_deg
        .iter()
        .map(|a| {
            let a = a.to_radians();
            let c = Vector3::new(radius * e.cos() * a.cos(), radius * e.cos() * a.sin(), radius * e.sin());
            look_at(c, Vector3::zeros())
        })
        .collect()
}

/// `n` cameras evenly spaced on a ring.
pub fn uniform_ring(n: usize, radius: f64) -> Vec<CameraPose> {
    let az: Vec<f64> = (0..n).map(|i| 360.0 * i as f64 / n as f64).collect();
    ring_rig(&az, radius, 0.0)
}

/// A dense arc of 30 cameras one degree apart followed by four sparse
/// cameras 60 degrees apart, all at the same radius.
pub fn two_cluster_rig() -> Vec<CameraPose> {
    let mut az: Vec<f64> = (0..30).map(f64::from).collect();
    az.extend([100.0, 160.0, 220.0, 280.0]);
    ring_rig(&az, 4.0, 0.0)
}

/// Cameras scattered over the upper hemisphere, looking at the origin.
pub fn random_rig<R: Rng>(rng: &mut R, n: usize) -> Vec<CameraPose> {
    (0..n)
        .map(|_| {
            let az = rng.gen_range(0.0..std::f64::consts::TAU);
            let el = rng.gen_range(5f64..80.0).to_radians();
            let r = rng.gen_range(3.0..5.0);
            look_at(
                Vector3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin()),
                Vector3::zeros(),
            )
        })
        .collect()
}

/// [`random_rig`] driven by a seeded ChaCha8 generator.
pub fn seeded_random_rig(seed: u64, n: usize) -> Vec<CameraPose> {
    random_rig(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), n)
}

fn mix(mut v: u64) -> u64 {
    v = v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    v = (v ^ (v >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    v = (v ^ (v >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    v ^ (v >> 31)
}

fn cell_value(i: i64, j: i64, c: usize) -> f64 {
    let h = mix((i as u64).wrapping_mul(0x1000_0000_01b3) ^ (j as u64).rotate_left(21) ^ c as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Renders an RGBA view of a textured disc.
///
/// The disc is opaque, the surround fully transparent. The texture is a
/// panorama of coloured blocks scrolled by the camera azimuth and
/// elevation, so nearby cameras see overlapping content.
pub fn render_view(pose: &CameraPose, width: usize, height: usize) -> RasterImage {
    let c = pose.center;
    let azimuth = c.y.atan2(c.x).rem_euclid(std::f64::consts::TAU);
    let elevation = c.z.atan2((c.x * c.x + c.y * c.y).sqrt());
    let cell = (width.min(height) as f64 / 16.0).max(2.0);
    let period = 4.0 * width as f64;
    let shift_x = azimuth / std::f64::consts::TAU * period;
    let shift_y = elevation / std::f64::consts::PI * 2.0 * height as f64;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let radius = 0.45 * width.min(height) as f64;
    RasterImage::from_fn(width, height, 4, |x, y, ch| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let inside = (px - cx).hypot(py - cy) <= radius;
        if ch == 3 {
            return if inside { 1.0 } else { 0.0 };
        }
        if !inside {
            return 0.0;
        }
        let u = (px + shift_x).rem_euclid(period);
        let v = py + shift_y;
        let i = (u / cell).floor() as i64;
        let j = (v / cell).floor() as i64;
        let shade = 0.5 + 0.5 * (u / period * std::f64::consts::TAU).sin();
        0.15 + 0.7 * cell_value(i, j, ch) * (0.6 + 0.4 * shade)
    })
    .expect("values are in range")
}

/// Writes rendered views and a `transforms.json` under `dir`.
///
/// Images go to `dir/train/r_{i}.png`; manifest paths omit the extension
/// as the NeRF-synthetic scenes do. Returns the manifest path.
pub fn write_dataset(dir: &Path, poses: &[CameraPose], width: usize, height: usize) -> Result<PathBuf> {
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let img = render_view(pose, width, height);
        raster::write_png(&img, &dir.join("train").join(format!("r_{i}.png")))?;
        frames.push(ManifestFrame {
            file_path: format!("./train/r_{i}"),
            transform_matrix: matrix_to_value(&pose.transform),
            extra: Default::default(),
        });
    }
    let manifest = PoseManifest {
        camera_angle_x: Some(0.691_111_207_0),
        scale_factor: None,
        frames,
        extra: Default::default(),
    };
    let path = dir.join("transforms.json");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::pose_angle_to_origin;

    #[test]
    fn look_at_points_z_away_from_target() {
        let p = look_at(Vector3::new(3.0, 0.0, 0.0), Vector3::zeros());
        assert!((p.view_axis - Vector3::x()).norm() < 1e-12);
        let top = look_at(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros());
        assert!((top.view_axis - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn ring_angles() {
        let poses = ring_rig(&[0.0, 20.0, 170.0], 4.0, 0.0);
        let a = pose_angle_to_origin(&poses[0], &poses[1], &Vector3::zeros());
        assert!((a.value - 20f64.to_radians()).abs() < 1e-12);
        let b = pose_angle_to_origin(&poses[1], &poses[2], &Vector3::zeros());
        assert!((b.value - 150f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn render_is_deterministic_and_view_dependent() {
        let poses = uniform_ring(8, 4.0);
        let a = render_view(&poses[0], 64, 64);
        assert_eq!(a, render_view(&poses[0], 64, 64));
        assert_ne!(a, render_view(&poses[1], 64, 64));
        assert_eq!(a.get(0, 0, 3), 0.0);
        assert_eq!(a.get(32, 32, 3), 1.0);
    }
}
