//! Posed multi-view datasets in the NeRF-synthetic `transforms.json` layout.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::raster::{self, RasterImage};

/// Tolerance on the homogeneous bottom row of a pose matrix.
const BOTTOM_ROW_TOL: f64 = 1e-6;
/// Tolerance on `R^T R = I` before a warning is logged.
const ORTHONORMAL_TOL: f64 = 1e-6;

/// Stable dataset index of a frame, assigned in manifest order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(pub usize);

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Camera-to-world transform with the derived centre and viewing axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub transform: [[f64; 4]; 4],
    pub center: Vector3<f64>,
    /// Normalised z column of the rotation block.
    pub view_axis: Vector3<f64>,
}

impl CameraPose {
    /// Pose from a camera centre and a rotation (columns are camera axes in world frame).
    pub fn from_rotation_translation(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let mut t = [[0.0; 4]; 4];
        for r in 0..3 {
            for c in 0..3 {
                t[r][c] = rotation[(r, c)];
            }
            t[r][3] = center[r];
        }
        t[3][3] = 1.0;
        derive_geometry(&t)
    }
}

/// Extracts the camera centre and viewing axis from a camera-to-world matrix.
pub fn derive_geometry(m: &[[f64; 4]; 4]) -> Result<CameraPose> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPose("non-finite entry".into()));
    }
    let bottom = [0.0, 0.0, 0.0, 1.0];
    if m[3]
        .iter()
        .zip(bottom)
        .any(|(v, e)| (v - e).abs() > BOTTOM_ROW_TOL)
    {
        return Err(Error::InvalidPose(format!(
            "bottom row {:?} is not (0, 0, 0, 1)",
            m[3]
        )));
    }
    let z = Vector3::new(m[0][2], m[1][2], m[2][2]);
    let norm = z.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateRotation);
    }
    let rot = Matrix3::from_fn(|r, c| m[r][c]);
    let gram = rot.transpose() * rot;
    let drift = (gram - Matrix3::identity()).abs().max();
    if drift > ORTHONORMAL_TOL {
        log::warn!("rotation block is not orthonormal (max |R^T R - I| = {drift:.3e})");
    }
    Ok(CameraPose {
        transform: *m,
        center: Vector3::new(m[0][3], m[1][3], m[2][3]),
        view_axis: z / norm,
    })
}

/// One posed image.
#[derive(Clone, Debug)]
pub struct FrameRecord {
    pub frame_id: FrameId,
    pub source_path: PathBuf,
    pub pose: CameraPose,
    /// Decoded pixels, if already in memory. Otherwise read from `source_path`.
    pub image: Option<RasterImage>,
}

impl FrameRecord {
    /// Returns the in-memory image or decodes it from disk.
    pub fn image(&self) -> Result<Cow<'_, RasterImage>> {
        match &self.image {
            Some(img) => Ok(Cow::Borrowed(img)),
            None => raster::read_png(&self.source_path).map(Cow::Owned),
        }
    }
}

/// A frame entry as it appears in `transforms.json`. Unknown keys are kept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub file_path: String,
    pub transform_matrix: Value,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

/// The whole `transforms.json` document. Unknown keys are kept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoseManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_angle_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<usize>,
    pub frames: Vec<ManifestFrame>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl PoseManifest {
    pub fn read(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }
}

fn parse_matrix(value: &Value) -> std::result::Result<[[f64; 4]; 4], String> {
    let rows = value.as_array().ok_or("transform_matrix is not an array")?;
    if rows.len() != 4 {
        return Err(format!("transform_matrix has {} rows, expected 4", rows.len()));
    }
    let mut m = [[0.0; 4]; 4];
    for (r, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .ok_or_else(|| format!("row {r} is not an array"))?;
        if cols.len() != 4 {
            return Err(format!("row {r} has {} entries, expected 4", cols.len()));
        }
        for (c, v) in cols.iter().enumerate() {
            m[r][c] = v
                .as_f64()
                .ok_or_else(|| format!("entry ({r}, {c}) is not a number"))?;
        }
    }
    Ok(m)
}

pub(crate) fn matrix_to_value(m: &[[f64; 4]; 4]) -> Value {
    Value::Array(
        m.iter()
            .map(|row| Value::Array(row.iter().map(|&v| Value::from(v)).collect()))
            .collect(),
    )
}

/// Resolves a manifest `file_path`; NeRF-synthetic paths usually omit `.png`.
fn resolve_image(root: &Path, file_path: &str) -> Option<PathBuf> {
    let direct = root.join(file_path);
    if direct.is_file() {
        return Some(direct);
    }
    if direct.extension().is_none() {
        let with_png = direct.with_extension("png");
        if with_png.is_file() {
            return Some(with_png);
        }
    }
    None
}

/// Every view of one scene.
#[derive(Clone, Debug)]
pub struct MultiViewSet {
    pub scene_name: String,
    pub scale_factor: usize,
    pub frames: Vec<FrameRecord>,
    /// The manifest the set was read from, kept so it can be mirrored on output.
    pub manifest: Option<PoseManifest>,
}

impl MultiViewSet {
    /// Builds an in-memory set; frame ids follow the order of `frames`.
    pub fn from_frames(
        scene_name: impl Into<String>,
        scale_factor: usize,
        poses_and_images: Vec<(CameraPose, Option<RasterImage>)>,
    ) -> Result<Self> {
        if poses_and_images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let frames = poses_and_images
            .into_iter()
            .enumerate()
            .map(|(i, (pose, image))| FrameRecord {
                frame_id: FrameId(i),
                source_path: PathBuf::new(),
                pose,
                image,
            })
            .collect();
        let set = MultiViewSet {
            scene_name: scene_name.into(),
            scale_factor: scale_factor.max(1),
            frames,
            manifest: None,
        };
        set.check_uniform_size()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, id: FrameId) -> &FrameRecord {
        &self.frames[id.0]
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        self.frames.iter().map(|f| f.pose.clone()).collect()
    }

    fn check_uniform_size(&self) -> Result<()> {
        let mut dims = self
            .frames
            .iter()
            .filter_map(|f| f.image.as_ref().map(|i| (f.frame_id, i.dimensions())));
        if let Some((_, first)) = dims.next() {
            if let Some((id, d)) = dims.find(|(_, d)| *d != first) {
                return Err(Error::DimensionMismatch(format!(
                    "frame {id} is {}x{}, expected {}x{}",
                    d.0, d.1, first.0, first.1
                )));
            }
        }
        Ok(())
    }
}

/// Reads a `transforms.json` manifest. Images are not decoded.
pub fn load_pose_manifest(path: &Path) -> Result<MultiViewSet> {
    let manifest = PoseManifest::read(path)?;
    if manifest.frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen: HashMap<PathBuf, usize> = HashMap::new();
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (index, entry) in manifest.frames.iter().enumerate() {
        let fail = |reason: String| Error::ManifestEntry {
            index,
            file: entry.file_path.clone(),
            reason,
        };
        let transform = parse_matrix(&entry.transform_matrix).map_err(fail)?;
        let pose = derive_geometry(&transform).map_err(|e| fail(e.to_string()))?;
        let source_path = resolve_image(root, &entry.file_path)
            .ok_or_else(|| fail("image file not found".into()))?;
        let key = source_path.canonicalize().unwrap_or_else(|_| source_path.clone());
        if let Some(first) = seen.insert(key, index) {
            return Err(fail(format!("duplicate of frame {first}")));
        }
        frames.push(FrameRecord {
            frame_id: FrameId(index),
            source_path,
            pose,
            image: None,
        });
    }
    let scene_name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    Ok(MultiViewSet {
        scene_name,
        scale_factor: manifest.scale_factor.unwrap_or(1).max(1),
        frames,
        manifest: Some(manifest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const IDENTITY: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];

    #[test]
    fn identity_geometry() {
        let p = derive_geometry(&IDENTITY).unwrap();
        assert_eq!(p.center, Vector3::zeros());
        assert_eq!(p.view_axis, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn translation_only() {
        let mut m = IDENTITY;
        m[0][3] = 2.0;
        let p = derive_geometry(&m).unwrap();
        assert_eq!(p.center, Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn rotation_about_y() {
        // R_y(90deg) = [[c, 0, s], [0, 1, 0], [-s, 0, c]] with c = 0, s = 1
        let m = [
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let p = derive_geometry(&m).unwrap();
        assert_abs_diff_eq!(p.view_axis, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(p.center, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn bad_bottom_row() {
        let mut m = IDENTITY;
        m[3][3] = 2.0;
        assert!(matches!(derive_geometry(&m), Err(Error::InvalidPose(_))));
    }

    #[test]
    fn zero_z_column() {
        let mut m = IDENTITY;
        m[2][2] = 0.0;
        assert!(matches!(derive_geometry(&m), Err(Error::DegenerateRotation)));
    }

    #[test]
    fn view_axis_ignores_uniform_scale() {
        let c = 0.3f64.cos();
        let s = 0.3f64.sin();
        let base = [
            [c, 0.0, s, 0.5],
            [0.0, 1.0, 0.0, -1.0],
            [-s, 0.0, c, 2.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let a = derive_geometry(&base).unwrap();
        let mut scaled = base;
        for row in scaled.iter_mut().take(3) {
            for v in row.iter_mut().take(3) {
                *v *= 3.5;
            }
        }
        let b = derive_geometry(&scaled).unwrap();
        assert_abs_diff_eq!(a.view_axis, b.view_axis, epsilon = 1e-12);
        assert_abs_diff_eq!(b.view_axis.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn matrix_shape_errors() {
        assert!(parse_matrix(&serde_json::json!([[1, 0, 0], [0, 1, 0], [0, 0, 1]])).is_err());
        assert!(parse_matrix(&serde_json::json!("eye")).is_err());
        let mut bad = serde_json::to_value(IDENTITY).unwrap();
        bad[1][2] = Value::String("x".into());
        assert!(parse_matrix(&bad).is_err());
    }
}
