//! Pinhole camera model, SE(3) poses, and the depth reprojection core.
//!
//! Coordinate conventions used throughout the crate:
//!
//! - Camera frame: x right, y down, z forward (optical axis). Depth is the z
//!   coordinate in the camera frame (distance along the optical axis), not ray
//!   length.
//! - Pixel coordinates are continuous, with pixel `(col, row)` centered at
//!   `(u, v) = (col, row)`.
//! - [`RigidPose`] is camera-to-world: `x_world = R * x_cam + t`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Points nearer than this (in meters, camera frame) are culled at projection.
pub const DEFAULT_Z_NEAR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: intrinsics expect {expected_width}x{expected_height} but {what} is {got_width}x{got_height}")]
    DimensionMismatch {
        what: &'static str,
        expected_width: u32,
        expected_height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("matrix is not a rotation (orthonormality drift {drift:.3e})")]
    NotARotation { drift: f64 },
}

/// Pinhole camera parameters plus image dimensions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Unnormalized ray through pixel `(u, v)`: `K^-1 (u, v, 1)^T`. Its z
    /// component is 1, so scaling by a depth lands on the metric point.
    #[inline]
    pub fn pixel_to_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point with positive depth to continuous pixel
    /// coordinates. Returns `None` for points at or behind the image plane.
    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    fn check_dims(
        &self,
        what: &'static str,
        width: u32,
        height: u32,
    ) -> Result<(), GeometryError> {
        if width != self.width || height != self.height {
            return Err(GeometryError::DimensionMismatch {
                what,
                expected_width: self.width,
                expected_height: self.height,
                got_width: width,
                got_height: height,
            });
        }
        Ok(())
    }
}

/// SE(3) camera/world transform stored as rotation + translation.
/// Serializes for config records; deserialization goes through the validated
/// constructors instead.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Max allowed `|R^T R - I|` entry for a matrix to count as a rotation.
const ROTATION_TOL: f64 = 1e-9;
/// Above this drift the matrix is rejected outright instead of repaired.
const ROTATION_REPAIR_LIMIT: f64 = 1e-2;

fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, requiring `R` to be orthonormal with determinant +1
    /// within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let drift = orthonormality_drift(&rotation);
        let det_drift = (rotation.determinant() - 1.0).abs();
        if drift > ROTATION_TOL || det_drift > ROTATION_TOL {
            return Err(GeometryError::NotARotation {
                drift: drift.max(det_drift),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose from possibly noisy data (e.g. logged odometry),
    /// re-orthonormalizing the rotation when drift exceeds the strict
    /// tolerance. Badly corrupt matrices are rejected.
    pub fn from_noisy(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let drift = orthonormality_drift(&rotation);
        if drift <= ROTATION_TOL && (rotation.determinant() - 1.0).abs() <= ROTATION_TOL {
            return Ok(Self {
                rotation,
                translation,
            });
        }
        if drift > ROTATION_REPAIR_LIMIT {
            return Err(GeometryError::NotARotation { drift });
        }
        let repaired = nalgebra::Rotation3::from_matrix(&rotation);
        let repaired = repaired.matrix().to_owned();
        if (repaired.determinant() - 1.0).abs() > 1e-6 {
            return Err(GeometryError::NotARotation { drift });
        }
        Ok(Self {
            rotation: repaired,
            translation,
        })
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(*axis),
            angle,
        );
        Self {
            rotation: rotation.matrix().to_owned(),
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Group composition: `(a.compose(b)).transform(p) == a.transform(b.transform(p))`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Row-major `[R | t]` flattening, the on-disk pose log layout.
    pub fn to_rows(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    /// Inverse of [`RigidPose::to_rows`], tolerant of odometry noise.
    pub fn from_rows(rows: &[f64; 12]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(
            rows[0], rows[1], rows[2], rows[4], rows[5], rows[6], rows[8], rows[9], rows[10],
        );
        let translation = Vector3::new(rows[3], rows[7], rows[11]);
        Self::from_noisy(rotation, translation)
    }
}

/// Per-pixel metric depth with an implicit validity mask: a pixel is valid
/// iff its value is finite and positive. Invalid pixels carry `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

/// Sentinel stored at invalid depth pixels.
pub const INVALID_DEPTH: f64 = f64::INFINITY;

impl DepthMap {
    pub fn new_invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![INVALID_DEPTH; width as usize * height as usize],
        }
    }

    /// Builds from raw values; non-finite or non-positive entries become the
    /// invalid sentinel.
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width as usize * height as usize);
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() && v > 0.0 { v } else { INVALID_DEPTH })
            .collect();
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f64 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, value: f64) {
        let v = if value.is_finite() && value > 0.0 {
            value
        } else {
            INVALID_DEPTH
        };
        self.values[row as usize * self.width as usize + col as usize] = v;
    }

    #[inline]
    pub fn set_invalid(&mut self, col: u32, row: u32) {
        self.values[row as usize * self.width as usize + col as usize] = INVALID_DEPTH;
    }

    #[inline]
    pub fn is_valid(&self, col: u32, row: u32) -> bool {
        let v = self.get(col, row);
        v.is_finite() && v > 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Raw mutable access; callers must keep the invalid-depth sentinel
    /// convention (non-finite or non-positive values are invalid).
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite() && **v > 0.0).count()
    }

    /// Marks every valid pixel outside `[min, max]` invalid. Out-of-range
    /// values are discarded, never clamped.
    pub fn apply_range(&mut self, min: f64, max: f64) {
        for v in &mut self.values {
            if v.is_finite() && (*v < min || *v > max) {
                *v = INVALID_DEPTH;
            }
        }
    }
}

/// Interleaved RGB raster with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize * 3],
        }
    }

    pub fn filled(width: u32, height: u32, color: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for row in 0..height {
            for col in 0..width {
                img.set(col, row, f(col, row));
            }
        }
        img
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> [f32; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, rgb: [f32; 3]) {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Per-pixel boolean raster (hole masks, validity masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Logical complement (e.g. turning a validity mask into a hole mask).
    pub fn inverted(&self) -> PixelMask {
        PixelMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }
}

/// Colored 3D points lifted from a depth image, in some camera frame.
/// `source_pixel[i]` is the linear index `row * width + col` of the pixel
/// point `i` came from.
#[derive(Debug, Clone)]
pub struct ColoredPointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f32; 3]>,
    pub source_pixel: Vec<u32>,
}

impl ColoredPointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Lifts every valid depth pixel to a 3D point in the camera frame:
/// `K^-1 (u, v, 1)^T * d`. Invalid pixels produce no point.
pub fn backproject(
    intr: &CameraIntrinsics,
    depth: &DepthMap,
    image: &ImageBuffer,
) -> Result<ColoredPointCloud, GeometryError> {
    intr.check_dims("depth map", depth.width(), depth.height())?;
    intr.check_dims("image", image.width(), image.height())?;

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut source_pixel = Vec::new();
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            let d = depth.get(col, row);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let ray = intr.pixel_to_ray(col as f64, row as f64);
            positions.push(ray * d);
            colors.push(image.get(col, row));
            source_pixel.push(row * depth.width() + col);
        }
    }
    Ok(ColoredPointCloud {
        positions,
        colors,
        source_pixel,
    })
}

/// A cloud point seen from the destination view.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedPoint {
    /// Continuous (sub-pixel) coordinates in the destination image.
    pub u: f64,
    pub v: f64,
    /// Depth in the destination camera frame, meters.
    pub depth: f64,
    pub color: [f32; 3],
    pub source_pixel: u32,
}

/// Transforms cloud points (expressed in `src_pose`'s camera frame) into
/// `dst_pose`'s camera frame and projects them to continuous pixel
/// coordinates. Points with destination depth <= `z_near` are dropped.
/// Rounding to the pixel grid is the renderer's job.
pub fn project(
    intr: &CameraIntrinsics,
    cloud: &ColoredPointCloud,
    src_pose: &RigidPose,
    dst_pose: &RigidPose,
    z_near: f64,
) -> Vec<ProjectedPoint> {
    // Fold src -> world -> dst into one rigid transform.
    let rel = dst_pose.inverse().compose(src_pose);
    let mut out = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let p = rel.transform_point(&cloud.positions[i]);
        if p.z <= z_near {
            continue;
        }
        out.push(ProjectedPoint {
            u: intr.fx * p.x / p.z + intr.cx,
            v: intr.fy * p.y / p.z + intr.cy,
            depth: p.z,
            color: cloud.colors[i],
            source_pixel: cloud.source_pixel[i],
        });
    }
    out
}
