//! Non-learned comparison compensators: planar homography warp and
//! crop-and-scale.
//!
//! The homography baseline models the whole scene as one plane: exact where
//! the world really is that plane, increasingly wrong elsewhere. The
//! crop-and-scale baseline is cruder still — a zoom for forward motion and a
//! horizontal shift for heading change, with free calibration constants.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, ImageBuffer, PixelMask, RigidPose};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("homography is numerically singular (|det| = {det:.3e})")]
    SingularHomography { det: f64 },
    #[error("plane distance must be positive, got {d}")]
    InvalidPlane { d: f64 },
}

/// A 3x3 projective map on pixel coordinates, scale-normalized so the
/// bottom-right entry is 1 whenever it is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyMatrix(Matrix3<f64>);

impl HomographyMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self, BaselineError> {
        let det = m.determinant();
        if det.abs() <= 1e-12 {
            return Err(BaselineError::SingularHomography { det });
        }
        let h33 = m[(2, 2)];
        if h33 != 0.0 {
            Ok(Self(m / h33))
        } else {
            Ok(Self(m))
        }
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> HomographyMatrix {
        // Invertibility was checked at construction.
        HomographyMatrix::new(self.0.try_inverse().expect("validated invertible"))
            .expect("inverse of invertible matrix")
    }

    /// Applies the map to a pixel; `None` if the point lands on the plane at
    /// infinity.
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let p = self.0 * Vector3::new(u, v, 1.0);
        if p.z.abs() < 1e-12 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }
}

/// Plane-induced homography mapping source pixels of points on the plane
/// `{ n · X = d }` (given in the *source camera frame*, d > 0) to their exact
/// destination pixels: with the relative transform `X_dst = R X_src + t`,
/// `H = K (R + t nᵀ / d) K⁻¹`.
///
/// Fails if the destination camera lies on the plane (the induced map
/// degenerates).
pub fn plane_homography(
    intr: &CameraIntrinsics,
    src_pose: &RigidPose,
    dst_pose: &RigidPose,
    n: &Vector3<f64>,
    d: f64,
) -> Result<HomographyMatrix, BaselineError> {
    if d <= 0.0 {
        return Err(BaselineError::InvalidPlane { d });
    }
    let rel = dst_pose.inverse().compose(src_pose);
    let k = Matrix3::new(
        intr.fx, 0.0, intr.cx, //
        0.0, intr.fy, intr.cy, //
        0.0, 0.0, 1.0,
    );
    let k_inv = Matrix3::new(
        1.0 / intr.fx,
        0.0,
        -intr.cx / intr.fx,
        0.0,
        1.0 / intr.fy,
        -intr.cy / intr.fy,
        0.0,
        0.0,
        1.0,
    );
    let core = rel.rotation() + rel.translation() * n.transpose() / d;
    HomographyMatrix::new(k * core * k_inv)
}

/// Warped image plus where the inverse map sampled inside the source frame.
#[derive(Debug, Clone)]
pub struct WarpOutput {
    pub image: ImageBuffer,
    /// True where the output pixel was produced from in-bounds source data.
    pub valid: PixelMask,
}

/// Inverse-warps `image` through `h` (which maps source pixels to output
/// pixels) with bilinear sampling. Output pixels whose source location falls
/// outside the image are black and marked invalid.
pub fn warp(image: &ImageBuffer, h: &HomographyMatrix) -> WarpOutput {
    let (w, hgt) = (image.width(), image.height());
    let h_inv = h.inverse();
    let mut out = ImageBuffer::new(w, hgt);
    let mut valid = PixelMask::filled(w, hgt, false);
    let max_u = (w - 1) as f64;
    let max_v = (hgt - 1) as f64;
    for row in 0..hgt {
        for col in 0..w {
            let Some((us, vs)) = h_inv.apply(col as f64, row as f64) else {
                continue;
            };
            if !(0.0..=max_u).contains(&us) || !(0.0..=max_v).contains(&vs) {
                continue;
            }
            out.set(col, row, bilinear_sample(image, us, vs));
            valid.set(col, row, true);
        }
    }
    WarpOutput { image: out, valid }
}

fn bilinear_sample(image: &ImageBuffer, u: f64, v: f64) -> [f32; 3] {
    let c0 = u.floor() as u32;
    let r0 = v.floor() as u32;
    let c1 = (c0 + 1).min(image.width() - 1);
    let r1 = (r0 + 1).min(image.height() - 1);
    let fu = u - c0 as f64;
    let fv = v - r0 as f64;
    let p00 = image.get(c0, r0);
    let p10 = image.get(c1, r0);
    let p01 = image.get(c0, r1);
    let p11 = image.get(c1, r1);
    let mut out = [0.0f32; 3];
    for ch in 0..3 {
        out[ch] = (p00[ch] as f64 * (1.0 - fu) * (1.0 - fv)
            + p10[ch] as f64 * fu * (1.0 - fv)
            + p01[ch] as f64 * (1.0 - fu) * fv
            + p11[ch] as f64 * fu * fv) as f32;
    }
    out
}

/// Crop-and-scale calibration: how fast the window shrinks per meter of
/// forward motion and slides per radian of heading change.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropScaleParams {
    pub zoom_per_meter: f64,
    pub shift_per_radian: f64,
}

impl CropScaleParams {
    /// Small-motion calibration against a fronto-parallel scene at
    /// `nominal_depth`: zooming counteracts forward motion
    /// (`1/nominal_depth`), and a left turn slides the window left by the
    /// focal length per radian.
    pub fn calibrated(intr: &CameraIntrinsics, nominal_depth: f64) -> Self {
        assert!(nominal_depth > 0.0);
        Self {
            zoom_per_meter: 1.0 / nominal_depth,
            shift_per_radian: -intr.fx,
        }
    }
}

/// The window never shrinks below this fraction of the frame.
pub const CROP_MIN_SCALE: f64 = 0.2;

/// Predicts a future view by upsampling a window of the current image: the
/// window shrinks with forward displacement and slides horizontally with
/// heading change, clamped to stay inside the frame.
pub fn crop_and_scale(
    image: &ImageBuffer,
    planar_displacement: (f64, f64),
    params: &CropScaleParams,
) -> ImageBuffer {
    let (forward, heading) = planar_displacement;
    assert!(forward.is_finite() && heading.is_finite());
    assert!(params.zoom_per_meter >= 0.0);
    let (w, h) = (image.width(), image.height());
    let scale = (1.0 - params.zoom_per_meter * forward).max(CROP_MIN_SCALE);
    let full_cx = (w - 1) as f64 / 2.0;
    let full_cy = (h - 1) as f64 / 2.0;
    // Clamp the window center so every sample stays in-frame.
    let half_w = (w - 1) as f64 / 2.0 * scale;
    let half_h = (h - 1) as f64 / 2.0 * scale;
    let cx = (full_cx + params.shift_per_radian * heading)
        .clamp(half_w, (w - 1) as f64 - half_w);
    let cy = full_cy.clamp(half_h, (h - 1) as f64 - half_h);

    let mut out = ImageBuffer::new(w, h);
    for row in 0..h {
        let vs = cy + (row as f64 - full_cy) * scale;
        for col in 0..w {
            let us = cx + (col as f64 - full_cx) * scale;
            out.set(col, row, bilinear_sample(image, us, vs));
        }
    }
    out
}
