//! Frame delay compensation for teleoperated mobile robots.
//!
//! A delayed, decimated video feed is compensated by lifting the most recent
//! frame to a colored 3D point cloud (via its depth map), predicting where the
//! robot camera will be at display time from buffered velocity commands, and
//! re-rendering the cloud from the predicted viewpoint with a sphere-splatting
//! rasterizer. Disocclusion holes are filled by a deterministic inpainting
//! pass. Classical baselines (plane-induced homography warp, crop-and-scale)
//! and an evaluation/emulation harness round out the pipeline.
//!
//! Modules map one-to-one onto the pipeline stages:
//!
//! - [`geometry`]: pinhole camera, SE(3) poses, back-projection and projection
//! - [`splat`]: screen-space sphere rasterizer with softmax depth blending
//! - [`kinematics`]: unicycle/Dubins future pose prediction
//! - [`depth`]: depth providers (dataset files, analytic plane, synthetic ray cast)
//! - [`baselines`]: homography warp and crop-and-scale compensators
//! - [`inpaint`]: deterministic hole filling (pull-push, diffusion)
//! - [`metrics`]: PSNR, MS-SSIM, AbsRel, delta1, scale-invariant loss
//! - [`pipeline`]: network-link emulation, live compensator loop, offline evaluation
//! - [`io`]: sequence bundles on disk (manifest, PNG, PFM, pose/command logs)

pub mod baselines;
pub mod depth;
pub mod geometry;
pub mod inpaint;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod pipeline;
pub mod splat;

pub use geometry::{
    backproject, project, CameraIntrinsics, ColoredPointCloud, DepthMap, GeometryError,
    ImageBuffer, PixelMask, ProjectedPoint, RigidPose, DEFAULT_Z_NEAR,
};
pub use splat::{rasterize, render_compensated, sphere_radius, RenderOutput, SplatConfig};
