//! Point-cloud rasterizer: screen-space disks with softmax depth blending.
//!
//! Each cloud point becomes a sphere whose world radius grows linearly with
//! distance, so its projected footprint is a constant pixel radius. Per
//! pixel, overlapping splats are blended with weights
//! `w_i = exp(-(z_i - z_near) / (gamma * (z_far - z_near)))`: small `gamma`
//! approaches a hard nearest-surface test, large `gamma` approaches a plain
//! average. Pixels no splat touches are holes and get a sentinel color.
//!
//! Rasterization is tiled: splats are binned to the 64x64-pixel tiles their
//! footprint overlaps, tiles are processed independently (possibly in
//! parallel), and each pixel accumulates its contributors in ascending point
//! index. The result is bit-identical for any worker count.

use rayon::prelude::*;

use crate::geometry::{
    backproject, project, CameraIntrinsics, ColoredPointCloud, DepthMap, GeometryError,
    ImageBuffer, PixelMask, RigidPose,
};

const TILE_SIZE: u32 = 64;

/// Splatting and blending parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplatConfig {
    /// Dimensionless radius constant; projected splat radius in pixels is
    /// `radius_constant * width / 2`.
    pub radius_constant: f64,
    /// Softmax blending temperature.
    pub gamma: f64,
    /// Color written to pixels no splat covers.
    pub hole_color: [f32; 3],
    /// Near cull plane, meters.
    pub z_near: f64,
    /// Far cull plane, meters.
    pub z_far: f64,
    /// Splats emitted per source pixel. Fixed at 1; kept for densification
    /// experiments.
    pub spheres_per_pixel: u32,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            radius_constant: 3e-3,
            gamma: 0.1,
            hole_color: [0.0, 1.0, 0.0],
            z_near: 0.05,
            z_far: 20.0,
            spheres_per_pixel: 1,
        }
    }
}

impl SplatConfig {
    /// Checks parameter ranges. Rendering entry points panic on a bad
    /// config (programming error); configuration loaders surface the
    /// message as a startup error instead.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius_constant > 0.0) {
            return Err(format!(
                "radius_constant must be > 0, got {}",
                self.radius_constant
            ));
        }
        if !(self.gamma > 0.0) {
            return Err(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(0.0 < self.z_near && self.z_near < self.z_far) {
            return Err(format!(
                "need 0 < z_near < z_far, got {} / {}",
                self.z_near, self.z_far
            ));
        }
        Ok(())
    }
}

/// Rasterizer output: the rendered image, where it had no data, and the
/// blended depth (invalid at holes).
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    pub hole_mask: PixelMask,
    pub blended_depth: DepthMap,
}

impl RenderOutput {
    /// Fraction of pixels with no contributing splat.
    pub fn hole_fraction(&self) -> f64 {
        let total = self.hole_mask.width() as f64 * self.hole_mask.height() as f64;
        self.hole_mask.count_true() as f64 / total
    }
}

/// World-space sphere radius for a point at `distance` meters: scaled so the
/// projected footprint (`fx * r / distance`) is the same at every distance.
pub fn sphere_radius(distance: f64, intr: &CameraIntrinsics, cfg: &SplatConfig) -> f64 {
    debug_assert!(distance > 0.0);
    cfg.radius_constant * distance * intr.width as f64 / (2.0 * intr.fx)
}

/// A projected point with its precomputed blend weight and pixel footprint.
/// The weight depends only on the splat (not the pixel), so it is computed
/// once here; this is also what makes tiled accumulation order-independent
/// of tiling.
#[derive(Debug, Clone, Copy)]
struct Splat {
    u: f64,
    v: f64,
    z: f64,
    radius_px: f64,
    weight: f64,
    color: [f32; 3],
}

fn prepare_splats(
    cloud: &ColoredPointCloud,
    src_pose: &RigidPose,
    dst_pose: &RigidPose,
    intr: &CameraIntrinsics,
    cfg: &SplatConfig,
) -> Vec<Splat> {
    let temperature = cfg.gamma * (cfg.z_far - cfg.z_near);
    project(intr, cloud, src_pose, dst_pose, cfg.z_near)
        .into_iter()
        .filter(|p| p.depth <= cfg.z_far)
        .map(|p| {
            let r_world = sphere_radius(p.depth, intr, cfg);
            Splat {
                u: p.u,
                v: p.v,
                z: p.depth,
                radius_px: intr.fx * r_world / p.depth,
                weight: (-(p.depth - cfg.z_near) / temperature).exp(),
                color: p.color,
            }
        })
        .collect()
}

/// Inclusive pixel-coordinate bounding box of a splat, clipped to the
/// viewport; `None` when fully outside.
fn splat_bbox(s: &Splat, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let c0 = (s.u - s.radius_px).ceil();
    let c1 = (s.u + s.radius_px).floor();
    let r0 = (s.v - s.radius_px).ceil();
    let r1 = (s.v + s.radius_px).floor();
    if c1 < 0.0 || r1 < 0.0 || c0 > (width - 1) as f64 || r0 > (height - 1) as f64 || c0 > c1 || r0 > r1 {
        return None;
    }
    Some((
        c0.max(0.0) as u32,
        r0.max(0.0) as u32,
        c1.min((width - 1) as f64) as u32,
        r1.min((height - 1) as f64) as u32,
    ))
}

struct TileResult {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    rgb: Vec<f32>,
    holes: Vec<bool>,
    depth: Vec<f64>,
}

/// Renders a colored point cloud (expressed in `src_pose`'s camera frame)
/// from `dst_pose`. Pure function of its inputs; internally parallel over
/// tiles with bit-deterministic output.
pub fn rasterize(
    cloud: &ColoredPointCloud,
    src_pose: &RigidPose,
    dst_pose: &RigidPose,
    intr: &CameraIntrinsics,
    cfg: &SplatConfig,
) -> RenderOutput {
    if let Err(message) = cfg.validate() {
        panic!("invalid splat config: {message}");
    }
    let splats = prepare_splats(cloud, src_pose, dst_pose, intr, cfg);
    let (width, height) = (intr.width, intr.height);
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);

    // Bin splats to every tile their footprint overlaps. Sequential, in
    // point order, so each bin is already sorted by point index.
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (i, s) in splats.iter().enumerate() {
        let Some((c0, r0, c1, r1)) = splat_bbox(s, width, height) else {
            continue;
        };
        for ty in r0 / TILE_SIZE..=r1 / TILE_SIZE {
            for tx in c0 / TILE_SIZE..=c1 / TILE_SIZE {
                bins[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }

    let tile_results: Vec<TileResult> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|tile| {
            let tx = tile % tiles_x;
            let ty = tile / tiles_x;
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let tw = TILE_SIZE.min(width - x0);
            let th = TILE_SIZE.min(height - y0);
            render_tile(&splats, &bins[tile as usize], x0, y0, tw, th, cfg)
        })
        .collect();

    let mut image = ImageBuffer::new(width, height);
    let mut hole_mask = PixelMask::filled(width, height, true);
    let mut blended_depth = DepthMap::new_invalid(width, height);
    for t in &tile_results {
        for row in 0..t.h {
            let src = (row * t.w) as usize;
            let dst = ((t.y0 + row) as usize) * width as usize + t.x0 as usize;
            image.data_mut()[dst * 3..(dst + t.w as usize) * 3]
                .copy_from_slice(&t.rgb[src * 3..(src + t.w as usize) * 3]);
            hole_mask.data_mut()[dst..dst + t.w as usize]
                .copy_from_slice(&t.holes[src..src + t.w as usize]);
            blended_depth.values_mut()[dst..dst + t.w as usize]
                .copy_from_slice(&t.depth[src..src + t.w as usize]);
        }
    }
    RenderOutput {
        image,
        hole_mask,
        blended_depth,
    }
}

fn render_tile(
    splats: &[Splat],
    bin: &[u32],
    x0: u32,
    y0: u32,
    tw: u32,
    th: u32,
    cfg: &SplatConfig,
) -> TileResult {
    let n = (tw * th) as usize;
    // f64 accumulators keep the blend exact enough that tiling order can't
    // show through in the f32 output.
    let mut sum_w = vec![0.0f64; n];
    let mut sum_wc = vec![0.0f64; n * 3];
    let mut sum_wz = vec![0.0f64; n];
    // Nearest contributor per pixel: defines coverage (hole test) and the
    // fallback color when every weight underflows to zero at tiny gamma —
    // which is exactly the gamma -> 0 limit.
    let mut near_z = vec![f64::INFINITY; n];
    let mut near_color = vec![[0.0f32; 3]; n];

    let (x1, y1) = (x0 + tw, y0 + th);
    for &i in bin {
        let s = &splats[i as usize];
        let c0 = ((s.u - s.radius_px).ceil().max(x0 as f64)) as u32;
        let c1 = ((s.u + s.radius_px).floor().min((x1 - 1) as f64)) as u32;
        let r0 = ((s.v - s.radius_px).ceil().max(y0 as f64)) as u32;
        let r1 = ((s.v + s.radius_px).floor().min((y1 - 1) as f64)) as u32;
        let r2 = s.radius_px * s.radius_px;
        let (wr, wg, wb) = (
            s.weight * s.color[0] as f64,
            s.weight * s.color[1] as f64,
            s.weight * s.color[2] as f64,
        );
        for row in r0..=r1 {
            let dy = row as f64 - s.v;
            let base = ((row - y0) * tw) as usize;
            for col in c0..=c1 {
                let dx = col as f64 - s.u;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let idx = base + (col - x0) as usize;
                sum_w[idx] += s.weight;
                sum_wc[idx * 3] += wr;
                sum_wc[idx * 3 + 1] += wg;
                sum_wc[idx * 3 + 2] += wb;
                sum_wz[idx] += s.weight * s.z;
                if s.z < near_z[idx] {
                    near_z[idx] = s.z;
                    near_color[idx] = s.color;
                }
            }
        }
    }

    let mut rgb = vec![0.0f32; n * 3];
    let mut holes = vec![false; n];
    let mut depth = vec![f64::INFINITY; n];
    for idx in 0..n {
        if near_z[idx].is_infinite() {
            holes[idx] = true;
            rgb[idx * 3..idx * 3 + 3].copy_from_slice(&cfg.hole_color);
        } else if sum_w[idx] > 0.0 {
            let inv = 1.0 / sum_w[idx];
            rgb[idx * 3] = (sum_wc[idx * 3] * inv) as f32;
            rgb[idx * 3 + 1] = (sum_wc[idx * 3 + 1] * inv) as f32;
            rgb[idx * 3 + 2] = (sum_wc[idx * 3 + 2] * inv) as f32;
            depth[idx] = sum_wz[idx] * inv;
        } else {
            rgb[idx * 3..idx * 3 + 3].copy_from_slice(&near_color[idx]);
            depth[idx] = near_z[idx];
        }
    }
    TileResult {
        x0,
        y0,
        w: tw,
        h: th,
        rgb,
        holes,
        depth,
    }
}

/// Convenience composition: lift an (image, depth) frame captured at
/// `src_pose` and render it from `dst_pose`.
pub fn render_compensated(
    image: &ImageBuffer,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    src_pose: &RigidPose,
    dst_pose: &RigidPose,
    cfg: &SplatConfig,
) -> Result<RenderOutput, GeometryError> {
    let cloud = backproject(intr, depth, image)?;
    Ok(rasterize(&cloud, src_pose, dst_pose, intr, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::{corridor_scene, preset_camera, raycast};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn intr_720p() -> CameraIntrinsics {
        CameraIntrinsics::new(640.0, 640.0, 640.0, 360.0, 1280, 720).unwrap()
    }

    fn cloud(points: Vec<(Vector3<f64>, [f32; 3])>) -> ColoredPointCloud {
        let (positions, colors): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let source_pixel = (0..positions.len() as u32).collect();
        ColoredPointCloud {
            positions,
            colors,
            source_pixel,
        }
    }

    #[test]
    fn radius_cancellation_and_linearity() {
        let intr = intr_720p();
        let cfg = SplatConfig::default();
        // At distance 2 fx / width the formula collapses to the constant.
        let d0 = 2.0 * intr.fx / intr.width as f64;
        assert_abs_diff_eq!(sphere_radius(d0, &intr, &cfg), cfg.radius_constant, epsilon = 1e-15);
        let r5 = sphere_radius(5.0, &intr, &cfg);
        assert_abs_diff_eq!(sphere_radius(10.0, &intr, &cfg), 2.0 * r5, epsilon = 1e-15);
        assert_abs_diff_eq!(r5, 0.015, epsilon = 1e-15);
    }

    #[test]
    fn projected_radius_constant_in_distance() {
        let intr = intr_720p();
        let cfg = SplatConfig::default();
        for d in [0.5, 2.0, 5.0, 15.0] {
            let px = intr.fx * sphere_radius(d, &intr, &cfg) / d;
            assert_abs_diff_eq!(px, 1.92, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_point_renders_centered_disk() {
        let intr = intr_720p();
        let cfg = SplatConfig::default();
        let c = cloud(vec![(Vector3::new(0.0, 0.0, 2.0), [0.9, 0.1, 0.2])]);
        let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
        let (cx, cy) = (intr.cx as u32, intr.cy as u32);
        assert!(!out.hole_mask.get(cx, cy));
        assert_eq!(out.image.get(cx, cy), [0.9, 0.1, 0.2]);
        assert_abs_diff_eq!(out.blended_depth.get(cx, cy), 2.0, epsilon = 1e-12);
        // Just outside the 1.92 px footprint: hole, sentinel color.
        assert!(out.hole_mask.get(cx + 2, cy));
        assert_eq!(out.image.get(cx + 2, cy), cfg.hole_color);
        assert!(!out.blended_depth.is_valid(cx + 2, cy));
        // Coverage and mask agree everywhere.
        let covered = (out.hole_mask.width() * out.hole_mask.height()) as usize
            - out.hole_mask.count_true();
        assert!(covered > 0 && covered < 30, "disk covers a few pixels, got {covered}");
    }

    #[test]
    fn tiny_gamma_picks_nearest_large_gamma_averages() {
        let intr = intr_720p();
        let near_color = [1.0, 0.0, 0.0];
        let far_color = [0.0, 0.0, 1.0];
        let c = cloud(vec![
            (Vector3::new(0.0, 0.0, 1.0), near_color),
            (Vector3::new(0.0, 0.0, 5.0), far_color),
        ]);
        let (cx, cy) = (intr.cx as u32, intr.cy as u32);

        let mut cfg = SplatConfig::default();
        cfg.gamma = 1e-6;
        let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
        let got = out.image.get(cx, cy);
        for ch in 0..3 {
            assert!((got[ch] - near_color[ch]).abs() <= 1e-6, "{got:?}");
        }

        cfg.gamma = 1e6;
        let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
        let got = out.image.get(cx, cy);
        for ch in 0..3 {
            let mean = 0.5 * (near_color[ch] + far_color[ch]);
            assert!((got[ch] - mean).abs() <= 1e-3, "{got:?}");
        }
    }

    #[test]
    fn identity_self_reprojection_is_exact() {
        let intr = preset_camera();
        let (image, depth) = raycast(&corridor_scene(), &intr, &RigidPose::identity());
        let out = render_compensated(
            &image,
            &depth,
            &intr,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &SplatConfig::default(),
        )
        .unwrap();
        assert_eq!(out.hole_mask.count_true(), 0);
        assert_eq!(out.image.data(), image.data());
    }

    #[test]
    fn forward_motion_matches_raycast_oracle() {
        let intr = preset_camera();
        let scene = corridor_scene();
        let src = RigidPose::identity();
        let dst = RigidPose::from_translation(0.0, 0.0, 0.3);
        let (image, depth) = raycast(&scene, &intr, &src);
        let (truth, _) = raycast(&scene, &intr, &dst);
        let out =
            render_compensated(&image, &depth, &intr, &src, &dst, &SplatConfig::default())
                .unwrap();
        let mut se = 0.0f64;
        let mut count = 0usize;
        for row in 0..intr.height {
            for col in 0..intr.width {
                if out.hole_mask.get(col, row) {
                    continue;
                }
                let a = out.image.get(col, row);
                let b = truth.get(col, row);
                for ch in 0..3 {
                    se += ((a[ch] - b[ch]) as f64).powi(2);
                }
                count += 3;
            }
        }
        let psnr = -10.0 * (se / count as f64).log10();
        assert!(psnr >= 30.0, "forward reprojection PSNR {psnr:.2} dB");
        assert!(out.hole_fraction() < 0.25, "hole fraction {}", out.hole_fraction());
    }

    #[test]
    fn distant_pose_is_mostly_holes() {
        let intr = preset_camera();
        let (image, depth) = raycast(&corridor_scene(), &intr, &RigidPose::identity());
        let dst = RigidPose::from_translation(10.0, 0.0, -10.0);
        let out = render_compensated(
            &image,
            &depth,
            &intr,
            &RigidPose::identity(),
            &dst,
            &SplatConfig::default(),
        )
        .unwrap();
        assert!(out.hole_fraction() > 0.5, "hole fraction {}", out.hole_fraction());
    }

    #[test]
    fn beyond_far_plane_is_culled() {
        let intr = intr_720p();
        let cfg = SplatConfig::default();
        let c = cloud(vec![(Vector3::new(0.0, 0.0, 25.0), [1.0, 1.0, 1.0])]);
        let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
        assert_eq!(out.hole_mask.count_true(), (intr.width * intr.height) as usize);
    }

    #[test]
    fn border_splat_clips_cleanly() {
        let intr = intr_720p();
        let cfg = SplatConfig::default();
        // Projects to u = -0.4: only in-bounds pixels receive color.
        let z = 2.0;
        let x = (-0.4 - intr.cx) * z / intr.fx;
        let c = cloud(vec![(Vector3::new(x, 0.0, z), [1.0, 0.0, 0.0])]);
        let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
        assert!(!out.hole_mask.get(0, intr.cy as u32));
        assert_eq!(out.image.get(0, intr.cy as u32), [1.0, 0.0, 0.0]);
    }

    // Reference implementation: per pixel, loop over every splat in point
    // order and accumulate with the same formula. The tiled rasterizer must
    // match it bit for bit.
    fn brute_force(
        c: &ColoredPointCloud,
        intr: &CameraIntrinsics,
        cfg: &SplatConfig,
    ) -> (Vec<f32>, Vec<bool>) {
        let splats = prepare_splats(c, &RigidPose::identity(), &RigidPose::identity(), intr, cfg);
        let n = (intr.width * intr.height) as usize;
        let mut rgb = vec![0.0f32; n * 3];
        let mut holes = vec![false; n];
        for row in 0..intr.height {
            for col in 0..intr.width {
                let idx = (row * intr.width + col) as usize;
                let mut sum_w = 0.0f64;
                let mut sum_wc = [0.0f64; 3];
                let mut near = f64::INFINITY;
                let mut near_c = [0.0f32; 3];
                for s in &splats {
                    let (dx, dy) = (col as f64 - s.u, row as f64 - s.v);
                    if dx * dx + dy * dy > s.radius_px * s.radius_px {
                        continue;
                    }
                    sum_w += s.weight;
                    for ch in 0..3 {
                        sum_wc[ch] += s.weight * s.color[ch] as f64;
                    }
                    if s.z < near {
                        near = s.z;
                        near_c = s.color;
                    }
                }
                if near.is_infinite() {
                    holes[idx] = true;
                    rgb[idx * 3..idx * 3 + 3].copy_from_slice(&cfg.hole_color);
                } else if sum_w > 0.0 {
                    for ch in 0..3 {
                        rgb[idx * 3 + ch] = (sum_wc[ch] / sum_w) as f32;
                    }
                } else {
                    rgb[idx * 3..idx * 3 + 3].copy_from_slice(&near_c);
                }
            }
        }
        (rgb, holes)
    }

    fn random_cluster_cloud() -> (ColoredPointCloud, CameraIntrinsics) {
        use rand::Rng;
        use rand::SeedableRng;
        let intr = CameraIntrinsics::new(40.0, 40.0, 32.0, 24.0, 64, 48).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut pts = Vec::new();
        for i in 0..200 {
            // Distinct depths so the nearest contributor is unambiguous.
            let z = 1.0 + i as f64 * 0.37 % 15.0;
            let u = rng.random_range(-2.0..66.0);
            let v = rng.random_range(-2.0..50.0);
            let x = (u - intr.cx) * z / intr.fx;
            let y = (v - intr.cy) * z / intr.fy;
            let color = [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()];
            pts.push((Vector3::new(x, y, z), color));
        }
        (cloud(pts), intr)
    }

    #[test]
    fn tiled_rasterizer_matches_brute_force_bitwise() {
        let (c, intr) = random_cluster_cloud();
        for gamma in [1e-6, 0.01, 0.1, 10.0] {
            let cfg = SplatConfig {
                gamma,
                ..Default::default()
            };
            let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
            let (rgb, holes) = brute_force(&c, &intr, &cfg);
            assert_eq!(out.image.data(), rgb.as_slice(), "gamma={gamma}");
            assert_eq!(out.hole_mask.data(), holes.as_slice(), "gamma={gamma}");
        }
    }

    #[test]
    fn output_is_identical_across_thread_counts() {
        let (c, intr) = random_cluster_cloud();
        let cfg = SplatConfig::default();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg)
                })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.hole_mask.data(), b.hole_mask.data());
        assert_eq!(a.blended_depth.values(), b.blended_depth.values());
    }

    #[test]
    fn blend_is_convex_and_converges_to_nearest() {
        let (c, intr) = random_cluster_cloud();
        let gammas = [0.5, 0.01, 1e-6];
        let mut max_dist = Vec::new();
        for gamma in gammas {
            let cfg = SplatConfig {
                gamma,
                ..Default::default()
            };
            let splats =
                prepare_splats(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
            let out = rasterize(&c, &RigidPose::identity(), &RigidPose::identity(), &intr, &cfg);
            let mut worst = 0.0f64;
            for row in 0..intr.height {
                for col in 0..intr.width {
                    if out.hole_mask.get(col, row) {
                        continue;
                    }
                    let mut lo = [f32::INFINITY; 3];
                    let mut hi = [f32::NEG_INFINITY; 3];
                    let mut near = f64::INFINITY;
                    let mut near_c = [0.0f32; 3];
                    for s in &splats {
                        let (dx, dy) = (col as f64 - s.u, row as f64 - s.v);
                        if dx * dx + dy * dy > s.radius_px * s.radius_px {
                            continue;
                        }
                        for ch in 0..3 {
                            lo[ch] = lo[ch].min(s.color[ch]);
                            hi[ch] = hi[ch].max(s.color[ch]);
                        }
                        if s.z < near {
                            near = s.z;
                            near_c = s.color;
                        }
                    }
                    let got = out.image.get(col, row);
                    for ch in 0..3 {
                        assert!(
                            got[ch] >= lo[ch] - 1e-6 && got[ch] <= hi[ch] + 1e-6,
                            "convexity violated at ({col},{row}) ch{ch}: {got:?} not in [{lo:?},{hi:?}]"
                        );
                        worst = worst.max((got[ch] - near_c[ch]).abs() as f64);
                    }
                }
            }
            max_dist.push(worst);
        }
        // Distance to the nearest contributor's color shrinks with gamma and
        // vanishes in the limit.
        assert!(max_dist[1] <= max_dist[0] + 1e-9, "{max_dist:?}");
        assert!(max_dist[2] <= 1e-9, "{max_dist:?}");
    }
}
