//! Depth providers: synthetic ray-cast scenes and analytic plane depth.
//!
//! The synthetic scene is the ground-truth generator for the whole pipeline:
//! axis-aligned textured quads are ray-cast to produce (image, depth) pairs
//! with exact closed-form depths, which makes them usable as oracles in
//! tests. Textures are deterministic functions of world position and a seed,
//! so regenerating a frame is bit-exact and no binary fixtures are needed.
//!
//! World frame follows the camera convention (x right, y down, z forward,
//! origin at the first camera position), so "up" is -y and a ground plane
//! below a camera at height h is `{ y = +h }`, i.e. normal (0,1,0), offset h.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, DepthMap, ImageBuffer, RigidPose};
use crate::kinematics::{
    planar_to_camera, predict, CommandBuffer, KinematicParams, PlanarPose, VelocityCommand,
};

/// World axis a quad is perpendicular to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two in-plane axes, in (u, v) order: X → (y, z), Y → (x, z),
    /// Z → (x, y).
    fn plane_axes(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

/// Procedural surface color, evaluated at in-plane world coordinates in
/// meters. All variants are pure functions of (u, v, seed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Solid color.
    Solid([f32; 3]),
    /// Sinusoidal stripes along one in-plane axis; the seed sets the phase.
    Stripes {
        along_u: bool,
        wavelength: f64,
        base: [f32; 3],
        amplitude: [f32; 3],
    },
    /// Smooth value noise: hashed lattice values blended with a smoothstep,
    /// so the field is C1 and resamples cleanly.
    Noise {
        cell: f64,
        base: [f32; 3],
        amplitude: [f32; 3],
    },
}

/// SplitMix64-style integer hash mapped to [0, 1). Deterministic across
/// platforms, unlike anything seeded through a float path.
fn hash01(seed: u64, i: i64, j: i64) -> f64 {
    let mut h = seed
        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub fn sample(&self, seed: u64, u: f64, v: f64) -> [f32; 3] {
        match *self {
            Texture::Solid(c) => c,
            Texture::Stripes {
                along_u,
                wavelength,
                base,
                amplitude,
            } => {
                let coord = if along_u { u } else { v };
                let phase = 2.0 * std::f64::consts::PI * hash01(seed, 0, 0);
                let s = (2.0 * std::f64::consts::PI * coord / wavelength + phase).sin();
                mix(base, amplitude, s)
            }
            Texture::Noise {
                cell,
                base,
                amplitude,
            } => {
                let gu = u / cell;
                let gv = v / cell;
                let i = gu.floor();
                let j = gv.floor();
                let fu = smoothstep(gu - i);
                let fv = smoothstep(gv - j);
                let (i, j) = (i as i64, j as i64);
                let n00 = hash01(seed, i, j);
                let n10 = hash01(seed, i + 1, j);
                let n01 = hash01(seed, i, j + 1);
                let n11 = hash01(seed, i + 1, j + 1);
                let n = n00 * (1.0 - fu) * (1.0 - fv)
                    + n10 * fu * (1.0 - fv)
                    + n01 * (1.0 - fu) * fv
                    + n11 * fu * fv;
                mix(base, amplitude, 2.0 * n - 1.0)
            }
        }
    }
}

/// base + amplitude * s per channel, clamped to [0, 1]; s in [-1, 1].
fn mix(base: [f32; 3], amplitude: [f32; 3], s: f64) -> [f32; 3] {
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        out[c] = (base[c] as f64 + amplitude[c] as f64 * s).clamp(0.0, 1.0) as f32;
    }
    out
}

/// An axis-aligned textured rectangle. In-plane coordinates follow
/// [`Axis::plane_axes`]; `corner` is the minimum (u, v) corner and `extent`
/// must be positive in both components.
#[derive(Debug, Clone, Copy)]
pub struct TexturedQuad {
    pub axis: Axis,
    /// Plane coordinate along `axis`, meters.
    pub offset: f64,
    pub corner: [f64; 2],
    pub extent: [f64; 2],
    pub texture: Texture,
    pub seed: u64,
}

impl TexturedQuad {
    pub fn new(
        axis: Axis,
        offset: f64,
        corner: [f64; 2],
        extent: [f64; 2],
        texture: Texture,
        seed: u64,
    ) -> Self {
        assert!(
            extent[0] > 0.0 && extent[1] > 0.0,
            "quad extent must be positive, got {extent:?}"
        );
        Self {
            axis,
            offset,
            corner,
            extent,
            texture,
            seed,
        }
    }
}

/// A static scene of axis-aligned quads. Immutable after construction;
/// ray casts from any number of threads are safe.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub quads: Vec<TexturedQuad>,
    pub background_color: [f32; 3],
}

impl SyntheticScene {
    pub fn new(quads: Vec<TexturedQuad>, background_color: [f32; 3]) -> Self {
        Self {
            quads,
            background_color,
        }
    }

    /// Nearest quad intersection for a world-space ray. Returns
    /// (depth-along-ray-parameter, color). The ray direction is the camera
    /// ray rotated into world coordinates, so with the camera convention of
    /// z-normalized rays the parameter *is* the camera-frame z depth.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, [f32; 3])> {
        let mut best: Option<(f64, [f32; 3])> = None;
        for quad in &self.quads {
            let ax = quad.axis.index();
            let denom = dir[ax];
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (quad.offset - origin[ax]) / denom;
            if t <= 1e-9 {
                continue;
            }
            if let Some((bt, _)) = best {
                if t >= bt {
                    continue;
                }
            }
            let (ua, va) = quad.axis.plane_axes();
            let u = origin[ua] + t * dir[ua];
            let v = origin[va] + t * dir[va];
            if u < quad.corner[0]
                || u > quad.corner[0] + quad.extent[0]
                || v < quad.corner[1]
                || v > quad.corner[1] + quad.extent[1]
            {
                continue;
            }
            best = Some((t, quad.texture.sample(quad.seed, u, v)));
        }
        best
    }
}

/// Renders the scene from a camera pose (camera-to-world). Depth is distance
/// along the optical axis; pixels whose ray hits nothing get the background
/// color and invalid depth.
pub fn raycast(
    scene: &SyntheticScene,
    intr: &CameraIntrinsics,
    pose: &RigidPose,
) -> (ImageBuffer, DepthMap) {
    let width = intr.width as usize;
    let mut image = ImageBuffer::new(intr.width, intr.height);
    let mut depth = DepthMap::new_invalid(intr.width, intr.height);
    let origin = *pose.translation();
    let rotation = *pose.rotation();

    let depth_rows: Vec<&mut [f64]> = depth.values_mut().chunks_mut(width).collect();
    let image_rows: Vec<&mut [f32]> = image.data_mut().chunks_mut(width * 3).collect();
    depth_rows
        .into_par_iter()
        .zip(image_rows.into_par_iter())
        .enumerate()
        .for_each(|(row, (drow, irow))| {
            for col in 0..width {
                let ray = intr.pixel_to_ray(col as f64, row as f64);
                let dir = rotation * ray;
                match scene.intersect(&origin, &dir) {
                    Some((t, color)) => {
                        drow[col] = t;
                        irow[col * 3..col * 3 + 3].copy_from_slice(&color);
                    }
                    None => {
                        irow[col * 3..col * 3 + 3].copy_from_slice(&scene.background_color);
                    }
                }
            }
        });
    (image, depth)
}

/// Analytic per-pixel depth of an infinite world plane `{ n · X = d }` seen
/// from `pose`. Rays parallel to the plane or intersecting it behind the
/// camera are marked invalid.
pub fn plane_depth(
    intr: &CameraIntrinsics,
    pose: &RigidPose,
    n: &Vector3<f64>,
    d: f64,
) -> DepthMap {
    assert!(
        (n.norm() - 1.0).abs() <= 1e-9,
        "plane normal must be unit length, |n| = {}",
        n.norm()
    );
    // Express the plane in the camera frame: X_w = R X_c + t, so
    // n·X_w = d becomes (Rᵀn)·X_c = d − n·t.
    let n_cam = pose.rotation().transpose() * n;
    let d_cam = d - n.dot(pose.translation());
    let mut depth = DepthMap::new_invalid(intr.width, intr.height);
    for row in 0..intr.height {
        for col in 0..intr.width {
            let ray = intr.pixel_to_ray(col as f64, row as f64);
            let denom = n_cam.dot(&ray);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = d_cam / denom;
            if t > 0.0 {
                depth.set(col, row, t);
            }
        }
    }
    depth
}

/// Camera used by the built-in scenes: 640x360, 90° horizontal FOV.
pub fn preset_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(320.0, 320.0, 320.0, 180.0, 640, 360).expect("static preset is valid")
}

/// Height of the preset camera above the corridor ground, meters. The world
/// origin sits at the initial camera position, so the ground plane is
/// normal (0,1,0) at offset +height.
pub const PRESET_CAMERA_HEIGHT: f64 = 0.35;

/// Ground plane of the corridor preset in world coordinates.
pub fn corridor_ground_plane() -> (Vector3<f64>, f64) {
    (Vector3::new(0.0, 1.0, 0.0), PRESET_CAMERA_HEIGHT)
}

/// A narrow corridor: textured ground, two long striped side walls and a far
/// wall, i.e. a scene with large per-pixel depth variance (near walls move a
/// lot under camera motion, the far end barely). The far wall is oversized so
/// every forward ray hits geometry and source frames have no depth holes.
pub fn corridor_scene() -> SyntheticScene {
    let ground = TexturedQuad::new(
        Axis::Y,
        PRESET_CAMERA_HEIGHT,
        [-0.75, -2.0],
        [1.5, 11.2],
        Texture::Noise {
            cell: 0.8,
            base: [0.40, 0.32, 0.24],
            amplitude: [0.10, 0.08, 0.06],
        },
        11,
    );
    let wall_texture = |base: [f32; 3]| Texture::Stripes {
        along_u: true, // stripes vary with height; projected frequency stays tame
        wavelength: 0.3,
        base,
        amplitude: [0.06, 0.10, 0.06],
    };
    let left_wall = TexturedQuad::new(
        Axis::X,
        -0.75,
        [-3.5, -2.0],
        [3.85, 11.2],
        wall_texture([0.26, 0.42, 0.24]),
        12,
    );
    let right_wall = TexturedQuad::new(
        Axis::X,
        0.75,
        [-3.5, -2.0],
        [3.85, 11.2],
        wall_texture([0.24, 0.40, 0.22]),
        13,
    );
    let far_wall = TexturedQuad::new(
        Axis::Z,
        9.0,
        [-12.0, -7.0],
        [24.0, 7.35],
        Texture::Noise {
            cell: 0.5,
            base: [0.35, 0.38, 0.45],
            amplitude: [0.08, 0.08, 0.10],
        },
        14,
    );
    SyntheticScene::new(vec![ground, left_wall, right_wall, far_wall], [0.05, 0.05, 0.08])
}

/// A single large fronto-parallel plane 3.5 m ahead — the case a planar
/// homography models exactly.
pub fn frontal_scene() -> SyntheticScene {
    let quad = TexturedQuad::new(
        Axis::Z,
        3.5,
        [-4.5, -2.8],
        [9.0, 5.6],
        Texture::Noise {
            cell: 0.5,
            base: [0.45, 0.40, 0.30],
            amplitude: [0.12, 0.10, 0.08],
        },
        21,
    );
    SyntheticScene::new(vec![quad], [0.05, 0.05, 0.08])
}

/// The plane of the frontal preset in world coordinates.
pub fn frontal_plane() -> (Vector3<f64>, f64) {
    (Vector3::new(0.0, 0.0, 1.0), 3.5)
}

/// Default homography plane for a sequence, chosen by bundle name. Unknown
/// bundles get the corridor ground plane: any level-ground robot at the
/// preset mount height has that plane under it.
pub fn plane_for_bundle_name(name: &str) -> (Vector3<f64>, f64) {
    match name {
        "frontal" => frontal_plane(),
        _ => corridor_ground_plane(),
    }
}

/// Samples a scripted trajectory by integrating the command buffer from the
/// initial pose: frame k is taken at `t0 + k * frame_period`. Uses the same
/// arc stepper the predictor uses, so predicted and ground-truth poses agree
/// to floating-point accuracy.
pub fn trajectory_from_commands(
    initial: PlanarPose,
    t0: f64,
    commands: &CommandBuffer,
    params: &KinematicParams,
    frame_period: f64,
    n_frames: usize,
) -> Vec<(f64, PlanarPose)> {
    (0..n_frames)
        .map(|k| {
            let t = t0 + k as f64 * frame_period;
            let predicted = predict(initial, t0, commands, t, params);
            (t, predicted.pose)
        })
        .collect()
}

/// Camera pose for a planar robot pose under the given mount.
pub fn camera_pose(planar: &PlanarPose, params: &KinematicParams) -> RigidPose {
    planar_to_camera(planar, params)
}

/// Built-in scene presets paired with scripted driving commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenePreset {
    /// Two long side walls, ground, far wall: large per-pixel depth variance,
    /// nearby surfaces sweep quickly past the camera.
    Corridor,
    /// A single fronto-parallel plane: the regime where a plane-induced
    /// homography is exact.
    Frontal,
}

impl ScenePreset {
    pub fn name(&self) -> &'static str {
        match self {
            ScenePreset::Corridor => "corridor",
            ScenePreset::Frontal => "frontal",
        }
    }

    /// Parses the preset name used on the command line.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "corridor" => Some(ScenePreset::Corridor),
            "frontal" => Some(ScenePreset::Frontal),
            _ => None,
        }
    }

    pub fn scene(&self) -> SyntheticScene {
        match self {
            ScenePreset::Corridor => corridor_scene(),
            ScenePreset::Frontal => frontal_scene(),
        }
    }

    /// Seeded driving script: constant-ish forward speed with an
    /// alternating-sign weave. Strict sign alternation bounds the heading,
    /// which keeps the corridor trajectory away from the walls and the
    /// frontal one pointed at its plane. The corridor script weaves hard
    /// and advances slowly — the row-following regime, where heading
    /// corrections dominate forward progress; the frontal script creeps
    /// with mild corrections so its plane keeps filling the frame.
    pub fn command_script(&self, seed: u64, duration: f64) -> CommandBuffer {
        use rand::Rng as _;
        use rand::SeedableRng as _;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (v_base, v_jitter, omega_lo, omega_hi, segment) = match self {
            ScenePreset::Corridor => (0.30, 0.05, 0.30, 0.50, 0.8),
            ScenePreset::Frontal => (0.22, 0.04, 0.02, 0.05, 1.5),
        };
        let mut sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut commands = Vec::new();
        let mut t = 0.0;
        while t < duration {
            commands.push(VelocityCommand {
                timestamp: t,
                v: v_base + rng.random_range(-v_jitter..v_jitter),
                omega: sign * rng.random_range(omega_lo..omega_hi),
            });
            sign = -sign;
            t += segment;
        }
        CommandBuffer::new(commands).expect("script timestamps increase by construction")
    }

    /// Scripted sequence: camera poses sampled along the command trajectory
    /// at `frame_rate`, plus the commands themselves (the same buffer a
    /// compensator would receive).
    pub fn sequence(
        &self,
        n_frames: usize,
        frame_rate: f64,
        seed: u64,
    ) -> (SyntheticSequence, CommandBuffer) {
        let commands = self.command_script(seed, n_frames as f64 / frame_rate);
        let params = KinematicParams::default();
        let planar = trajectory_from_commands(
            PlanarPose::new(0.0, 0.0, 0.0),
            0.0,
            &commands,
            &params,
            1.0 / frame_rate,
            n_frames,
        );
        let frames = planar.iter().map(|(t, p)| (*t, camera_pose(p, &params))).collect();
        let sequence = SyntheticSequence {
            scene: self.scene(),
            intrinsics: preset_camera(),
            frame_rate,
            frames,
        };
        (sequence, commands)
    }
}

/// A synthetic scene plus a sampled camera trajectory: frames are regenerated
/// on demand by ray casting, so two reads of the same frame are bit-exact.
///
/// Immutable after construction; reads are thread-safe.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub scene: SyntheticScene,
    pub intrinsics: CameraIntrinsics,
    /// Sampling rate of `frames`, Hz.
    pub frame_rate: f64,
    /// (timestamp, camera-to-world pose) per frame.
    pub frames: Vec<(f64, RigidPose)>,
}

impl SyntheticSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Ray-casts frame `index` from its recorded pose.
    pub fn raycast_frame(&self, index: usize) -> (ImageBuffer, DepthMap) {
        raycast(&self.scene, &self.intrinsics, &self.frames[index].1)
    }
}

/// Errors from frame providers.
#[derive(Debug, thiserror::Error)]
pub enum DepthError {
    /// Underlying bundle read failed (missing file, bad format, ...).
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    /// Frame index past the end of the source.
    #[error("frame index {index} out of range: source has {count} frames")]
    FrameOutOfRange { index: usize, count: usize },
    /// Plane normal must be unit length.
    #[error("plane normal has length {norm}, expected 1 within 1e-9")]
    NonUnitNormal { norm: f64 },
    /// Plane offset must be positive.
    #[error("plane offset must be positive, got {offset}")]
    NonPositiveOffset { offset: f64 },
}

/// Where (image, depth, pose) frames come from.
///
/// All variants are immutable after construction, so shared references are
/// thread-safe.
#[derive(Debug, Clone)]
pub enum DepthSource {
    /// Recorded bundle: images and depth maps decoded from disk.
    FileDepth(crate::io::SequenceBundle),
    /// Recorded images and poses, but depth replaced by the analytic
    /// intersection with a fixed world-frame plane `{ x : n·x = d }`. This is
    /// the planar-world assumption as a depth provider: cheap, and exact
    /// whenever the scene really is that plane.
    PlaneDepth {
        sequence: crate::io::SequenceBundle,
        /// Unit plane normal, world frame.
        normal: Vector3<f64>,
        /// Plane offset in meters, world frame; positive.
        offset: f64,
    },
    /// Ray-cast ground truth regenerated on demand.
    Synthetic(SyntheticSequence),
}

/// One provided frame: everything downstream stages need about an instant.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub image: ImageBuffer,
    pub depth: DepthMap,
    /// Camera-to-world pose (interpretation per the bundle's pose-frame tag;
    /// synthetic sequences always record camera poses directly).
    pub pose: RigidPose,
    /// Capture time, seconds.
    pub timestamp: f64,
}

impl DepthSource {
    /// Plane-depth variant with validated plane parameters.
    pub fn plane_depth(
        sequence: crate::io::SequenceBundle,
        normal: Vector3<f64>,
        offset: f64,
    ) -> Result<Self, DepthError> {
        validate_plane(&normal, offset)?;
        Ok(DepthSource::PlaneDepth { sequence, normal, offset })
    }

    pub fn frame_count(&self) -> usize {
        match self {
            DepthSource::FileDepth(seq) | DepthSource::PlaneDepth { sequence: seq, .. } => {
                seq.frame_count()
            }
            DepthSource::Synthetic(seq) => seq.frame_count(),
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        match self {
            DepthSource::FileDepth(seq) | DepthSource::PlaneDepth { sequence: seq, .. } => {
                seq.manifest().intrinsics
            }
            DepthSource::Synthetic(seq) => seq.intrinsics,
        }
    }

    /// Native capture rate, Hz.
    pub fn frame_rate(&self) -> f64 {
        match self {
            DepthSource::FileDepth(seq) | DepthSource::PlaneDepth { sequence: seq, .. } => {
                seq.manifest().frame_rate
            }
            DepthSource::Synthetic(seq) => seq.frame_rate,
        }
    }

    /// Human-readable sequence label for reports.
    pub fn name(&self) -> String {
        match self {
            DepthSource::FileDepth(seq) => seq.manifest().name.clone(),
            DepthSource::PlaneDepth { sequence, .. } => {
                format!("{}+plane", sequence.manifest().name)
            }
            DepthSource::Synthetic(_) => "synthetic".to_string(),
        }
    }

    /// Capture timestamp of frame `index` without decoding any rasters.
    pub fn timestamp(&self, index: usize) -> Result<f64, DepthError> {
        let count = self.frame_count();
        if index >= count {
            return Err(DepthError::FrameOutOfRange { index, count });
        }
        match self {
            DepthSource::FileDepth(seq) | DepthSource::PlaneDepth { sequence: seq, .. } => {
                Ok(seq.timestamp(index)?)
            }
            DepthSource::Synthetic(seq) => Ok(seq.frames[index].0),
        }
    }
}

fn validate_plane(normal: &Vector3<f64>, offset: f64) -> Result<(), DepthError> {
    let norm = normal.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(DepthError::NonUnitNormal { norm });
    }
    if offset <= 0.0 {
        return Err(DepthError::NonPositiveOffset { offset });
    }
    Ok(())
}

/// Fetches one frame from a provider.
///
/// File depths outside the bundle's declared sensor range come back invalid
/// (marked, never clamped); plane depths get the same range treatment so a
/// near-horizon ray cannot inject kilometer-scale points. Synthetic frames
/// are the untouched ray-cast oracle.
pub fn load_frame(source: &DepthSource, index: usize) -> Result<LoadedFrame, DepthError> {
    let count = source.frame_count();
    if index >= count {
        return Err(DepthError::FrameOutOfRange { index, count });
    }
    match source {
        DepthSource::FileDepth(seq) => {
            let (image, depth) = seq.read_frame(index)?;
            Ok(LoadedFrame {
                image,
                depth,
                pose: seq.pose(index)?,
                timestamp: seq.timestamp(index)?,
            })
        }
        DepthSource::PlaneDepth { sequence: seq, normal, offset } => {
            validate_plane(normal, *offset)?;
            let (image, _) = seq.read_frame(index)?;
            let pose = seq.pose(index)?;
            let mut depth =
                plane_depth(&seq.manifest().intrinsics, &pose, normal, *offset);
            let range = seq.manifest().depth_range;
            depth.apply_range(range.min, range.max);
            Ok(LoadedFrame { image, depth, pose, timestamp: seq.timestamp(index)? })
        }
        DepthSource::Synthetic(seq) => {
            let (image, depth) = seq.raycast_frame(index);
            let (timestamp, pose) = seq.frames[index];
            Ok(LoadedFrame { image, depth, pose, timestamp })
        }
    }
}

/// Ray-casts a scripted preset sequence straight to a bundle on disk.
/// Fully determined by `(preset, n_frames, frame_rate, seed)`: rerunning with
/// the same arguments writes byte-identical files.
pub fn write_preset_bundle(
    root: &std::path::Path,
    preset: ScenePreset,
    n_frames: usize,
    frame_rate: f64,
    seed: u64,
) -> Result<crate::io::SequenceBundle, DepthError> {
    let (sequence, commands) = preset.sequence(n_frames, frame_rate, seed);
    let manifest = crate::io::SequenceManifest::new(
        preset.name(),
        sequence.intrinsics,
        frame_rate,
        n_frames,
    );
    let mut writer = crate::io::BundleWriter::create(root, manifest)?;
    for index in 0..n_frames {
        let (image, depth) = sequence.raycast_frame(index);
        let (timestamp, pose) = sequence.frames[index];
        writer.write_frame(&image, &depth, &pose, timestamp)?;
    }
    writer.finish(&commands)?;
    Ok(crate::io::SequenceBundle::open(root)?)
}

/// Invalidates a random subset of valid pixels, emulating sensor dropout
/// (stereo depth cameras lose a large fraction of pixels in the field).
/// Deterministic in the seed; never creates new valid pixels.
pub fn apply_random_holes(depth: &mut DepthMap, fraction: f64, seed: u64) {
    use rand::Rng as _;
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for v in depth.values_mut() {
        if v.is_finite() && *v > 0.0 && rng.random::<f64>() < fraction {
            *v = crate::geometry::INVALID_DEPTH;
        }
    }
}
