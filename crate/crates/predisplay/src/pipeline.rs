//! Network-link emulation, the live compensator loop, and the offline
//! evaluation driver.
//!
//! The live loop mirrors the deployed dataflow: the robot streams decimated,
//! delayed sensor frames; the operator side buffers its own command stream;
//! a display clock ticks at a fixed cadence. On every tick the loop snapshots
//! the newest delivered frame, predicts where the camera will be *now* from
//! the commands issued since that frame was captured, re-renders the frame
//! from the predicted viewpoint, fills disocclusion holes, and emits the
//! result with a log record.
//!
//! Everything runs on a virtual clock and seeded randomness, so a run is a
//! pure function of its inputs: identical configs and seeds produce
//! bit-identical frames and logs. Wall-clock stage timings can be recorded
//! for throughput measurements, but they are off by default precisely to
//! keep the logs reproducible.
//!
//! The offline driver replays a recorded sequence with ground-truth future
//! poses (the stored-dataset protocol): for every source frame and every
//! requested delay it renders each method's compensated frame and scores it
//! against the recorded future frame. That isolates rendering quality from
//! pose prediction error; the live loop exercises both together.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    crop_and_scale, plane_homography, warp, BaselineError, CropScaleParams,
};
use crate::depth::{camera_pose, load_frame, DepthError, DepthSource, LoadedFrame};
use crate::geometry::{
    CameraIntrinsics, DepthMap, GeometryError, ImageBuffer, PixelMask, RigidPose,
};
use crate::inpaint::{fill, fill_masked, InpaintConfig};
use crate::kinematics::{
    camera_to_planar, normalize_angle, predict, CommandBuffer, KinematicParams, PlanarPose,
};
use crate::metrics::{
    depth_metrics, ms_ssim, psnr, si_loss, MetricsError, SI_LOSS_DEFAULT_LAMBDA,
};
use crate::splat::{render_compensated, SplatConfig};

/// Errors from the emulation/evaluation harness.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence timestamps must strictly increase")]
    NonMonotonicTimestamps,
    #[error("sequence has {frames} frames, need at least {needed}")]
    SequenceTooShort { frames: usize, needed: usize },
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// One sensor message in flight: payload plus capture/arrival stamps.
#[derive(Debug, Clone)]
pub struct StampedFrame {
    pub image: ImageBuffer,
    pub depth: DepthMap,
    pub pose: RigidPose,
    /// When the robot captured the frame, seconds.
    pub capture_time: f64,
    /// When the operator side received it, seconds; ≥ capture_time.
    pub arrival_time: f64,
}

/// Emulated robot→operator link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConditions {
    /// One-way transport delay, seconds.
    pub base_delay: f64,
    /// Standard deviation of zero-mean Gaussian jitter added per frame;
    /// a total delay that comes out negative clamps to zero.
    pub jitter_stddev: f64,
    /// Decimation factor: every `skip`-th frame is transmitted, the rest
    /// never leave the robot. 1 transmits everything; 5 turns a 30 Hz
    /// stream into 6 FPS, 10 into 3 FPS.
    pub skip: usize,
    /// Independent drop probability per transmitted frame.
    pub drop_probability: f64,
    /// Seed for jitter and drops.
    pub seed: u64,
}

impl Default for NetworkConditions {
    fn default() -> Self {
        Self {
            base_delay: 0.25,
            jitter_stddev: 0.0,
            skip: 1,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl NetworkConditions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.base_delay >= 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "base_delay must be ≥ 0, got {}",
                self.base_delay
            )));
        }
        if !(self.jitter_stddev >= 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "jitter_stddev must be ≥ 0, got {}",
                self.jitter_stddev
            )));
        }
        if self.skip == 0 {
            return Err(PipelineError::InvalidConfig(
                "skip must be ≥ 1 (1 = no decimation)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(PipelineError::InvalidConfig(format!(
                "drop_probability must be in [0, 1], got {}",
                self.drop_probability
            )));
        }
        Ok(())
    }
}

/// Schedule entry for one frame that survives the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub frame_index: usize,
    pub capture_time: f64,
    pub arrival_time: f64,
}

/// Applies decimation, delay, jitter, and drops to a capture-time schedule
/// and returns the surviving deliveries in arrival order.
///
/// A pure, seeded function: the same inputs always produce the same
/// schedule. Per transmitted frame the generator draws jitter first and the
/// drop coin second, whether or not the frame ends up dropped, so one
/// frame's fate never shifts another frame's randomness. Frames that would
/// arrive after a newer capture has already arrived are discarded — the
/// consumer only ever wants the newest state, so an out-of-order stale
/// frame is useless.
pub fn emulate_link(
    capture_times: &[f64],
    cond: &NetworkConditions,
) -> Result<Vec<Delivery>, PipelineError> {
    cond.validate()?;
    if capture_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PipelineError::NonMonotonicTimestamps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cond.seed);
    let jitter = Normal::new(0.0, cond.jitter_stddev)
        .map_err(|e| PipelineError::InvalidConfig(format!("jitter distribution: {e}")))?;

    let mut deliveries = Vec::new();
    for (index, &capture) in capture_times.iter().enumerate() {
        if index % cond.skip != 0 {
            continue;
        }
        let j = jitter.sample(&mut rng);
        let dropped = rng.random::<f64>() < cond.drop_probability;
        if dropped {
            continue;
        }
        let delay = (cond.base_delay + j).max(0.0);
        deliveries.push(Delivery {
            frame_index: index,
            capture_time: capture,
            arrival_time: capture + delay,
        });
    }

    deliveries.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.capture_time.total_cmp(&b.capture_time))
    });
    let mut newest = f64::NEG_INFINITY;
    deliveries.retain(|d| {
        if d.capture_time > newest {
            newest = d.capture_time;
            true
        } else {
            false
        }
    });
    Ok(deliveries)
}

/// How far ahead of the source frame to predict the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HorizonPolicy {
    /// Predict from the frame's capture time all the way to the display
    /// tick: the compensator always aims for "now".
    CompensateToNow,
    /// Predict a fixed number of native frame periods past capture,
    /// regardless of how stale the frame is.
    FixedSteps(usize),
}

/// Compensation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Depth back-projection + sphere splatting + hole fill.
    Pointcloud,
    /// Warp induced by a fixed world-frame plane `{ x : n·x = d }`;
    /// exact when the scene is that plane, wrong everywhere else.
    Homography { normal: Vector3<f64>, offset: f64 },
    /// Image-space crop-and-scale driven by planar displacement only.
    CropScale,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pointcloud => "pointcloud",
            Method::Homography { .. } => "homography",
            Method::CropScale => "cropscale",
        }
    }
}

/// Compensator configuration shared by the live loop and the offline driver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Display tick period, seconds.
    pub display_period: f64,
    pub horizon: HorizonPolicy,
    pub method: Method,
    pub splat: SplatConfig,
    pub inpaint: InpaintConfig,
    pub kinematics: KinematicParams,
    /// Shown while no sensor frame has arrived yet.
    pub placeholder_color: [f32; 3],
    /// Record wall-clock stage timings in the log. Off by default: with the
    /// virtual clock, timings are the only nondeterministic quantity, so
    /// zeroing them keeps logs bit-reproducible. Turn on for throughput
    /// measurement only.
    pub wall_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            display_period: 1.0 / 30.0,
            horizon: HorizonPolicy::CompensateToNow,
            method: Method::Pointcloud,
            splat: SplatConfig::default(),
            inpaint: InpaintConfig::default(),
            kinematics: KinematicParams::default(),
            placeholder_color: [0.1, 0.1, 0.1],
            wall_timings: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.display_period > 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "display_period must be positive, got {}",
                self.display_period
            )));
        }
        self.splat.validate().map_err(PipelineError::InvalidConfig)?;
        Ok(())
    }
}

/// Provenance of the frame rendered at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceInfo {
    pub frame_index: usize,
    pub capture_time: f64,
    pub arrival_time: f64,
    /// display_time − capture_time: how old the displayed scene state is.
    pub effective_latency: f64,
}

/// One display-tick log record.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub tick: usize,
    /// Virtual display-clock time, seconds. Ticks are never skipped and
    /// advance by exactly the display period.
    pub display_time: f64,
    /// `None` while waiting for the first delivery (placeholder emitted).
    pub source: Option<SourceInfo>,
    /// Planar pose the camera was predicted to occupy at render target time.
    pub predicted_pose: Option<PlanarPose>,
    /// Prediction had no command at or before the frame's capture time.
    pub command_starved: bool,
    /// Disocclusion-hole fraction before inpainting (1.0 for placeholder).
    pub hole_fraction: f64,
    /// This tick's work exceeded the display period (wall timings only).
    pub overrun: bool,
    /// Stage timings in milliseconds; zero unless `wall_timings` is set.
    pub depth_ms: f64,
    pub render_ms: f64,
    pub inpaint_ms: f64,
    pub total_ms: f64,
}

/// Full live-run log.
pub type FrameLog = Vec<FrameRecord>;

struct StageTimings {
    render_ms: f64,
    inpaint_ms: f64,
}

/// Measures a closure in wall milliseconds when enabled; otherwise runs it
/// and reports zero so logs stay deterministic.
fn timed<T>(enabled: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if enabled {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_secs_f64() * 1e3)
    } else {
        (f(), 0.0)
    }
}

/// One method's output for a single (source frame, target pose) pair,
/// after hole filling.
#[derive(Debug, Clone)]
pub struct CompensatedFrame {
    /// Displayable image: rendered, holes filled.
    pub image: ImageBuffer,
    /// Pixels the method could not cover before filling (point cloud:
    /// splat holes; homography: out-of-frame warp samples; crop-and-scale:
    /// none by construction).
    pub holes: PixelMask,
    /// Fraction of `holes` set.
    pub hole_fraction: f64,
    /// Rendered target-view depth — point-cloud method only; the baselines
    /// produce no depth.
    pub rendered_depth: Option<DepthMap>,
}

/// Compensates one frame to a target pose with the configured method and
/// fills the holes. This is the per-tick core of the live loop, exposed for
/// single-frame rendering.
pub fn compensate_frame(
    frame: &LoadedFrame,
    dst_pose: &RigidPose,
    intr: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<CompensatedFrame, PipelineError> {
    render_with_method(frame, dst_pose, intr, cfg).map(|(out, _)| out)
}

fn render_with_method(
    frame: &LoadedFrame,
    dst_pose: &RigidPose,
    intr: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<(CompensatedFrame, StageTimings), PipelineError> {
    let wall = cfg.wall_timings;
    match &cfg.method {
        Method::Pointcloud => {
            let (rendered, render_ms) = timed(wall, || {
                render_compensated(&frame.image, &frame.depth, intr, &frame.pose, dst_pose, &cfg.splat)
            });
            let rendered = rendered?;
            let hole_fraction = rendered.hole_fraction();
            let (filled, inpaint_ms) = timed(wall, || fill(&rendered, &cfg.inpaint));
            Ok((
                CompensatedFrame {
                    image: filled.image,
                    holes: rendered.hole_mask,
                    hole_fraction,
                    rendered_depth: Some(rendered.blended_depth),
                },
                StageTimings { render_ms, inpaint_ms },
            ))
        }
        Method::Homography { normal, offset } => {
            // The warp wants the plane in the source camera frame.
            let n_cam = frame.pose.rotation().transpose() * normal;
            let d_cam = offset - normal.dot(frame.pose.translation());
            let (warped, render_ms) = timed(wall, || {
                plane_homography(intr, &frame.pose, dst_pose, &n_cam, d_cam)
                    .map(|h| warp(&frame.image, &h))
            });
            let warped = warped?;
            let holes = warped.valid.inverted();
            let total = (intr.width as usize * intr.height as usize) as f64;
            let hole_fraction = holes.count_true() as f64 / total;
            let (filled, inpaint_ms) =
                timed(wall, || fill_masked(&warped.image, &holes, &cfg.inpaint));
            Ok((
                CompensatedFrame {
                    image: filled.image,
                    holes,
                    hole_fraction,
                    rendered_depth: None,
                },
                StageTimings { render_ms, inpaint_ms },
            ))
        }
        Method::CropScale => {
            let src_planar = camera_to_planar(&frame.pose, &cfg.kinematics);
            let dst_planar = camera_to_planar(dst_pose, &cfg.kinematics);
            let displacement = planar_displacement(&src_planar, &dst_planar);
            let nominal = mean_valid_depth(&frame.depth).unwrap_or(5.0);
            let params = CropScaleParams::calibrated(intr, nominal);
            let (image, render_ms) =
                timed(wall, || crop_and_scale(&frame.image, displacement, &params));
            // The window is clamped inside the frame, so coverage is total.
            Ok((
                CompensatedFrame {
                    image,
                    holes: PixelMask::filled(intr.width, intr.height, false),
                    hole_fraction: 0.0,
                    rendered_depth: None,
                },
                StageTimings { render_ms, inpaint_ms: 0.0 },
            ))
        }
    }
}

/// (forward, heading) displacement of `dst` relative to `src`, in the source
/// pose's own frame: forward is meters along the source heading, heading is
/// the normalized yaw change.
fn planar_displacement(src: &PlanarPose, dst: &PlanarPose) -> (f64, f64) {
    let dx = dst.x - src.x;
    let dy = dst.y - src.y;
    let forward = dx * src.theta.cos() + dy * src.theta.sin();
    let heading = normalize_angle(dst.theta - src.theta);
    (forward, heading)
}

/// Mean of the valid depth samples, if any — the crop-and-scale zoom
/// calibration wants a single nominal scene distance.
fn mean_valid_depth(depth: &DepthMap) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &v in depth.values() {
        if v.is_finite() && v > 0.0 {
            sum += v;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Runs the live compensator over an emulated link.
///
/// On every display tick the newest frame that has *arrived* by the tick
/// time is snapshotted (never a frame still in flight — arrival stamps gate
/// visibility), the camera pose at the render target time is predicted from
/// the commands issued up to the tick, and the compensated frame goes to
/// `emit` together with its log record. Before the first delivery the loop
/// emits placeholder frames at full cadence, so the display never stalls.
///
/// Returns the complete log. With `wall_timings` off the run is a pure
/// function of its arguments: bit-identical frames and logs every time.
pub fn run_live(
    source: &DepthSource,
    commands: &CommandBuffer,
    cond: &NetworkConditions,
    cfg: &PipelineConfig,
    mut emit: impl FnMut(&ImageBuffer, &FrameRecord) -> Result<(), PipelineError>,
) -> Result<FrameLog, PipelineError> {
    cfg.validate()?;
    let frame_count = source.frame_count();
    if frame_count == 0 {
        return Err(PipelineError::SequenceTooShort { frames: 0, needed: 1 });
    }
    let capture_times: Vec<f64> = (0..frame_count)
        .map(|i| source.timestamp(i))
        .collect::<Result<_, _>>()?;
    let deliveries = emulate_link(&capture_times, cond)?;
    let intr = source.intrinsics();
    let native_period = 1.0 / source.frame_rate();

    // Tick schedule: start at the first capture, run until the last frame
    // has had time to arrive (plus jitter headroom) and be displayed once.
    let t0 = capture_times[0];
    let t_end = capture_times[frame_count - 1]
        + cond.base_delay
        + 4.0 * cond.jitter_stddev
        + cfg.display_period;
    let n_ticks = ((t_end - t0) / cfg.display_period).floor() as usize + 1;

    let mut log: FrameLog = Vec::with_capacity(n_ticks);
    let mut next_delivery = 0usize;
    let mut current: Option<(Delivery, LoadedFrame)> = None;

    for tick in 0..n_ticks {
        let display_time = t0 + tick as f64 * cfg.display_period;
        let total_start = cfg.wall_timings.then(Instant::now);

        // Ingest: advance to the newest delivery that has arrived. Frames
        // superseded between two ticks are skipped without decoding.
        let mut newest_arrived: Option<Delivery> = None;
        while next_delivery < deliveries.len()
            && deliveries[next_delivery].arrival_time <= display_time
        {
            newest_arrived = Some(deliveries[next_delivery]);
            next_delivery += 1;
        }
        let mut depth_ms = 0.0;
        if let Some(delivery) = newest_arrived {
            let (loaded, ms) = timed(cfg.wall_timings, || load_frame(source, delivery.frame_index));
            current = Some((delivery, loaded?));
            depth_ms = ms;
        }

        let record = match &current {
            None => {
                let placeholder =
                    ImageBuffer::filled(intr.width, intr.height, cfg.placeholder_color);
                let record = FrameRecord {
                    tick,
                    display_time,
                    source: None,
                    predicted_pose: None,
                    command_starved: false,
                    hole_fraction: 1.0,
                    overrun: false,
                    depth_ms: 0.0,
                    render_ms: 0.0,
                    inpaint_ms: 0.0,
                    total_ms: 0.0,
                };
                emit(&placeholder, &record)?;
                record
            }
            Some((delivery, frame)) => {
                let target_time = match cfg.horizon {
                    HorizonPolicy::CompensateToNow => display_time,
                    HorizonPolicy::FixedSteps(steps) => {
                        frame.timestamp + steps as f64 * native_period
                    }
                };
                // Commands are operator-side state: known up to the tick,
                // never beyond it.
                let known = commands.snapshot_until(display_time);
                let predicted = predict(
                    camera_to_planar(&frame.pose, &cfg.kinematics),
                    frame.timestamp,
                    &known,
                    target_time.max(frame.timestamp),
                    &cfg.kinematics,
                );
                let dst_pose = camera_pose(&predicted.pose, &cfg.kinematics);
                let (compensated, stage) = render_with_method(frame, &dst_pose, &intr, cfg)?;

                let total_ms = total_start
                    .map(|s| s.elapsed().as_secs_f64() * 1e3)
                    .unwrap_or(0.0);
                let record = FrameRecord {
                    tick,
                    display_time,
                    source: Some(SourceInfo {
                        frame_index: delivery.frame_index,
                        capture_time: delivery.capture_time,
                        arrival_time: delivery.arrival_time,
                        effective_latency: display_time - delivery.capture_time,
                    }),
                    predicted_pose: Some(predicted.pose),
                    command_starved: predicted.command_starved,
                    hole_fraction: compensated.hole_fraction,
                    overrun: total_ms > cfg.display_period * 1e3,
                    depth_ms,
                    render_ms: stage.render_ms,
                    inpaint_ms: stage.inpaint_ms,
                    total_ms,
                };
                emit(&compensated.image, &record)?;
                record
            }
        };
        log.push(record);
    }
    Ok(log)
}

/// Where the offline driver gets its future poses.
#[derive(Debug, Clone, Copy)]
pub enum PoseSource<'a> {
    /// Recorded ground-truth pose of the target frame (stored-dataset
    /// protocol: isolates rendering quality from prediction error).
    GroundTruth,
    /// Predict the target pose from the source frame with these commands.
    Predicted(&'a CommandBuffer),
}

/// One scored (frame, delay, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sequence: String,
    pub frame_index: usize,
    pub delay_steps: usize,
    pub method: String,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    /// Depth metrics exist only for the point-cloud method; the baselines
    /// produce no depth.
    pub abs_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub si_loss: Option<f64>,
    pub hole_fraction: f64,
    /// Wall time of render + fill for this cell, milliseconds.
    pub render_ms: f64,
}

/// Offline evaluation: for every source frame `t` and delay `k`, compensate
/// frame `t` to the pose of frame `t+k` with each method and score against
/// the recorded frame `t+k`. Image metrics (PSNR, MS-SSIM) are computed on
/// the full inpainted frame; depth metrics compare the rendered depth with
/// the recorded target depth over jointly valid pixels.
pub fn run_offline_eval(
    source: &DepthSource,
    delays: &[usize],
    methods: &[Method],
    poses: PoseSource,
    cfg: &PipelineConfig,
) -> Result<Vec<EvalRow>, PipelineError> {
    cfg.validate()?;
    let frame_count = source.frame_count();
    let max_delay = delays.iter().copied().max().unwrap_or(0);
    if frame_count <= max_delay {
        return Err(PipelineError::SequenceTooShort {
            frames: frame_count,
            needed: max_delay + 1,
        });
    }
    let intr = source.intrinsics();
    let sequence = source.name();

    let mut rows = Vec::new();
    for t in 0..frame_count - max_delay {
        let src = load_frame(source, t)?;
        for &k in delays {
            let gt = load_frame(source, t + k)?;
            let dst_pose = match poses {
                PoseSource::GroundTruth => gt.pose,
                PoseSource::Predicted(commands) => {
                    let predicted = predict(
                        camera_to_planar(&src.pose, &cfg.kinematics),
                        src.timestamp,
                        &commands.snapshot_until(gt.timestamp),
                        gt.timestamp,
                        &cfg.kinematics,
                    );
                    camera_pose(&predicted.pose, &cfg.kinematics)
                }
            };
            for method in methods {
                let cell_cfg = PipelineConfig { method: *method, ..cfg.clone() };
                let start = Instant::now();
                let (compensated, _) = render_with_method(&src, &dst_pose, &intr, &cell_cfg)?;
                let render_ms = start.elapsed().as_secs_f64() * 1e3;

                let psnr_db = psnr(&compensated.image, &gt.image, None)?;
                let ms_ssim = ms_ssim(&compensated.image, &gt.image)?;
                let (abs_rel, delta1, si) = match &compensated.rendered_depth {
                    Some(rendered_depth) => {
                        match depth_metrics(rendered_depth, &gt.depth) {
                            Ok((abs_rel, delta1)) => {
                                let si =
                                    si_loss(rendered_depth, &gt.depth, SI_LOSS_DEFAULT_LAMBDA)?;
                                (Some(abs_rel), Some(delta1), Some(si))
                            }
                            // A fully-holed render has no joint support;
                            // report the image metrics and skip depth.
                            Err(MetricsError::EmptyJointMask) => (None, None, None),
                            Err(e) => return Err(e.into()),
                        }
                    }
                    None => (None, None, None),
                };
                rows.push(EvalRow {
                    sequence: sequence.clone(),
                    frame_index: t,
                    delay_steps: k,
                    method: method.name().to_string(),
                    psnr_db,
                    ms_ssim,
                    abs_rel,
                    delta1,
                    si_loss: si,
                    hole_fraction: compensated.hole_fraction,
                    render_ms,
                });
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the offline-evaluation table.
pub fn write_metrics_csv(path: &Path, rows: &[EvalRow]) -> Result<(), crate::io::IoError> {
    let file = File::create(path)
        .map_err(|e| crate::io::IoError::Io { path: path.into(), source: e })?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| -> Result<(), crate::io::IoError> {
        writeln!(w, "{line}")
            .map_err(|e| crate::io::IoError::Io { path: path.into(), source: e })
    };
    emit("sequence,frame,delay_steps,method,psnr_db,ms_ssim,abs_rel,delta1,si_loss,hole_fraction,render_ms".into())?;
    for r in rows {
        emit(format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sequence,
            r.frame_index,
            r.delay_steps,
            r.method,
            r.psnr_db,
            r.ms_ssim,
            opt(r.abs_rel),
            opt(r.delta1),
            opt(r.si_loss),
            r.hole_fraction,
            r.render_ms,
        ))?;
    }
    Ok(())
}

/// Writes the per-tick live-run log.
pub fn write_frame_log_csv(path: &Path, log: &[FrameRecord]) -> Result<(), crate::io::IoError> {
    let file = File::create(path)
        .map_err(|e| crate::io::IoError::Io { path: path.into(), source: e })?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| -> Result<(), crate::io::IoError> {
        writeln!(w, "{line}")
            .map_err(|e| crate::io::IoError::Io { path: path.into(), source: e })
    };
    emit("tick,display_time,placeholder,frame_index,capture_time,arrival_time,effective_latency,pred_x,pred_y,pred_theta,command_starved,hole_fraction,overrun,depth_ms,render_ms,inpaint_ms,total_ms".into())?;
    for r in log {
        let (frame_index, capture, arrival, latency) = match &r.source {
            Some(s) => (
                s.frame_index.to_string(),
                s.capture_time.to_string(),
                s.arrival_time.to_string(),
                s.effective_latency.to_string(),
            ),
            None => Default::default(),
        };
        let (px, py, ptheta) = match &r.predicted_pose {
            Some(p) => (p.x.to_string(), p.y.to_string(), p.theta.to_string()),
            None => Default::default(),
        };
        emit(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tick,
            r.display_time,
            r.source.is_none(),
            frame_index,
            capture,
            arrival,
            latency,
            px,
            py,
            ptheta,
            r.command_starved,
            r.hole_fraction,
            r.overrun,
            r.depth_ms,
            r.render_ms,
            r.inpaint_ms,
            r.total_ms,
        ))?;
    }
    Ok(())
}
