//! Sequence bundles on disk.
//!
//! A recorded (or synthesized) sequence lives in one directory:
//!
//! ```text
//! <root>/
//!   manifest.json      camera intrinsics, frame rate, depth range, counts
//!   rgb/000000.png     8-bit RGB frames
//!   depth/000000.pfm   float32 depth, metric, +inf at invalid pixels
//!   poses.csv          timestamp_s + row-major [R|t] per frame
//!   commands.csv       timestamp_s, v, omega
//! ```
//!
//! Everything is either plain text or a bog-standard raster format, so a
//! bundle can be inspected, diffed, and regenerated without a binary container
//! dependency. Depth goes to PFM rather than 16-bit PNG because quantizing a
//! 0.2–20 m range to 65k steps is too coarse near the far end; PFM keeps the
//! full float32 value.
//!
//! [`BundleWriter`] streams frames out; [`SequenceBundle`] opens a directory,
//! validates that every file the manifest promises actually exists, and reads
//! frames back with the manifest's depth range applied.

use std::fs::{self, File};
use std::io::{BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthMap, ImageBuffer, RigidPose, INVALID_DEPTH};
use crate::kinematics::{CommandBuffer, VelocityCommand};

/// Errors from reading or writing sequence bundles.
#[derive(Debug, Error)]
pub enum IoError {
    /// Underlying filesystem failure (open, create, read, write).
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file exists but its contents do not parse as the expected format.
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    /// The manifest promises a file that is not on disk.
    #[error("manifest references missing file {path}")]
    MissingFile { path: PathBuf },
    /// Frame index past the end of the sequence.
    #[error("frame index {index} out of range: sequence has {count} frames")]
    FrameOutOfRange { index: usize, count: usize },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, reason: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), reason: reason.into() }
    }
}

/// Declared sensor depth range; values outside it are invalidated on load,
/// never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

/// Default declared range matching a typical stereo depth sensor.
pub const DEFAULT_DEPTH_RANGE: DepthRange = DepthRange { min: 0.2, max: 20.0 };

/// Which frame the pose log describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseFrame {
    /// Poses are camera-to-world directly.
    Camera,
    /// Poses are robot-base-to-world; compose with the camera mount to get
    /// camera poses.
    BaseWithMount,
}

/// `manifest.json`: everything a reader needs to interpret the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    /// Capture rate in Hz.
    pub frame_rate: f64,
    pub pose_frame: PoseFrame,
    pub depth_range: DepthRange,
    pub frame_count: usize,
    /// Printf-style pattern with a `%06d` frame-index placeholder,
    /// relative to the bundle root.
    pub rgb_pattern: String,
    /// Same, for depth maps.
    pub depth_pattern: String,
}

/// Relative path of the manifest inside a bundle.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Relative path of the pose log inside a bundle.
pub const POSES_FILE: &str = "poses.csv";
/// Relative path of the command log inside a bundle.
pub const COMMANDS_FILE: &str = "commands.csv";

impl SequenceManifest {
    /// Standard manifest with the conventional `rgb/` and `depth/` layout.
    pub fn new(
        name: impl Into<String>,
        intrinsics: CameraIntrinsics,
        frame_rate: f64,
        frame_count: usize,
    ) -> Self {
        Self {
            name: name.into(),
            intrinsics,
            frame_rate,
            pose_frame: PoseFrame::Camera,
            depth_range: DEFAULT_DEPTH_RANGE,
            frame_count,
            rgb_pattern: "rgb/%06d.png".to_string(),
            depth_pattern: "depth/%06d.pfm".to_string(),
        }
    }

    /// Internal consistency checks that need no filesystem access.
    fn validate(&self, path: &Path) -> Result<(), IoError> {
        if !(self.frame_rate > 0.0) {
            return Err(IoError::format(
                path,
                format!("frame_rate must be positive, got {}", self.frame_rate),
            ));
        }
        if !(self.depth_range.min < self.depth_range.max) {
            return Err(IoError::format(
                path,
                format!(
                    "depth_range.min ({}) must be below depth_range.max ({})",
                    self.depth_range.min, self.depth_range.max
                ),
            ));
        }
        for pattern in [&self.rgb_pattern, &self.depth_pattern] {
            if !pattern.contains(INDEX_TOKEN) {
                return Err(IoError::format(
                    path,
                    format!("file pattern {pattern:?} lacks the {INDEX_TOKEN} placeholder"),
                ));
            }
        }
        Ok(())
    }
}

const INDEX_TOKEN: &str = "%06d";

/// Expands a manifest file pattern for one frame index.
fn frame_path(root: &Path, pattern: &str, index: usize) -> PathBuf {
    root.join(pattern.replace(INDEX_TOKEN, &format!("{index:06}")))
}

// ---------------------------------------------------------------------------
// PFM depth maps
// ---------------------------------------------------------------------------

/// Writes a depth map as a grayscale PFM (`Pf`), float32 little-endian.
///
/// PFM stores scanlines bottom-up; the negative scale in the header declares
/// little-endian byte order. Invalid pixels are stored as `+inf`, which
/// float32 represents exactly, so validity round-trips.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| IoError::io(path, e))?);
    let (width, height) = (depth.width(), depth.height());
    write!(w, "Pf\n{width} {height}\n-1.0\n").map_err(|e| IoError::io(path, e))?;
    let mut row = vec![0u8; width as usize * 4];
    for r in (0..height).rev() {
        for c in 0..width {
            let v = depth.get(c, r) as f32;
            row[c as usize * 4..c as usize * 4 + 4].copy_from_slice(&v.to_le_bytes());
        }
        w.write_all(&row).map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Advances past one newline-terminated PFM header line and returns it
/// trimmed.
fn pfm_header_line<'a>(
    bytes: &'a [u8],
    offset: &mut usize,
    path: &Path,
) -> Result<&'a str, IoError> {
    let start = *offset;
    while *offset < bytes.len() && bytes[*offset] != b'\n' {
        *offset += 1;
    }
    if *offset >= bytes.len() {
        return Err(IoError::format(path, "truncated PFM header"));
    }
    let line = std::str::from_utf8(&bytes[start..*offset])
        .map_err(|_| IoError::format(path, "non-UTF-8 PFM header"))?;
    *offset += 1; // past the newline
    Ok(line.trim())
}

/// Reads a grayscale PFM into a depth map. Accepts either byte order (the
/// header scale's sign declares it). Non-finite and non-positive samples come
/// back as invalid pixels.
pub fn read_pfm(path: &Path) -> Result<DepthMap, IoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| IoError::io(path, e))?;

    // Header: three newline-terminated lines — type, "width height", scale.
    let mut offset = 0;
    let kind = pfm_header_line(&bytes, &mut offset, path)?;
    if kind != "Pf" {
        return Err(IoError::format(
            path,
            format!("expected grayscale PFM magic \"Pf\", got {kind:?}"),
        ));
    }
    let dims = pfm_header_line(&bytes, &mut offset, path)?;
    let mut parts = dims.split_whitespace();
    let (width, height) = match (parts.next(), parts.next(), parts.next()) {
        (Some(w), Some(h), None) => {
            let w: u32 = w
                .parse()
                .map_err(|_| IoError::format(path, format!("bad PFM width {w:?}")))?;
            let h: u32 = h
                .parse()
                .map_err(|_| IoError::format(path, format!("bad PFM height {h:?}")))?;
            (w, h)
        }
        _ => return Err(IoError::format(path, format!("bad PFM dimension line {dims:?}"))),
    };
    let scale: f64 = pfm_header_line(&bytes, &mut offset, path)?
        .parse()
        .map_err(|_| IoError::format(path, "bad PFM scale line"))?;
    let little_endian = scale < 0.0;

    let n = width as usize * height as usize;
    let data = &bytes[offset..];
    if data.len() < n * 4 {
        return Err(IoError::format(
            path,
            format!("PFM payload holds {} bytes, needs {}", data.len(), n * 4),
        ));
    }

    // Scanlines are stored bottom-up; flip while decoding.
    let mut values = vec![INVALID_DEPTH; n];
    for r in 0..height as usize {
        let src_row = height as usize - 1 - r;
        for c in 0..width as usize {
            let at = (src_row * width as usize + c) * 4;
            let raw: [u8; 4] = data[at..at + 4].try_into().expect("bounds checked above");
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            values[r * width as usize + c] = v as f64;
        }
    }
    // from_values sanitizes non-finite / non-positive samples to the invalid
    // sentinel, which covers PFM files using 0 or NaN for holes.
    Ok(DepthMap::from_values(width, height, values))
}

// ---------------------------------------------------------------------------
// PNG images
// ---------------------------------------------------------------------------

/// Writes an image as 8-bit RGB PNG. Channels are clamped to `[0, 1]` and
/// quantized with round-to-nearest.
pub fn write_png(path: &Path, image: &ImageBuffer) -> Result<(), IoError> {
    let quantized: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let rgb = image::RgbImage::from_raw(image.width(), image.height(), quantized)
        .expect("buffer length matches dimensions by construction");
    rgb.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::format(path, format!("PNG encode failed: {e}")))
}

/// Reads an 8-bit RGB PNG back into a float image (channel / 255).
pub fn read_png(path: &Path) -> Result<ImageBuffer, IoError> {
    let img = image::open(path)
        .map_err(|e| IoError::format(path, format!("PNG decode failed: {e}")))?
        .into_rgb8();
    let data: Vec<f32> = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Ok(ImageBuffer::from_raw(img.width(), img.height(), data))
}

// ---------------------------------------------------------------------------
// CSV logs
// ---------------------------------------------------------------------------

// Pose and command logs are fixed-schema numeric CSV. Floats are written with
// Rust's shortest-round-trip formatting, so write→read reproduces every f64
// bit-exactly.

const POSES_HEADER: &str =
    "timestamp_s,m00,m01,m02,m03,m10,m11,m12,m13,m20,m21,m22,m23";
const COMMANDS_HEADER: &str = "timestamp_s,v,omega";

fn write_poses(path: &Path, poses: &[(f64, RigidPose)]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| IoError::io(path, e))?);
    writeln!(w, "{POSES_HEADER}").map_err(|e| IoError::io(path, e))?;
    for (t, pose) in poses {
        write!(w, "{t}").map_err(|e| IoError::io(path, e))?;
        for v in pose.to_rows() {
            write!(w, ",{v}").map_err(|e| IoError::io(path, e))?;
        }
        writeln!(w).map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Splits one CSV record into exactly `n` float fields.
fn parse_floats(path: &Path, line_no: usize, line: &str, n: usize) -> Result<Vec<f64>, IoError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(IoError::format(
            path,
            format!("line {line_no}: expected {n} fields, got {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| {
                IoError::format(path, format!("line {line_no}: bad float {f:?}"))
            })
        })
        .collect()
}

fn read_poses(path: &Path) -> Result<Vec<(f64, RigidPose)>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != POSES_HEADER {
                return Err(IoError::format(path, format!("bad header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_floats(path, i + 1, line, 13)?;
        let rows: [f64; 12] = f[1..].try_into().expect("length checked");
        let pose = RigidPose::from_rows(&rows)
            .map_err(|e| IoError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push((f[0], pose));
    }
    Ok(out)
}

fn write_commands(path: &Path, commands: &[VelocityCommand]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| IoError::io(path, e))?);
    writeln!(w, "{COMMANDS_HEADER}").map_err(|e| IoError::io(path, e))?;
    for c in commands {
        writeln!(w, "{},{},{}", c.timestamp, c.v, c.omega).map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

fn read_commands(path: &Path) -> Result<CommandBuffer, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut commands = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != COMMANDS_HEADER {
                return Err(IoError::format(path, format!("bad header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_floats(path, i + 1, line, 3)?;
        commands.push(VelocityCommand { timestamp: f[0], v: f[1], omega: f[2] });
    }
    CommandBuffer::new(commands).map_err(|e| IoError::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Bundle writer / reader
// ---------------------------------------------------------------------------

/// Streams a sequence bundle to disk frame by frame, then closes it out with
/// the pose log, command log, and manifest.
#[derive(Debug)]
pub struct BundleWriter {
    root: PathBuf,
    manifest: SequenceManifest,
    poses: Vec<(f64, RigidPose)>,
}

impl BundleWriter {
    /// Creates the directory layout. Existing files are overwritten.
    pub fn create(root: &Path, manifest: SequenceManifest) -> Result<Self, IoError> {
        manifest.validate(&root.join(MANIFEST_FILE))?;
        for pattern in [&manifest.rgb_pattern, &manifest.depth_pattern] {
            let probe = frame_path(root, pattern, 0);
            if let Some(dir) = probe.parent() {
                fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
            }
        }
        Ok(Self { root: root.to_path_buf(), manifest, poses: Vec::new() })
    }

    /// Appends one frame. Frames must arrive in index order starting at 0.
    pub fn write_frame(
        &mut self,
        image: &ImageBuffer,
        depth: &DepthMap,
        pose: &RigidPose,
        timestamp: f64,
    ) -> Result<(), IoError> {
        let index = self.poses.len();
        write_png(&frame_path(&self.root, &self.manifest.rgb_pattern, index), image)?;
        write_pfm(&frame_path(&self.root, &self.manifest.depth_pattern, index), depth)?;
        self.poses.push((timestamp, *pose));
        Ok(())
    }

    /// Writes the logs and manifest. Fails if the frame count does not match
    /// what the manifest declares.
    pub fn finish(mut self, commands: &CommandBuffer) -> Result<(), IoError> {
        let manifest_path = self.root.join(MANIFEST_FILE);
        if self.poses.len() != self.manifest.frame_count {
            if self.manifest.frame_count != 0 {
                return Err(IoError::format(
                    &manifest_path,
                    format!(
                        "manifest declares {} frames but {} were written",
                        self.manifest.frame_count,
                        self.poses.len()
                    ),
                ));
            }
            // A zero count in the template means "fill in from what arrives".
            self.manifest.frame_count = self.poses.len();
        }
        write_poses(&self.root.join(POSES_FILE), &self.poses)?;
        write_commands(&self.root.join(COMMANDS_FILE), commands.commands())?;
        let json = serde_json::to_string_pretty(&self.manifest)
            .expect("manifest serialization cannot fail");
        fs::write(&manifest_path, json + "\n").map_err(|e| IoError::io(&manifest_path, e))
    }
}

/// An opened, validated sequence bundle. Construction checks that every file
/// the manifest references is present; reads decode lazily per frame.
///
/// Immutable after opening, so shared references are thread-safe.
#[derive(Debug, Clone)]
pub struct SequenceBundle {
    root: PathBuf,
    manifest: SequenceManifest,
    poses: Vec<(f64, RigidPose)>,
    commands: CommandBuffer,
}

impl SequenceBundle {
    /// Opens `root`, reads manifest and logs, and verifies that every frame
    /// file exists and the log row counts match the declared frame count.
    pub fn open(root: &Path) -> Result<Self, IoError> {
        let manifest_path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| IoError::io(&manifest_path, e))?;
        let manifest: SequenceManifest = serde_json::from_str(&text)
            .map_err(|e| IoError::format(&manifest_path, e.to_string()))?;
        manifest.validate(&manifest_path)?;

        let poses = read_poses(&root.join(POSES_FILE))?;
        if poses.len() != manifest.frame_count {
            return Err(IoError::format(
                &root.join(POSES_FILE),
                format!(
                    "{} pose rows but manifest declares {} frames",
                    poses.len(),
                    manifest.frame_count
                ),
            ));
        }
        let commands = read_commands(&root.join(COMMANDS_FILE))?;

        for index in 0..manifest.frame_count {
            for pattern in [&manifest.rgb_pattern, &manifest.depth_pattern] {
                let path = frame_path(root, pattern, index);
                if !path.is_file() {
                    return Err(IoError::MissingFile { path });
                }
            }
        }

        Ok(Self { root: root.to_path_buf(), manifest, poses, commands })
    }

    pub fn manifest(&self) -> &SequenceManifest {
        &self.manifest
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Commands recorded alongside the sequence.
    pub fn commands(&self) -> &CommandBuffer {
        &self.commands
    }

    fn check_index(&self, index: usize) -> Result<(), IoError> {
        if index >= self.manifest.frame_count {
            return Err(IoError::FrameOutOfRange { index, count: self.manifest.frame_count });
        }
        Ok(())
    }

    /// Capture timestamp of frame `index`.
    pub fn timestamp(&self, index: usize) -> Result<f64, IoError> {
        self.check_index(index)?;
        Ok(self.poses[index].0)
    }

    /// Recorded pose of frame `index` (interpretation per `manifest.pose_frame`).
    pub fn pose(&self, index: usize) -> Result<RigidPose, IoError> {
        self.check_index(index)?;
        Ok(self.poses[index].1)
    }

    /// Decodes the RGB and depth files for frame `index`. Depth values outside
    /// the manifest's declared range are marked invalid (never clamped), and
    /// decoded rasters must match the manifest intrinsics' dimensions.
    pub fn read_frame(&self, index: usize) -> Result<(ImageBuffer, DepthMap), IoError> {
        self.check_index(index)?;
        let rgb_path = frame_path(&self.root, &self.manifest.rgb_pattern, index);
        let image = read_png(&rgb_path)?;
        let intr = &self.manifest.intrinsics;
        if image.width() != intr.width || image.height() != intr.height {
            return Err(IoError::format(
                &rgb_path,
                format!(
                    "image is {}x{} but manifest declares {}x{}",
                    image.width(),
                    image.height(),
                    intr.width,
                    intr.height
                ),
            ));
        }
        let depth_path = frame_path(&self.root, &self.manifest.depth_pattern, index);
        let mut depth = read_pfm(&depth_path)?;
        if depth.width() != intr.width || depth.height() != intr.height {
            return Err(IoError::format(
                &depth_path,
                format!(
                    "depth map is {}x{} but manifest declares {}x{}",
                    depth.width(),
                    depth.height(),
                    intr.width,
                    intr.height
                ),
            ));
        }
        depth.apply_range(self.manifest.depth_range.min, self.manifest.depth_range.max);
        Ok((image, depth))
    }
}

// ---------------------------------------------------------------------------
// Reproducibility header
// ---------------------------------------------------------------------------

/// File name of the per-run reproducibility record.
pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Serializes the full run configuration (including seeds) next to a run's
/// outputs so any result can be regenerated from its directory alone.
pub fn write_run_config<T: Serialize>(dir: &Path, config: &T) -> Result<(), IoError> {
    let path = dir.join(RUN_CONFIG_FILE);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| IoError::format(&path, format!("config serialization failed: {e}")))?;
    fs::write(&path, json + "\n").map_err(|e| IoError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::TempDir;

    fn random_depth(width: u32, height: u32, rng: &mut ChaCha8Rng) -> DepthMap {
        let values: Vec<f64> = (0..width as usize * height as usize)
            .map(|_| {
                if rng.random::<f64>() < 0.15 {
                    INVALID_DEPTH
                } else {
                    // Store an exactly f32-representable value so the first
                    // write is already lossless.
                    rng.random_range(0.3..18.0_f64) as f32 as f64
                }
            })
            .collect();
        DepthMap::from_values(width, height, values)
    }

    fn random_image(width: u32, height: u32, rng: &mut ChaCha8Rng) -> ImageBuffer {
        // On the 8-bit grid so PNG quantization is exact.
        let data: Vec<f32> = (0..width as usize * height as usize * 3)
            .map(|_| rng.random_range(0..=255u32) as f32 / 255.0)
            .collect();
        ImageBuffer::from_raw(width, height, data)
    }

    #[test]
    fn pfm_round_trip_is_bit_identical() {
        let tmp = TempDir::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for i in 0..5 {
            let depth = random_depth(37, 23, &mut rng);
            let path = tmp.path().join(format!("d{i}.pfm"));
            write_pfm(&path, &depth).unwrap();
            let back = read_pfm(&path).unwrap();
            assert_eq!(back, depth, "fixture {i}");
            // Second cycle must be a fixed point too.
            write_pfm(&path, &back).unwrap();
            assert_eq!(read_pfm(&path).unwrap(), back);
        }
    }

    #[test]
    fn pfm_sanitizes_zero_and_nan_samples() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("weird.pfm");
        // Hand-build a 2x1 file with a zero and a NaN sample.
        let mut bytes = b"Pf\n2 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let depth = read_pfm(&path).unwrap();
        assert!(!depth.is_valid(0, 0));
        assert!(!depth.is_valid(1, 0));
    }

    #[test]
    fn pfm_rejects_truncation_and_bad_magic() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("bad.pfm");

        fs::write(&path, b"PF\n2 2\n-1.0\n").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("Pf"), "{err}");

        fs::write(&path, b"Pf\n2 2\n-1.0\n\x00\x00").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }

    #[test]
    fn png_round_trip_is_bit_identical_on_the_8bit_grid() {
        let tmp = TempDir::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let image = random_image(41, 17, &mut rng);
        let path = tmp.path().join("img.png");
        write_png(&path, &image).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back, image);
    }

    #[test]
    fn pose_log_round_trips_f64_exactly() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("poses.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let poses: Vec<(f64, RigidPose)> = (0..20)
            .map(|k| {
                let axis = nalgebra::Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let pose = RigidPose::from_axis_angle(
                    &axis,
                    rng.random_range(-3.0..3.0),
                    nalgebra::Vector3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ),
                );
                (k as f64 / 30.0, pose)
            })
            .collect();
        write_poses(&path, &poses).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for ((t0, p0), (t1, p1)) in poses.iter().zip(&back) {
            assert_eq!(t0.to_bits(), t1.to_bits());
            assert_eq!(p0.to_rows().map(f64::to_bits), p1.to_rows().map(f64::to_bits));
        }
    }

    #[test]
    fn command_log_round_trips() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("commands.csv");
        let commands = vec![
            VelocityCommand { timestamp: 0.0, v: 0.4, omega: 0.1 },
            VelocityCommand { timestamp: 1.5, v: 0.45, omega: -0.12 },
            VelocityCommand { timestamp: 3.0, v: 0.5, omega: 0.033333333333333333 },
        ];
        write_commands(&path, &commands).unwrap();
        let back = read_commands(&path).unwrap();
        assert_eq!(back.commands(), &commands[..]);
    }

    #[test]
    fn manifest_rejects_bad_pattern_and_bad_range() {
        let tmp = TempDir::new().unwrap();
        let intr = CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 32.0, cy: 24.0, width: 64, height: 48 };

        let mut manifest = SequenceManifest::new("t", intr, 30.0, 1);
        manifest.rgb_pattern = "rgb/frame.png".into();
        let err = BundleWriter::create(tmp.path(), manifest).unwrap_err();
        assert!(err.to_string().contains("%06d"), "{err}");

        let mut manifest = SequenceManifest::new("t", intr, 30.0, 1);
        manifest.depth_range = DepthRange { min: 5.0, max: 1.0 };
        let err = BundleWriter::create(tmp.path(), manifest).unwrap_err();
        assert!(err.to_string().contains("depth_range"), "{err}");
    }

    fn write_tiny_bundle(root: &Path, frames: usize) -> SequenceManifest {
        let intr = CameraIntrinsics { fx: 40.0, fy: 40.0, cx: 16.0, cy: 12.0, width: 32, height: 24 };
        let manifest = SequenceManifest::new("tiny", intr, 30.0, frames);
        let mut writer = BundleWriter::create(root, manifest.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..frames {
            let image = random_image(32, 24, &mut rng);
            let depth = random_depth(32, 24, &mut rng);
            let pose = RigidPose::from_translation(0.1 * k as f64, 0.0, 0.02 * k as f64);
            writer.write_frame(&image, &depth, &pose, k as f64 / 30.0).unwrap();
        }
        let commands = CommandBuffer::new(vec![VelocityCommand {
            timestamp: 0.0,
            v: 0.3,
            omega: 0.0,
        }])
        .unwrap();
        writer.finish(&commands).unwrap();
        manifest
    }

    #[test]
    fn bundle_round_trip_is_bit_identical() {
        let tmp = TempDir::new().unwrap();
        write_tiny_bundle(tmp.path(), 4);
        let bundle = SequenceBundle::open(tmp.path()).unwrap();
        assert_eq!(bundle.frame_count(), 4);

        // Copy through memory into a second bundle; both reads must agree
        // bit for bit.
        let copy_dir = TempDir::new().unwrap();
        let mut writer =
            BundleWriter::create(copy_dir.path(), bundle.manifest().clone()).unwrap();
        for k in 0..bundle.frame_count() {
            let (image, depth) = bundle.read_frame(k).unwrap();
            writer
                .write_frame(&image, &depth, &bundle.pose(k).unwrap(), bundle.timestamp(k).unwrap())
                .unwrap();
        }
        writer.finish(bundle.commands()).unwrap();

        let copy = SequenceBundle::open(copy_dir.path()).unwrap();
        for k in 0..bundle.frame_count() {
            let (i0, d0) = bundle.read_frame(k).unwrap();
            let (i1, d1) = copy.read_frame(k).unwrap();
            assert_eq!(i0, i1, "frame {k} image");
            assert_eq!(d0, d1, "frame {k} depth");
            assert_eq!(
                bundle.pose(k).unwrap().to_rows().map(f64::to_bits),
                copy.pose(k).unwrap().to_rows().map(f64::to_bits),
                "frame {k} pose"
            );
        }
    }

    #[test]
    fn open_reports_missing_frame_file_by_path() {
        let tmp = TempDir::new().unwrap();
        write_tiny_bundle(tmp.path(), 3);
        let victim = tmp.path().join("depth/000001.pfm");
        fs::remove_file(&victim).unwrap();
        let err = SequenceBundle::open(tmp.path()).unwrap_err();
        match &err {
            IoError::MissingFile { path } => assert_eq!(path, &victim),
            other => panic!("expected MissingFile, got {other}"),
        }
        assert!(err.to_string().contains("000001.pfm"));
    }

    #[test]
    fn open_rejects_pose_count_mismatch() {
        let tmp = TempDir::new().unwrap();
        write_tiny_bundle(tmp.path(), 3);
        // Drop the last pose row.
        let path = tmp.path().join(POSES_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let shortened: Vec<&str> = text.lines().take(3).collect();
        fs::write(&path, shortened.join("\n") + "\n").unwrap();
        let err = SequenceBundle::open(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("pose rows"), "{err}");
    }

    #[test]
    fn read_frame_applies_declared_depth_range() {
        let tmp = TempDir::new().unwrap();
        let intr = CameraIntrinsics { fx: 4.0, fy: 4.0, cx: 1.0, cy: 1.0, width: 2, height: 2 };
        let manifest = SequenceManifest::new("range", intr, 30.0, 1);
        let mut writer = BundleWriter::create(tmp.path(), manifest).unwrap();
        // 25.0 exceeds the declared 20 m max; 0.1 is under the 0.2 m min.
        let depth = DepthMap::from_values(2, 2, vec![25.0, 5.0, 0.1, INVALID_DEPTH]);
        let image = ImageBuffer::filled(2, 2, [0.5, 0.5, 0.5]);
        writer.write_frame(&image, &depth, &RigidPose::identity(), 0.0).unwrap();
        writer.finish(&CommandBuffer::new(vec![]).unwrap()).unwrap();

        let bundle = SequenceBundle::open(tmp.path()).unwrap();
        let (_, loaded) = bundle.read_frame(0).unwrap();
        assert!(!loaded.is_valid(0, 0), "25 m is past the declared max");
        assert!(loaded.is_valid(1, 0));
        assert_eq!(loaded.get(1, 0), 5.0);
        assert!(!loaded.is_valid(0, 1), "0.1 m is under the declared min");
        assert!(!loaded.is_valid(1, 1));
    }

    #[test]
    fn frame_index_out_of_range_is_structured() {
        let tmp = TempDir::new().unwrap();
        write_tiny_bundle(tmp.path(), 2);
        let bundle = SequenceBundle::open(tmp.path()).unwrap();
        match bundle.read_frame(2) {
            Err(IoError::FrameOutOfRange { index: 2, count: 2 }) => {}
            other => panic!("expected FrameOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn run_config_writes_pretty_json() {
        let tmp = TempDir::new().unwrap();
        #[derive(Serialize)]
        struct Cfg {
            seed: u64,
            delay_ms: f64,
        }
        write_run_config(tmp.path(), &Cfg { seed: 7, delay_ms: 250.0 }).unwrap();
        let text = fs::read_to_string(tmp.path().join(RUN_CONFIG_FILE)).unwrap();
        assert!(text.contains("\"seed\": 7"));
        assert!(text.contains("\"delay_ms\": 250.0"));
    }
}
