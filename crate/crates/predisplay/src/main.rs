//! Command-line front end: synthesize sequences, render single compensated
//! frames, run the offline evaluation grid, emulate a live link, and measure
//! rasterizer throughput.
//!
//! Exit codes: 0 success; 1 usage error (bad flags/values); 2 data error
//! (missing or malformed inputs, render failures); 3 bench budget exceeded.
//! Every run writes a `run_config.json` reproducibility header (the full
//! effective configuration including seeds) alongside its outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use predisplay::depth::{
    load_frame, plane_for_bundle_name, write_preset_bundle, DepthSource, ScenePreset,
};
use predisplay::geometry::ImageBuffer;
use predisplay::inpaint::{InpaintConfig, DIFFUSION_DEFAULT_ITERATIONS};
use predisplay::io::{write_png, write_run_config, SequenceBundle};
use predisplay::pipeline::{
    compensate_frame, run_live, run_offline_eval, write_frame_log_csv, write_metrics_csv,
    Method, NetworkConditions, PipelineConfig, PoseSource,
};
use predisplay::splat::render_compensated;

#[derive(Parser)]
#[command(
    name = "predisplay",
    version,
    about = "Frame delay compensation for teleoperated robots: re-render stale video from predicted future viewpoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence bundle by ray casting a preset scene
    /// along a scripted, seeded trajectory.
    Synth(SynthArgs),
    /// Compensate a single frame to a future recorded pose and write the
    /// image plus its hole mask.
    Render(RenderArgs),
    /// Score every (frame, delay, method) cell of a sequence against the
    /// recorded future frames and write a metrics CSV.
    Evaluate(EvaluateArgs),
    /// Emulate a delayed, decimated live link and run the compensator at
    /// display cadence; writes per-tick frames and a log.
    Simulate(SimulateArgs),
    /// Measure compensated-render throughput across thread counts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene preset.
    #[arg(long, value_enum, default_value_t = SceneArg::Corridor)]
    scene: SceneArg,
    /// Number of frames to generate (at 30 Hz).
    #[arg(long, default_value_t = 60)]
    frames: usize,
    /// Trajectory script seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output bundle directory [default: ./<scene>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Sequence bundle directory.
    #[arg(long)]
    seq: PathBuf,
    /// Source frame index.
    #[arg(long)]
    frame: usize,
    /// Delay in frames: the target pose is the recorded pose of
    /// frame + delay.
    #[arg(long)]
    delay: usize,
    /// Compensation method. The homography plane comes from the bundle
    /// name (corridor → ground plane, frontal → frontal plane), falling
    /// back to the corridor ground plane.
    #[arg(long, value_enum, default_value_t = MethodArg::Pointcloud)]
    method: MethodArg,
    /// Softmax depth-blending temperature override.
    #[arg(long)]
    gamma: Option<f64>,
    /// Splat radius constant override.
    #[arg(long)]
    radius: Option<f64>,
    /// Hole-filling pass.
    #[arg(long, value_enum, default_value_t = InpaintArg::Pullpush)]
    inpaint: InpaintArg,
    /// Output directory.
    #[arg(long, default_value = "render-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Sequence bundle directory.
    #[arg(long)]
    seq: PathBuf,
    /// Delays in frames, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    delays: Vec<usize>,
    /// Methods to score, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "pointcloud,homography,cropscale")]
    methods: Vec<MethodArg>,
    /// Output CSV path.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sequence bundle directory.
    #[arg(long)]
    seq: PathBuf,
    /// One-way link delay, milliseconds.
    #[arg(long = "delay-ms", default_value_t = 250.0)]
    delay_ms: f64,
    /// Decimation: transmit every skip-th frame (5 → 6 FPS from 30 Hz).
    #[arg(long, default_value_t = 5)]
    skip: usize,
    /// Link randomness seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (frames/ + frame_log.csv).
    #[arg(long, default_value = "simulate-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sequence bundle directory; frame 0 is the workload.
    #[arg(long)]
    seq: PathBuf,
    /// Thread counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    threads: Vec<usize>,
    /// Fail (exit 3) if the best median render+fill time exceeds this
    /// budget in milliseconds.
    #[arg(long = "budget-ms")]
    budget_ms: Option<f64>,
    /// Timed repetitions per thread count.
    #[arg(long, default_value_t = 9)]
    reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SceneArg {
    Corridor,
    Frontal,
}

impl SceneArg {
    fn preset(self) -> ScenePreset {
        match self {
            SceneArg::Corridor => ScenePreset::Corridor,
            SceneArg::Frontal => ScenePreset::Frontal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Pointcloud,
    Homography,
    Cropscale,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Pointcloud => "pointcloud",
            MethodArg::Homography => "homography",
            MethodArg::Cropscale => "cropscale",
        }
    }

    /// Binds the method to a concrete plane where one is needed.
    fn to_method(self, bundle_name: &str) -> Method {
        match self {
            MethodArg::Pointcloud => Method::Pointcloud,
            MethodArg::Cropscale => Method::CropScale,
            MethodArg::Homography => {
                let (normal, offset) = plane_for_bundle_name(bundle_name);
                Method::Homography { normal, offset }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum InpaintArg {
    /// Pyramid fill: fast, smooth.
    Pullpush,
    /// Iterative diffusion from the hole boundary.
    Diffusion,
    /// Leave holes showing the sentinel color.
    None,
}

impl InpaintArg {
    fn config(self) -> Option<InpaintConfig> {
        match self {
            InpaintArg::Pullpush => Some(InpaintConfig::PullPush),
            InpaintArg::Diffusion => Some(InpaintConfig::DiffusionFill {
                iterations: DIFFUSION_DEFAULT_ITERATIONS,
            }),
            InpaintArg::None => None,
        }
    }
}

/// Marker error for the bench budget so `main` can map it to exit code 3.
#[derive(Debug)]
struct BudgetExceeded {
    median_ms: f64,
    budget_ms: f64,
}

impl std::fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "median render time {:.2} ms exceeds the {:.2} ms budget",
            self.median_ms, self.budget_ms
        )
    }
}

impl std::error::Error for BudgetExceeded {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version arrive here too and are not errors.
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<BudgetExceeded>() => {
            eprintln!("bench: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Render(args) => render(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Simulate(args) => simulate(args),
        Command::Bench(args) => bench(args),
    }
}

const SYNTH_FRAME_RATE: f64 = 30.0;

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(args.scene.preset().name()));

    // The header deliberately omits the output path: it lives inside the
    // bundle, and equal generating configs must yield bit-identical bundles
    // wherever they are written.
    #[derive(Serialize)]
    struct Header {
        command: &'static str,
        scene: SceneArg,
        frames: usize,
        frame_rate: f64,
        seed: u64,
    }

    let bundle = write_preset_bundle(
        &out,
        args.scene.preset(),
        args.frames,
        SYNTH_FRAME_RATE,
        args.seed,
    )?;
    write_run_config(
        &out,
        &Header {
            command: "synth",
            scene: args.scene,
            frames: args.frames,
            frame_rate: SYNTH_FRAME_RATE,
            seed: args.seed,
        },
    )?;
    println!(
        "synth: wrote {} frames of '{}' to {}",
        bundle.frame_count(),
        bundle.manifest().name,
        out.display()
    );
    Ok(())
}

/// Pipeline config with the render-flag overrides applied.
fn config_from_flags(
    method: Method,
    gamma: Option<f64>,
    radius: Option<f64>,
    inpaint: Option<InpaintConfig>,
) -> PipelineConfig {
    let mut cfg = PipelineConfig { method, ..PipelineConfig::default() };
    if let Some(gamma) = gamma {
        cfg.splat.gamma = gamma;
    }
    if let Some(radius) = radius {
        cfg.splat.radius_constant = radius;
    }
    if let Some(inpaint) = inpaint {
        cfg.inpaint = inpaint;
    }
    cfg
}

fn render(args: RenderArgs) -> anyhow::Result<()> {
    let bundle = SequenceBundle::open(&args.seq)?;
    let name = bundle.manifest().name.clone();
    let source = DepthSource::FileDepth(bundle);
    let src = load_frame(&source, args.frame)?;
    let target_index = args.frame + args.delay;
    let dst = load_frame(&source, target_index)
        .with_context(|| format!("target frame {target_index} (frame + delay)"))?;

    let method = args.method.to_method(&name);
    let skip_fill = args.inpaint == InpaintArg::None;
    let cfg = config_from_flags(method, args.gamma, args.radius, args.inpaint.config());

    let intr = source.intrinsics();
    let compensated = if skip_fill {
        // Render without filling so the sentinel-colored holes stay visible.
        let rendered =
            render_compensated(&src.image, &src.depth, &intr, &src.pose, &dst.pose, &cfg.splat)?;
        predisplay::pipeline::CompensatedFrame {
            hole_fraction: rendered.hole_fraction(),
            image: rendered.image,
            holes: rendered.hole_mask,
            rendered_depth: Some(rendered.blended_depth),
        }
    } else {
        compensate_frame(&src, &dst.pose, &intr, &cfg)?
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_png(&args.out.join("compensated.png"), &compensated.image)?;
    let mask_image = ImageBuffer::from_fn(intr.width, intr.height, |c, r| {
        if compensated.holes.get(c, r) {
            [1.0, 1.0, 1.0]
        } else {
            [0.0, 0.0, 0.0]
        }
    });
    write_png(&args.out.join("holes.png"), &mask_image)?;

    #[derive(Serialize)]
    struct Header<'a> {
        command: &'a str,
        seq: &'a Path,
        frame: usize,
        delay: usize,
        inpaint: InpaintArg,
        pipeline: &'a PipelineConfig,
    }
    write_run_config(
        &args.out,
        &Header {
            command: "render",
            seq: &args.seq,
            frame: args.frame,
            delay: args.delay,
            inpaint: args.inpaint,
            pipeline: &cfg,
        },
    )?;
    println!(
        "render: frame {} → pose of frame {} via {} ({:.1}% holes) → {}",
        args.frame,
        target_index,
        cfg.method.name(),
        compensated.hole_fraction * 100.0,
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    anyhow::ensure!(!args.delays.is_empty(), "need at least one delay");
    anyhow::ensure!(!args.methods.is_empty(), "need at least one method");
    let bundle = SequenceBundle::open(&args.seq)?;
    let name = bundle.manifest().name.clone();
    let source = DepthSource::FileDepth(bundle);
    let methods: Vec<Method> = args.methods.iter().map(|m| m.to_method(&name)).collect();
    let cfg = PipelineConfig::default();

    let rows = run_offline_eval(&source, &args.delays, &methods, PoseSource::GroundTruth, &cfg)?;
    write_metrics_csv(&args.out, &rows)?;

    #[derive(Serialize)]
    struct Header<'a> {
        command: &'a str,
        seq: &'a Path,
        delays: &'a [usize],
        methods: &'a [MethodArg],
        pipeline: &'a PipelineConfig,
    }
    let header_dir = args.out.parent().filter(|p| !p.as_os_str().is_empty());
    write_run_config(
        header_dir.unwrap_or(Path::new(".")),
        &Header {
            command: "evaluate",
            seq: &args.seq,
            delays: &args.delays,
            methods: &args.methods,
            pipeline: &cfg,
        },
    )?;

    // Quick per-(method, delay) summary so the run is legible without
    // opening the CSV.
    let mut summary = String::new();
    for m in &args.methods {
        for &k in &args.delays {
            let (mut sum, mut count) = (0.0, 0usize);
            for row in rows.iter().filter(|r| r.delay_steps == k && r.method == m.name()) {
                sum += row.psnr_db;
                count += 1;
            }
            if count > 0 {
                let _ = writeln!(
                    summary,
                    "  {:<11} delay {:>2}: mean PSNR {:6.2} dB over {} frames",
                    m.name(),
                    k,
                    sum / count as f64,
                    count
                );
            }
        }
    }
    println!(
        "evaluate: {} rows → {}\n{}",
        rows.len(),
        args.out.display(),
        summary.trim_end()
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let bundle = SequenceBundle::open(&args.seq)?;
    let commands = bundle.commands().clone();
    let source = DepthSource::FileDepth(bundle);
    let cond = NetworkConditions {
        base_delay: args.delay_ms / 1e3,
        jitter_stddev: 0.0,
        skip: args.skip,
        drop_probability: 0.0,
        seed: args.seed,
    };
    let cfg = PipelineConfig::default();

    let frames_dir = args.out.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .with_context(|| format!("creating {}", frames_dir.display()))?;

    let log = run_live(&source, &commands, &cond, &cfg, |image, record| {
        let path = frames_dir.join(format!("{:06}.png", record.tick));
        write_png(&path, image).map_err(Into::into)
    })?;
    write_frame_log_csv(&args.out.join("frame_log.csv"), &log)?;

    #[derive(Serialize)]
    struct Header<'a> {
        command: &'a str,
        seq: &'a Path,
        network: &'a NetworkConditions,
        pipeline: &'a PipelineConfig,
    }
    write_run_config(
        &args.out,
        &Header { command: "simulate", seq: &args.seq, network: &cond, pipeline: &cfg },
    )?;

    let placeholders = log.iter().filter(|r| r.source.is_none()).count();
    let latencies: Vec<f64> = log
        .iter()
        .filter_map(|r| r.source.as_ref())
        .map(|s| s.effective_latency)
        .collect();
    let mean_latency =
        latencies.iter().sum::<f64>() / latencies.len().max(1) as f64;
    println!(
        "simulate: {} ticks ({} placeholders), mean effective latency {:.0} ms → {}",
        log.len(),
        placeholders,
        mean_latency * 1e3,
        args.out.display()
    );
    Ok(())
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    anyhow::ensure!(!args.threads.is_empty(), "need at least one thread count");
    anyhow::ensure!(args.reps >= 1, "need at least one repetition");
    let bundle = SequenceBundle::open(&args.seq)?;
    let source = DepthSource::FileDepth(bundle);
    let frame_count = source.frame_count();
    anyhow::ensure!(frame_count > 0, "empty sequence");
    let src = load_frame(&source, 0)?;
    // A representative look-ahead: the pose a few frames on, so the splats
    // actually move (an identity render would flatter the cache).
    let target = (frame_count - 1).min(5);
    let dst_pose = if target == 0 { src.pose } else { load_frame(&source, target)?.pose };
    let intr = source.intrinsics();
    let cfg = PipelineConfig::default();

    println!(
        "bench: {}x{} frame, {} splats, {} reps per thread count",
        intr.width,
        intr.height,
        src.depth.valid_count(),
        args.reps
    );
    let mut best_median = f64::INFINITY;
    let mut reference: Option<ImageBuffer> = None;
    let mut identical = true;
    let mut medians = Vec::new();
    for &threads in &args.threads {
        anyhow::ensure!(threads >= 1, "thread counts must be ≥ 1");
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        // One warm-up, then timed repetitions.
        let mut image = pool.install(|| compensate_frame(&src, &dst_pose, &intr, &cfg))?.image;
        let mut times = Vec::with_capacity(args.reps);
        for _ in 0..args.reps {
            let start = Instant::now();
            image = pool.install(|| compensate_frame(&src, &dst_pose, &intr, &cfg))?.image;
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        best_median = best_median.min(median);
        medians.push((threads, median));
        match &reference {
            None => reference = Some(image),
            Some(r) => identical &= *r == image,
        }
        println!(
            "  {threads:>2} threads: median {median:8.2} ms  (min {:.2}, max {:.2})",
            times[0],
            times[times.len() - 1]
        );
    }
    if let Some((t1, m1)) = medians.first() {
        if let Some((tn, mn)) = medians.last() {
            if t1 != tn {
                println!("  speedup {t1}→{tn} threads: {:.2}x", m1 / mn);
            }
        }
    }
    println!("  bit-identical output across thread counts: {identical}");

    #[derive(Serialize)]
    struct Header<'a> {
        command: &'a str,
        seq: &'a Path,
        threads: &'a [usize],
        reps: usize,
        budget_ms: Option<f64>,
        pipeline: &'a PipelineConfig,
    }
    // No output directory of its own: the report goes to stdout, so the
    // reproducibility record rides along in-band.
    println!(
        "  config: {}",
        serde_json::to_string(&Header {
            command: "bench",
            seq: &args.seq,
            threads: &args.threads,
            reps: args.reps,
            budget_ms: args.budget_ms,
            pipeline: &cfg,
        })?
    );

    if let Some(budget_ms) = args.budget_ms {
        if best_median > budget_ms {
            return Err(BudgetExceeded { median_ms: best_median, budget_ms }.into());
        }
    }
    Ok(())
}
