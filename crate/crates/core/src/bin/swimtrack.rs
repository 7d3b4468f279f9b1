use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use log::{error, warn};

use swimtrack::landmarks::write_sequence;
use swimtrack::metrics::{FftConfig, PeakConfig, StrokeConfig};
use swimtrack::preprocess::SwimDirection;
use swimtrack::report::{run_pipeline, spectrum_csv, AnalyzeOptions, PipelineError, VelocityInput};
use swimtrack::sim::{generate, render_frames, SwimScenario};
use swimtrack::velocity::{write_crossings, PoolCalibration};

#[derive(Parser)]
#[command(
    name = "swimtrack",
    version,
    about = "Freestyle stroke and velocity metrics from pose landmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one or more landmark sequences.
    Analyze(Box<AnalyzeArgs>),
    /// Generate a synthetic swim with ground truth.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Landmark JSONL file; repeat for batch mode.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Report path (single input); `-` writes to standard output.
    #[arg(long, conflicts_with = "report_dir")]
    report: Option<PathBuf>,
    /// Directory for `<stem>.json` reports (batch mode).
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// Directory of `frame_%06d.*` images.
    #[arg(long, group = "velocity_source")]
    frames_dir: Option<PathBuf>,
    /// Packed RGB24 frames, width and height from the sequence header.
    #[arg(long, group = "velocity_source")]
    frames_raw: Option<PathBuf>,
    /// Precomputed marker crossings (JSONL).
    #[arg(long, group = "velocity_source")]
    crossings_in: Option<PathBuf>,
    #[arg(long)]
    crossings_out: Option<PathBuf>,
    /// Writes left.csv and right.csv angle series here.
    #[arg(long)]
    series_out: Option<PathBuf>,
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
    /// auto, ltr, rtl, ttb or btt.
    #[arg(long, default_value = "auto")]
    direction: String,
    /// Marker color as R,G,B.
    #[arg(long, value_parser = parse_rgb, default_value = "255,0,0")]
    marker_color: [u8; 3],
    #[arg(long, default_value_t = 40)]
    marker_tolerance: u8,
    /// Meters between markers.
    #[arg(long, default_value_t = 10.0)]
    marker_spacing: f64,
    #[arg(long, default_value_t = 120)]
    crop_width: u32,
    #[arg(long, default_value_t = 60)]
    crop_height: u32,
    #[arg(long, default_value_t = 0.02)]
    min_colored_fraction: f64,
    /// Seconds.
    #[arg(long, default_value_t = 2.0)]
    refractory: f64,
    #[arg(long, default_value_t = 0.9)]
    rate_cutoff: f64,
    #[arg(long, default_value_t = 0.1)]
    f_min: f64,
    #[arg(long, default_value_t = 2.0)]
    f_max: f64,
    /// Seconds.
    #[arg(long, default_value_t = 0.5)]
    min_separation: f64,
    /// Degrees.
    #[arg(long, default_value_t = 10.0)]
    prominence: f64,
    /// Percent.
    #[arg(long, default_value_t = 10.0)]
    si_threshold: f64,
    #[arg(long)]
    fps_override: Option<f64>,
    /// Omit the timestamp so identical inputs give identical bytes.
    #[arg(long)]
    reproducible: bool,
    #[arg(long, short)]
    quiet: bool,
    /// Worker threads for batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; missing fields take defaults.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, group = "frames")]
    frames_raw: Option<PathBuf>,
    #[arg(long, group = "frames")]
    frames_dir: Option<PathBuf>,
}

fn parse_rgb(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected R,G,B, got {s:?}"));
    }
    let mut rgb = [0u8; 3];
    for (c, p) in rgb.iter_mut().zip(parts) {
        *c = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(rgb)
}

fn options(args: &AnalyzeArgs) -> Result<AnalyzeOptions, String> {
    let direction = match args.direction.as_str() {
        "auto" => None,
        code => Some(code.parse::<SwimDirection>().map_err(|e| e.to_string())?),
    };
    let velocity_input = if let Some(p) = &args.crossings_in {
        VelocityInput::Crossings(p.clone())
    } else if let Some(p) = &args.frames_dir {
        VelocityInput::FramesDir(p.clone())
    } else if let Some(p) = &args.frames_raw {
        VelocityInput::FramesRaw(p.clone())
    } else {
        VelocityInput::None
    };
    Ok(AnalyzeOptions {
        direction,
        fps_override: args.fps_override,
        symmetry_threshold: args.si_threshold,
        stroke: StrokeConfig {
            fft: FftConfig {
                f_min: args.f_min,
                f_max: args.f_max,
            },
            peaks: PeakConfig {
                min_separation: args.min_separation,
                min_prominence: args.prominence,
            },
            rate_cutoff: args.rate_cutoff,
        },
        calibration: PoolCalibration {
            marker_spacing: args.marker_spacing,
            marker_color: args.marker_color,
            color_tolerance: args.marker_tolerance,
            crop_width: args.crop_width,
            crop_height: args.crop_height,
            min_colored_fraction: args.min_colored_fraction,
        },
        refractory: args.refractory,
        velocity_input,
        reproducible: args.reproducible,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn analyze_one(
    input: &Path,
    report: &Path,
    args: &AnalyzeArgs,
    opts: &AnalyzeOptions,
) -> Result<(), PipelineError> {
    let out = run_pipeline(input, opts)?;
    if !args.quiet {
        for w in &out.report.warnings {
            warn!("{}: {w}", input.display());
        }
    }
    let json = out.report.to_json();
    if report == Path::new("-") {
        io::stdout()
            .write_all(json.as_bytes())
            .map_err(|source| PipelineError::Io {
                path: report.to_path_buf(),
                source,
            })?;
    } else {
        write_file(report, json.as_bytes())?;
    }
    if let Some(dir) = &args.series_out {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })?;
        if let Some(s) = &out.left_series {
            write_file(&dir.join("left.csv"), s.to_csv().as_bytes())?;
        }
        if let Some(s) = &out.right_series {
            write_file(&dir.join("right.csv"), s.to_csv().as_bytes())?;
        }
    }
    if let (Some(path), Some(bins)) = (&args.spectrum_out, &out.spectrum) {
        write_file(path, spectrum_csv(bins).as_bytes())?;
    }
    if let Some(path) = &args.crossings_out {
        let mut buf = Vec::new();
        write_crossings(&out.crossings, &mut buf).expect("writing to memory");
        write_file(path, &buf)?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> u8 {
    let opts = match options(&args) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            return 1;
        }
    };
    let batch = args.input.len() > 1 || args.report_dir.is_some();
    if batch && !matches!(opts.velocity_input, VelocityInput::None) {
        error!("frame and crossing inputs apply to a single sequence");
        return 1;
    }
    if batch
        && (args.series_out.is_some()
            || args.spectrum_out.is_some()
            || args.crossings_out.is_some())
    {
        error!("series, spectrum and crossing outputs apply to a single sequence");
        return 1;
    }
    let jobs: Vec<(PathBuf, PathBuf)> = if batch {
        let Some(dir) = &args.report_dir else {
            error!("--report-dir is required with several inputs");
            return 1;
        };
        if let Err(e) = fs::create_dir_all(dir) {
            error!("{}: {e}", dir.display());
            return 1;
        }
        args.input
            .iter()
            .map(|p| {
                let stem = p.file_stem().unwrap_or(p.as_os_str());
                (p.clone(), dir.join(stem).with_extension("json"))
            })
            .collect()
    } else {
        let Some(report) = &args.report else {
            error!("--report is required");
            return 1;
        };
        vec![(args.input[0].clone(), report.clone())]
    };

    let next = AtomicUsize::new(0);
    let worst = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((input, report)) = jobs.get(i) else {
                    break;
                };
                if let Err(e) = analyze_one(input, report, &args, &opts) {
                    error!("{}: {e}", input.display());
                    worst.fetch_max(e.exit_code() as usize, Ordering::Relaxed);
                }
            });
        }
    });
    worst.into_inner() as u8
}

fn simulate(args: SimulateArgs) -> Result<(), String> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let sc: SwimScenario =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let (seq, truth) = generate(&sc).map_err(|e| e.to_string())?;
    let file = File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_sequence(&seq, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| format!("{}: {e}", args.out.display()))?;
    if let Some(path) = &args.truth {
        let json = serde_json::to_string_pretty(&truth).map_err(|e| e.to_string())?;
        fs::write(path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if args.frames_raw.is_none() && args.frames_dir.is_none() {
        return Ok(());
    }
    let renderer = render_frames(
        &sc,
        &PoolCalibration {
            marker_spacing: sc.marker_spacing,
            ..PoolCalibration::default()
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(path) = &args.frames_raw {
        let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut w = BufWriter::new(file);
        for raster in renderer.frames() {
            w.write_all(raster.as_bytes())
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
        w.flush().map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(dir) = &args.frames_dir {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let (width, height) = renderer.size();
        for (i, raster) in renderer.frames().enumerate() {
            let path = dir.join(format!("frame_{i:06}.png"));
            let img = image::RgbImage::from_raw(width, height, raster.into_bytes())
                .expect("raster size matches renderer");
            img.save(&path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match cli.command {
        Command::Analyze(args) => ExitCode::from(analyze(*args)),
        Command::Simulate(args) => match simulate(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                error!("{e}");
                ExitCode::FAILURE
            }
        },
    }
}
