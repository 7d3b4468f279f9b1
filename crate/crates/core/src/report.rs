//! End-to-end analysis: parse, correct sides, compute angles, stroke metrics
//! and velocity, and assemble a [`MetricsReport`].

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::kinematics::{angle_series, AngleSeries, Side};
use crate::landmarks::{self, index, FormatError, LandmarkSequence};
use crate::metrics::{
    self, stroke_duration, stroke_duration_fft, SpectrumBin, StrokeConfig, StrokeEstimate,
    SymmetryResult,
};
use crate::preprocess::{self, correct_sides, detection_rate, CorrectedSequence, SwimDirection};
use crate::velocity::{
    self, extract_crossings, marker_adjacent, velocity_segments, AdjacencySample, MarkerCrossing,
    PoolCalibration, Raster, VelocityError, VelocitySegment,
};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Crossings {
        path: PathBuf,
        source: VelocityError,
    },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("no detected frames")]
    NoDetectedFrames,
}

impl PipelineError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NoDetectedFrames => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where marker crossings come from, if anywhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum VelocityInput {
    #[default]
    None,
    Crossings(PathBuf),
    FramesDir(PathBuf),
    FramesRaw(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub direction: Option<SwimDirection>,
    pub fps_override: Option<f64>,
    pub symmetry_threshold: f64,
    pub stroke: StrokeConfig,
    pub calibration: PoolCalibration,
    pub refractory: f64,
    pub velocity_input: VelocityInput,
    /// Omits the wall-clock timestamp so reports are byte-stable.
    pub reproducible: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            direction: None,
            fps_override: None,
            symmetry_threshold: metrics::DEFAULT_SYMMETRY_THRESHOLD,
            stroke: StrokeConfig::default(),
            calibration: PoolCalibration::default(),
            refractory: velocity::DEFAULT_REFRACTORY_S,
            velocity_input: VelocityInput::None,
            reproducible: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frames_in_file: usize,
    pub total_frames: u64,
    pub detected_frames: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionReport {
    pub code: SwimDirection,
    pub axis: preprocess::Axis,
    pub sense: preprocess::Sense,
    /// "auto" or "override".
    pub source: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideCorrectionReport {
    pub swapped_frames: usize,
    pub swapped_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrokeReport {
    /// Mean of the per-side durations that could be estimated.
    pub duration: f64,
    pub left: Option<StrokeEstimate>,
    pub right: Option<StrokeEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VelocityReport {
    /// "crossings" or "frames".
    pub source: &'static str,
    pub crossings: Vec<MarkerCrossing>,
    pub segments: Vec<VelocitySegment>,
    pub average: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub direction: String,
    pub fps_override: Option<f64>,
    pub symmetry_threshold: f64,
    pub rate_cutoff: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub min_separation: f64,
    pub min_prominence: f64,
    pub refractory: f64,
    pub calibration: PoolCalibration,
}

impl ConfigEcho {
    fn from_options(opts: &AnalyzeOptions) -> Self {
        Self {
            direction: opts
                .direction
                .map_or_else(|| "auto".to_string(), |d| d.code().to_string()),
            fps_override: opts.fps_override,
            symmetry_threshold: opts.symmetry_threshold,
            rate_cutoff: opts.stroke.rate_cutoff,
            f_min: opts.stroke.fft.f_min,
            f_max: opts.stroke.fft.f_max,
            min_separation: opts.stroke.peaks.min_separation,
            min_prominence: opts.stroke.peaks.min_prominence,
            refractory: opts.refractory,
            calibration: opts.calibration,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub tool: ToolInfo,
    /// Unix seconds; null in reproducible mode.
    pub generated_at: Option<u64>,
    pub input: InputSummary,
    pub detection_rate: f64,
    pub direction: Option<DirectionReport>,
    pub side_correction: SideCorrectionReport,
    pub symmetry: Option<SymmetryResult>,
    pub stroke: Option<StrokeReport>,
    pub velocity: Option<VelocityReport>,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }
}

/// Report plus the intermediate artifacts the CLI can dump.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: MetricsReport,
    pub left_series: Option<AngleSeries>,
    pub right_series: Option<AngleSeries>,
    /// Magnitude spectrum of the right-arm series (left if right is unavailable).
    pub spectrum: Option<Vec<SpectrumBin>>,
    pub crossings: Vec<MarkerCrossing>,
}

/// Raster frames addressed by video frame index.
pub trait FrameSource {
    fn frame(&mut self, frame_index: u64) -> io::Result<Option<Raster>>;
}

/// A directory of `frame_%06d.<ext>` images in any format the image decoder reads.
pub struct DirFrames {
    files: BTreeMap<u64, PathBuf>,
}

impl DirFrames {
    pub fn open(dir: &Path) -> io::Result<Self> {
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let index = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("frame_"))
                .and_then(|s| s.parse::<u64>().ok());
            if let Some(index) = index {
                files.insert(index, path);
            }
        }
        Ok(Self { files })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for DirFrames {
    fn frame(&mut self, frame_index: u64) -> io::Result<Option<Raster>> {
        let Some(path) = self.files.get(&frame_index) else {
            return Ok(None);
        };
        let img = image::open(path)
            .map_err(|e| io::Error::other(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Raster::from_raw(w, h, img.into_raw())
            .map(Some)
            .map_err(io::Error::other)
    }
}

/// Consecutive packed RGB frames of a fixed size, frame `k` at byte `k * width * height * 3`.
pub struct RawFrames<R> {
    reader: R,
    width: u32,
    height: u32,
}

impl RawFrames<BufReader<File>> {
    pub fn open(path: &Path, width: u32, height: u32) -> io::Result<Self> {
        Ok(Self::new(BufReader::new(File::open(path)?), width, height))
    }
}

impl<R: Read + Seek> RawFrames<R> {
    pub fn new(reader: R, width: u32, height: u32) -> Self {
        Self {
            reader,
            width,
            height,
        }
    }
}

impl<R: Read + Seek> FrameSource for RawFrames<R> {
    fn frame(&mut self, frame_index: u64) -> io::Result<Option<Raster>> {
        let size = self.width as u64 * self.height as u64 * 3;
        self.reader.seek(SeekFrom::Start(frame_index * size))?;
        let mut buf = vec![0u8; size as usize];
        match self.reader.read_exact(&mut buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        Raster::from_raw(self.width, self.height, buf)
            .map(Some)
            .map_err(io::Error::other)
    }
}

/// Marker adjacency for every detected frame that has a raster.
pub fn adjacency_series(
    seq: &LandmarkSequence,
    dir: SwimDirection,
    cal: &PoolCalibration,
    source: &mut dyn FrameSource,
    warnings: &mut Vec<String>,
) -> io::Result<Vec<AdjacencySample>> {
    let mut out = Vec::new();
    let mut missing = 0usize;
    for (frame, skel) in seq.detected_frames() {
        let Some(raster) = source.frame(frame.frame_index)? else {
            missing += 1;
            continue;
        };
        raster
            .check_size(seq.width(), seq.height())
            .map_err(io::Error::other)?;
        out.push(AdjacencySample {
            timestamp: frame.timestamp,
            frame_index: frame.frame_index,
            adjacent: marker_adjacent(&raster, &skel[index::NOSE], cal, dir),
        });
    }
    if missing > 0 {
        warnings.push(format!("{missing} detected frames have no raster"));
    }
    Ok(out)
}

pub fn read_sequence(path: &Path) -> Result<LandmarkSequence, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    landmarks::parse_sequence(BufReader::new(file)).map_err(|source| PipelineError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `input` and runs the full analysis.
pub fn run_pipeline(input: &Path, opts: &AnalyzeOptions) -> Result<PipelineOutput, PipelineError> {
    let seq = read_sequence(input)?;
    let mut crossings_in = None;
    if let VelocityInput::Crossings(path) = &opts.velocity_input {
        let file = File::open(path).map_err(io_err(path))?;
        let crossings = velocity::read_crossings(BufReader::new(file)).map_err(|source| {
            PipelineError::Crossings {
                path: path.clone(),
                source,
            }
        })?;
        crossings_in = Some(crossings);
    }
    let mut frames: Option<Box<dyn FrameSource>> = match &opts.velocity_input {
        VelocityInput::FramesDir(dir) => Some(Box::new(DirFrames::open(dir).map_err(io_err(dir))?)),
        VelocityInput::FramesRaw(path) => Some(Box::new(
            RawFrames::open(path, seq.width(), seq.height()).map_err(io_err(path))?,
        )),
        _ => None,
    };
    let frames = frames.as_mut().map(|f| f.as_mut() as &mut dyn FrameSource);
    analyze_sequence(seq, opts, crossings_in, frames)
}

fn mean_duration(estimates: &[&Option<StrokeEstimate>]) -> Option<f64> {
    let durations: Vec<f64> = estimates
        .iter()
        .filter_map(|e| e.as_ref().map(|e| e.duration))
        .collect();
    (!durations.is_empty()).then(|| durations.iter().sum::<f64>() / durations.len() as f64)
}

/// Runs every stage on an already parsed sequence. Stage failures other than
/// an all-miss sequence become warnings and leave that report section empty.
pub fn analyze_sequence(
    seq: LandmarkSequence,
    opts: &AnalyzeOptions,
    crossings_in: Option<Vec<MarkerCrossing>>,
    frames: Option<&mut dyn FrameSource>,
) -> Result<PipelineOutput, PipelineError> {
    let seq = match opts.fps_override {
        Some(fps) => seq
            .with_fps(fps)
            .map_err(|e| PipelineError::InvalidOption(e.to_string()))?,
        None => seq,
    };
    opts.calibration
        .validate()
        .map_err(|e| PipelineError::InvalidOption(e.to_string()))?;
    if seq.detected_count() == 0 {
        return Err(PipelineError::NoDetectedFrames);
    }
    let mut warnings = Vec::new();
    let rate = detection_rate(&seq).map_err(|_| PipelineError::NoDetectedFrames)?;

    let input = InputSummary {
        fps: seq.fps(),
        width: seq.width(),
        height: seq.height(),
        frames_in_file: seq.frames().len(),
        total_frames: seq.total_frames(),
        detected_frames: seq.detected_count(),
    };

    let direction = match opts.direction {
        Some(d) => Some((d, "override")),
        None => match preprocess::estimate_direction(&seq) {
            Ok(d) => Some((d, "auto")),
            Err(e) => {
                warnings.push(format!(
                    "swim direction unknown, side correction skipped: {e}"
                ));
                None
            }
        },
    };
    let corrected = match direction {
        Some((d, _)) => correct_sides(&seq, d),
        None => CorrectedSequence {
            base: seq.clone(),
            direction: SwimDirection::LEFT_TO_RIGHT,
            swapped_frames: Default::default(),
            swapped_pairs: 0,
        },
    };

    let mut series = |side: Side| match angle_series(&corrected, side) {
        Ok(s) => Some(s),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    let left_series = series(Side::Left);
    let right_series = series(Side::Right);

    let symmetry = match (&left_series, &right_series) {
        (Some(l), Some(r)) => match metrics::symmetry_index(l, r, opts.symmetry_threshold) {
            Ok(s) => Some(s),
            Err(e) => {
                warnings.push(format!("symmetry index: {e}"));
                None
            }
        },
        _ => None,
    };

    let mut estimate = |s: &Option<AngleSeries>| {
        let s = s.as_ref()?;
        match stroke_duration(s, rate, &opts.stroke) {
            Ok(est) => {
                if let Some(why) = &est.fft_failure {
                    warnings.push(format!(
                        "{} spectral estimate failed ({why}), counted peaks",
                        s.side.name()
                    ));
                }
                Some(est)
            }
            Err(e) => {
                warnings.push(format!("{} stroke duration: {e}", s.side.name()));
                None
            }
        }
    };
    let left_stroke = estimate(&left_series);
    let right_stroke = estimate(&right_series);
    let stroke = mean_duration(&[&left_stroke, &right_stroke]).map(|duration| StrokeReport {
        duration,
        left: left_stroke,
        right: right_stroke,
    });

    let spectrum = right_series
        .as_ref()
        .or(left_series.as_ref())
        .and_then(|s| stroke_duration_fft(s, &opts.stroke.fft).ok())
        .and_then(|e| e.spectrum);

    let (crossings, source) = match (crossings_in, frames, direction) {
        (Some(c), _, _) => (Some(c), "crossings"),
        (None, Some(frames), Some((dir, _))) => {
            match adjacency_series(&seq, dir, &opts.calibration, frames, &mut warnings) {
                Ok(adj) => (
                    Some(extract_crossings(&adj, &opts.calibration, opts.refractory)),
                    "frames",
                ),
                Err(e) => {
                    warnings.push(format!("frame rasters unusable, velocity skipped: {e}"));
                    (None, "frames")
                }
            }
        }
        (None, Some(_), None) => {
            warnings.push("velocity from frames needs a swim direction".into());
            (None, "frames")
        }
        (None, None, _) => (None, "none"),
    };
    let velocity = crossings.as_ref().and_then(|c| match velocity_segments(c) {
        Ok(v) => Some(VelocityReport {
            source,
            crossings: c.clone(),
            segments: v.segments,
            average: v.average,
        }),
        Err(e) => {
            warnings.push(format!("velocity: {e}"));
            None
        }
    });

    let generated_at = if opts.reproducible {
        None
    } else {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    };

    let report = MetricsReport {
        tool: ToolInfo {
            name: TOOL_NAME,
            version: TOOL_VERSION,
        },
        generated_at,
        input,
        detection_rate: rate,
        direction: direction.map(|(d, source)| DirectionReport {
            code: d,
            axis: d.axis,
            sense: d.sense,
            source,
        }),
        side_correction: SideCorrectionReport {
            swapped_frames: corrected.swapped_frames.len(),
            swapped_pairs: corrected.swapped_pairs,
        },
        symmetry,
        stroke,
        velocity,
        config: ConfigEcho::from_options(opts),
        warnings,
    };
    Ok(PipelineOutput {
        report,
        left_series,
        right_series,
        spectrum,
        crossings: crossings.unwrap_or_default(),
    })
}

pub fn spectrum_csv(bins: &[SpectrumBin]) -> String {
    let mut out = String::from("f_hz,magnitude\n");
    for b in bins {
        out.push_str(&format!("{},{}\n", b.frequency, b.magnitude));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::{LandmarkFrame, VideoInfo};
    use crate::metrics::StrokeMethod;
    use crate::sim::{generate, render_frames, SwimScenario};

    #[test]
    fn training_regime_report_is_complete() {
        let sc = SwimScenario {
            cadence: 1.75,
            duration: 17.5,
            seed: 4,
            ..SwimScenario::default()
        };
        let (seq, _) = generate(&sc).unwrap();
        let out = analyze_sequence(seq, &AnalyzeOptions::default(), None, None).unwrap();
        let r = &out.report;
        assert_eq!(r.detection_rate, 1.0);
        assert_eq!(
            r.direction.as_ref().unwrap().code,
            SwimDirection::LEFT_TO_RIGHT
        );
        let stroke = r.stroke.as_ref().unwrap();
        assert_eq!(stroke.right.as_ref().unwrap().method, StrokeMethod::Fft);
        assert!((stroke.duration - 1.75).abs() < 0.1);
        assert!(r.symmetry.unwrap().si_percent.abs() < 0.1);
        assert!(out.spectrum.is_some());
        assert!(r.velocity.is_none());
    }

    #[test]
    fn all_misses_is_exit_two() {
        let info = VideoInfo {
            fps: 30.0,
            width: 10,
            height: 10,
        };
        let seq = LandmarkSequence::new(info, vec![LandmarkFrame::missed(0, 0.0)]).unwrap();
        let err = analyze_sequence(seq, &AnalyzeOptions::default(), None, None).unwrap_err();
        assert_eq!(err.to_string(), "no detected frames");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn velocity_from_raw_frames() {
        let sc = SwimScenario {
            velocity: 2.0,
            duration: 16.0,
            fps: 30.0,
            ..SwimScenario::default()
        };
        let cal = PoolCalibration {
            crop_width: 40,
            crop_height: 20,
            ..PoolCalibration::default()
        };
        let (seq, _) = generate(&sc).unwrap();
        let renderer = render_frames(&sc, &cal).unwrap();
        let mut bytes = Vec::new();
        for f in renderer.frames() {
            bytes.extend_from_slice(f.as_bytes());
        }
        let (w, h) = renderer.size();
        let mut source = RawFrames::new(io::Cursor::new(bytes), w, h);
        let opts = AnalyzeOptions {
            calibration: cal,
            ..AnalyzeOptions::default()
        };
        let out = analyze_sequence(seq, &opts, None, Some(&mut source)).unwrap();
        let v = out.report.velocity.unwrap();
        assert_eq!(v.source, "frames");
        assert_eq!(v.crossings.len(), 3);
        assert!((v.average - 2.0).abs() < 0.05, "{}", v.average);
    }

    #[test]
    fn missing_markers_leave_velocity_out_with_warning() {
        let sc = SwimScenario {
            velocity: 1.0,
            duration: 6.0,
            fps: 30.0,
            ..SwimScenario::default()
        };
        let (seq, _) = generate(&sc).unwrap();
        let crossings = vec![];
        let out = analyze_sequence(seq, &AnalyzeOptions::default(), Some(crossings), None).unwrap();
        assert!(out.report.velocity.is_none());
        assert!(out
            .report
            .warnings
            .iter()
            .any(|w| w.starts_with("velocity:")));
    }

    #[test]
    fn reproducible_report_has_no_clock() {
        let sc = SwimScenario {
            duration: 8.0,
            ..SwimScenario::default()
        };
        let (seq, _) = generate(&sc).unwrap();
        let opts = AnalyzeOptions {
            reproducible: true,
            ..AnalyzeOptions::default()
        };
        let a = analyze_sequence(seq.clone(), &opts, None, None)
            .unwrap()
            .report
            .to_json();
        let b = analyze_sequence(seq, &opts, None, None)
            .unwrap()
            .report
            .to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"generated_at\": null"));
    }
}
