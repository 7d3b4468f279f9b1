//! Lane-marker crossings and swimming velocity.
//!
//! For each frame with a detected head, a window on the trailing side of the
//! head is checked for the marker color. The first frame of each run of
//! adjacent frames is a crossing; crossings are spaced by the known marker
//! distance, which turns their timestamps into segment velocities.

use std::io::{self, BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::LandmarkPoint;
use crate::preprocess::{Axis, Sense, SwimDirection};

#[derive(Debug, Error)]
pub enum VelocityError {
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("need at least 2 marker crossings for a velocity, found {0}")]
    TooFewCrossings(usize),
    #[error("crossing {index} at {t} s does not follow {prev} s")]
    NonIncreasingCrossings { index: usize, prev: f64, t: f64 },
    #[error("raster is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    RasterSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("raster buffer holds {got} bytes, expected {want}")]
    RasterBuffer { got: usize, want: usize },
    #[error("failed reading crossings: {0}")]
    Io(#[from] io::Error),
    #[error("invalid crossing record at line {line}: {message}")]
    Record { line: usize, message: String },
}

/// Packed 8-bit RGB image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, VelocityError> {
        let want = width as usize * height as usize * 3;
        if data.len() != want {
            return Err(VelocityError::RasterBuffer {
                got: data.len(),
                want,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, rgb: [u8; 3]) {
        let (x1, y1) = (x1.min(self.width), y1.min(self.height));
        for y in y0..y1 {
            for x in x0..x1 {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn check_size(&self, width: u32, height: u32) -> Result<(), VelocityError> {
        if self.width != width || self.height != height {
            return Err(VelocityError::RasterSize {
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolCalibration {
    /// Meters between consecutive lane markers.
    pub marker_spacing: f64,
    pub marker_color: [u8; 3],
    /// Per-channel tolerance (Chebyshev distance in RGB).
    pub color_tolerance: u8,
    /// Extent of the search window along the swim axis, pixels.
    pub crop_width: u32,
    /// Extent across the swim axis, centered on the head, pixels.
    pub crop_height: u32,
    pub min_colored_fraction: f64,
}

impl Default for PoolCalibration {
    fn default() -> Self {
        Self {
            marker_spacing: 10.0,
            marker_color: [255, 0, 0],
            color_tolerance: 40,
            crop_width: 120,
            crop_height: 60,
            min_colored_fraction: 0.02,
        }
    }
}

impl PoolCalibration {
    pub fn validate(&self) -> Result<(), VelocityError> {
        let bad = |m: String| Err(VelocityError::Calibration(m));
        if !(self.marker_spacing.is_finite() && self.marker_spacing > 0.0) {
            return bad(format!(
                "marker spacing must be > 0, got {}",
                self.marker_spacing
            ));
        }
        if self.crop_width == 0 || self.crop_height == 0 {
            return bad("crop dimensions must be > 0".into());
        }
        if !(self.min_colored_fraction > 0.0 && self.min_colored_fraction <= 1.0) {
            return bad(format!(
                "min colored fraction must be in (0, 1], got {}",
                self.min_colored_fraction
            ));
        }
        Ok(())
    }

    pub fn matches_marker(&self, rgb: [u8; 3]) -> bool {
        rgb.iter()
            .zip(self.marker_color)
            .all(|(&c, m)| c.abs_diff(m) <= self.color_tolerance)
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl CropRect {
    fn clip(self, width: u32, height: u32) -> Option<CropRect> {
        let c = CropRect {
            x0: self.x0.max(0),
            y0: self.y0.max(0),
            x1: self.x1.min(width as i64),
            y1: self.y1.min(height as i64),
        };
        (c.x0 < c.x1 && c.y0 < c.y1).then_some(c)
    }
}

/// The search window behind the head, excluding the head's own pixel line.
pub fn trailing_crop(head: &LandmarkPoint, cal: &PoolCalibration, dir: SwimDirection) -> CropRect {
    let hx = head.x.floor() as i64;
    let hy = head.y.floor() as i64;
    let len = cal.crop_width as i64;
    let half = cal.crop_height as i64 / 2;
    let across = cal.crop_height as i64;
    let behind = |h: i64| match dir.sense {
        Sense::Positive => (h - len, h),
        Sense::Negative => (h + 1, h + 1 + len),
    };
    match dir.axis {
        Axis::Horizontal => {
            let (x0, x1) = behind(hx);
            CropRect {
                x0,
                y0: hy - half,
                x1,
                y1: hy - half + across,
            }
        }
        Axis::Vertical => {
            let (y0, y1) = behind(hy);
            CropRect {
                x0: hx - half,
                y0,
                x1: hx - half + across,
                y1,
            }
        }
    }
}

/// Fraction of pixels in the (clipped) trailing window that match the marker color.
/// `None` when the window lies entirely outside the raster.
pub fn marker_fraction(
    frame: &Raster,
    head: &LandmarkPoint,
    cal: &PoolCalibration,
    dir: SwimDirection,
) -> Option<f64> {
    let crop = trailing_crop(head, cal, dir).clip(frame.width, frame.height)?;
    let mut hits = 0usize;
    for y in crop.y0..crop.y1 {
        for x in crop.x0..crop.x1 {
            if cal.matches_marker(frame.pixel(x as u32, y as u32)) {
                hits += 1;
            }
        }
    }
    let area = ((crop.x1 - crop.x0) * (crop.y1 - crop.y0)) as f64;
    Some(hits as f64 / area)
}

pub fn marker_adjacent(
    frame: &Raster,
    head: &LandmarkPoint,
    cal: &PoolCalibration,
    dir: SwimDirection,
) -> bool {
    match marker_fraction(frame, head, cal, dir) {
        Some(fraction) => fraction >= cal.min_colored_fraction,
        None => {
            warn!(
                "marker search window behind head at ({:.1}, {:.1}) is outside the frame",
                head.x, head.y
            );
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySample {
    pub timestamp: f64,
    pub frame_index: u64,
    pub adjacent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerCrossing {
    #[serde(rename = "t")]
    pub timestamp: f64,
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "distance_m")]
    pub cumulative_distance: f64,
}

pub const DEFAULT_REFRACTORY_S: f64 = 2.0;

/// Rising edges of the adjacency series. A run that starts less than
/// `refractory` seconds after the previous run ended is folded into it.
pub fn extract_crossings(
    adjacency: &[AdjacencySample],
    cal: &PoolCalibration,
    refractory: f64,
) -> Vec<MarkerCrossing> {
    let mut crossings: Vec<MarkerCrossing> = Vec::new();
    let mut last_true: Option<f64> = None;
    let mut in_run = false;
    for s in adjacency {
        if !s.adjacent {
            in_run = false;
            continue;
        }
        let merged = in_run || last_true.is_some_and(|end| s.timestamp - end < refractory);
        if !merged {
            let k = crossings.len() + 1;
            crossings.push(MarkerCrossing {
                timestamp: s.timestamp,
                frame_index: s.frame_index,
                cumulative_distance: k as f64 * cal.marker_spacing,
            });
        }
        in_run = true;
        last_true = Some(s.timestamp);
    }
    crossings
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySegment {
    pub t_start: f64,
    pub t_end: f64,
    pub distance: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub segments: Vec<VelocitySegment>,
    /// Total distance over total time, first to last crossing.
    pub average: f64,
}

pub fn velocity_segments(crossings: &[MarkerCrossing]) -> Result<VelocityEstimate, VelocityError> {
    if crossings.len() < 2 {
        return Err(VelocityError::TooFewCrossings(crossings.len()));
    }
    for (i, w) in crossings.windows(2).enumerate() {
        if w[1].timestamp <= w[0].timestamp {
            return Err(VelocityError::NonIncreasingCrossings {
                index: i + 1,
                prev: w[0].timestamp,
                t: w[1].timestamp,
            });
        }
    }
    let segments = crossings
        .windows(2)
        .map(|w| {
            let distance = w[1].cumulative_distance - w[0].cumulative_distance;
            VelocitySegment {
                t_start: w[0].timestamp,
                t_end: w[1].timestamp,
                distance,
                velocity: distance / (w[1].timestamp - w[0].timestamp),
            }
        })
        .collect();
    let (first, last) = (crossings[0], crossings[crossings.len() - 1]);
    let average =
        (last.cumulative_distance - first.cumulative_distance) / (last.timestamp - first.timestamp);
    Ok(VelocityEstimate { segments, average })
}

pub fn read_crossings<R: BufRead>(input: R) -> Result<Vec<MarkerCrossing>, VelocityError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: MarkerCrossing = serde_json::from_str(&line).map_err(|e| VelocityError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(c.timestamp.is_finite() && c.cumulative_distance.is_finite()) {
            return Err(VelocityError::Record {
                line: i + 1,
                message: "non-finite value".into(),
            });
        }
        out.push(c);
    }
    Ok(out)
}

pub fn write_crossings<W: Write>(crossings: &[MarkerCrossing], mut out: W) -> io::Result<()> {
    for c in crossings {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
