//! Landmark data model and the JSON Lines interchange format.
//!
//! A file starts with one header object carrying the video metadata, followed
//! by one object per frame:
//!
//! ```text
//! {"fps":60,"width":3840,"height":2160}
//! {"frame":0,"t":0.0,"detected":true,"landmarks":[{"x":..,"y":..,"v":..}, ... x33]}
//! {"frame":1,"t":0.016666666666666666,"detected":false}
//! ```
//!
//! Coordinates are image pixels with the origin at the top-left corner and y
//! growing downward. An optional `z` on a landmark is accepted and ignored.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body landmarks produced per detected frame.
pub const LANDMARK_COUNT: usize = 33;

/// Named landmark indices (33-point body topology).
pub mod index {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE_INNER: usize = 1;
    pub const LEFT_EYE: usize = 2;
    pub const LEFT_EYE_OUTER: usize = 3;
    pub const RIGHT_EYE_INNER: usize = 4;
    pub const RIGHT_EYE: usize = 5;
    pub const RIGHT_EYE_OUTER: usize = 6;
    pub const LEFT_EAR: usize = 7;
    pub const RIGHT_EAR: usize = 8;
    pub const MOUTH_LEFT: usize = 9;
    pub const MOUTH_RIGHT: usize = 10;
    pub const LEFT_SHOULDER: usize = 11;
    pub const RIGHT_SHOULDER: usize = 12;
    pub const LEFT_ELBOW: usize = 13;
    pub const RIGHT_ELBOW: usize = 14;
    pub const LEFT_WRIST: usize = 15;
    pub const RIGHT_WRIST: usize = 16;
    pub const LEFT_PINKY: usize = 17;
    pub const RIGHT_PINKY: usize = 18;
    pub const LEFT_INDEX: usize = 19;
    pub const RIGHT_INDEX: usize = 20;
    pub const LEFT_THUMB: usize = 21;
    pub const RIGHT_THUMB: usize = 22;
    pub const LEFT_HIP: usize = 23;
    pub const RIGHT_HIP: usize = 24;
    pub const LEFT_KNEE: usize = 25;
    pub const RIGHT_KNEE: usize = 26;
    pub const LEFT_ANKLE: usize = 27;
    pub const RIGHT_ANKLE: usize = 28;
    pub const LEFT_HEEL: usize = 29;
    pub const RIGHT_HEEL: usize = 30;
    pub const LEFT_FOOT_INDEX: usize = 31;
    pub const RIGHT_FOOT_INDEX: usize = 32;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LandmarkPoint {
    pub x: f64,
    pub y: f64,
    pub visibility: f64,
}

impl LandmarkPoint {
    pub fn new(x: f64, y: f64, visibility: f64) -> Self {
        Self { x, y, visibility }
    }
}

/// The full 33-point landmark set of one detected frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton(Box<[LandmarkPoint; LANDMARK_COUNT]>);

impl Skeleton {
    pub fn new(points: [LandmarkPoint; LANDMARK_COUNT]) -> Self {
        Self(Box::new(points))
    }

    pub fn points(&self) -> &[LandmarkPoint] {
        &self.0[..]
    }

    pub fn swap(&mut self, a: usize, b: usize) {
        self.0.swap(a, b);
    }
}

impl Index<usize> for Skeleton {
    type Output = LandmarkPoint;

    fn index(&self, i: usize) -> &LandmarkPoint {
        &self.0[i]
    }
}

impl IndexMut<usize> for Skeleton {
    fn index_mut(&mut self, i: usize) -> &mut LandmarkPoint {
        &mut self.0[i]
    }
}

/// One video frame. `landmarks` is `None` when the pose model missed the swimmer.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub frame_index: u64,
    pub timestamp: f64,
    pub landmarks: Option<Skeleton>,
}

impl LandmarkFrame {
    pub fn detected(frame_index: u64, timestamp: f64, landmarks: Skeleton) -> Self {
        Self {
            frame_index,
            timestamp,
            landmarks: Some(landmarks),
        }
    }

    pub fn missed(frame_index: u64, timestamp: f64) -> Self {
        Self {
            frame_index,
            timestamp,
            landmarks: None,
        }
    }

    pub fn is_detected(&self) -> bool {
        self.landmarks.is_some()
    }
}

/// Why a single record (or a frame handed to [`LandmarkSequence::new`]) was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("landmark count {0} \u{2260} {LANDMARK_COUNT}")]
    LandmarkCount(usize),
    #[error("undetected frame carries {0} landmarks")]
    LandmarksOnMiss(usize),
    #[error("frame index {got} does not follow {prev}")]
    NonMonotonicFrame { prev: u64, got: u64 },
    #[error("non-finite {field}")]
    NonFinite { field: &'static str },
    #[error("visibility {0} outside [0, 1]")]
    Visibility(f64),
    #[error("timestamp {t} is negative")]
    NegativeTimestamp { t: f64 },
    #[error("timestamp {t} precedes previous timestamp {prev}")]
    TimestampDecreasing { prev: f64, t: f64 },
    #[error("timestamp {t} too far from frame {frame} at {fps} fps")]
    TimestampMismatch { frame: u64, t: f64, fps: f64 },
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("failed reading input: {0}")]
    Io(#[from] io::Error),
    #[error("missing header record")]
    MissingHeader,
    #[error("{kind} at line {line}")]
    Record { line: usize, kind: RecordError },
    #[error("frame {position}: {kind}")]
    Frame { position: usize, kind: RecordError },
}

/// Video metadata carried by the header record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoInfo {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

impl VideoInfo {
    fn validate(&self) -> Result<(), RecordError> {
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(RecordError::InvalidHeader(format!(
                "fps must be > 0, got {}",
                self.fps
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RecordError::InvalidHeader(format!(
                "image dimensions must be > 0, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// An ordered, validated landmark time series for one swimmer.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    info: VideoInfo,
    frames: Vec<LandmarkFrame>,
}

impl LandmarkSequence {
    pub fn new(info: VideoInfo, frames: Vec<LandmarkFrame>) -> Result<Self, FormatError> {
        info.validate()
            .map_err(|kind| FormatError::Frame { position: 0, kind })?;
        let mut prev: Option<&LandmarkFrame> = None;
        for (position, frame) in frames.iter().enumerate() {
            validate_frame(frame, prev, info.fps)
                .map_err(|kind| FormatError::Frame { position, kind })?;
            prev = Some(frame);
        }
        Ok(Self { info, frames })
    }

    pub fn info(&self) -> VideoInfo {
        self.info
    }

    pub fn fps(&self) -> f64 {
        self.info.fps
    }

    pub fn width(&self) -> u32 {
        self.info.width
    }

    pub fn height(&self) -> u32 {
        self.info.height
    }

    pub fn frames(&self) -> &[LandmarkFrame] {
        &self.frames
    }

    pub fn detected_frames(&self) -> impl Iterator<Item = (&LandmarkFrame, &Skeleton)> {
        self.frames
            .iter()
            .filter_map(|f| f.landmarks.as_ref().map(|s| (f, s)))
    }

    pub fn detected_count(&self) -> usize {
        self.frames.iter().filter(|f| f.is_detected()).count()
    }

    /// Frame count of the covered video span, first to last index inclusive.
    /// Indices missing from the file count as frames.
    pub fn total_frames(&self) -> u64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => last.frame_index - first.frame_index + 1,
            _ => 0,
        }
    }

    /// Replaces the frame rate and re-derives every timestamp as `frame / fps`.
    pub fn with_fps(mut self, fps: f64) -> Result<Self, FormatError> {
        let info = VideoInfo { fps, ..self.info };
        info.validate()
            .map_err(|kind| FormatError::Frame { position: 0, kind })?;
        for frame in &mut self.frames {
            frame.timestamp = frame.frame_index as f64 / fps;
        }
        self.info = info;
        Ok(self)
    }

    pub fn map_frames<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&LandmarkFrame) -> LandmarkFrame,
    {
        Self {
            info: self.info,
            frames: self.frames.iter().map(&mut f).collect(),
        }
    }
}

fn check_finite(value: f64, field: &'static str) -> Result<(), RecordError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(RecordError::NonFinite { field })
    }
}

fn validate_frame(
    frame: &LandmarkFrame,
    prev: Option<&LandmarkFrame>,
    fps: f64,
) -> Result<(), RecordError> {
    check_finite(frame.timestamp, "timestamp")?;
    if frame.timestamp < 0.0 {
        return Err(RecordError::NegativeTimestamp { t: frame.timestamp });
    }
    if let Some(prev) = prev {
        if frame.frame_index <= prev.frame_index {
            return Err(RecordError::NonMonotonicFrame {
                prev: prev.frame_index,
                got: frame.frame_index,
            });
        }
        if frame.timestamp < prev.timestamp {
            return Err(RecordError::TimestampDecreasing {
                prev: prev.timestamp,
                t: frame.timestamp,
            });
        }
    }
    let expected = frame.frame_index as f64 / fps;
    // 1e-9 absorbs the rounding of t written as frame/fps
    if (frame.timestamp - expected).abs() > 1.0 / fps + 1e-9 {
        return Err(RecordError::TimestampMismatch {
            frame: frame.frame_index,
            t: frame.timestamp,
            fps,
        });
    }
    if let Some(skeleton) = &frame.landmarks {
        for p in skeleton.points() {
            check_finite(p.x, "x")?;
            check_finite(p.y, "y")?;
            check_finite(p.visibility, "visibility")?;
            if !(0.0..=1.0).contains(&p.visibility) {
                return Err(RecordError::Visibility(p.visibility));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    fps: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    x: f64,
    y: f64,
    v: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    frame: u64,
    t: f64,
    detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<Vec<PointRecord>>,
}

fn frame_from_record(rec: FrameRecord) -> Result<LandmarkFrame, RecordError> {
    let points = rec.landmarks.unwrap_or_default();
    if !rec.detected {
        if !points.is_empty() {
            return Err(RecordError::LandmarksOnMiss(points.len()));
        }
        return Ok(LandmarkFrame::missed(rec.frame, rec.t));
    }
    if points.len() != LANDMARK_COUNT {
        return Err(RecordError::LandmarkCount(points.len()));
    }
    let mut out = [LandmarkPoint::default(); LANDMARK_COUNT];
    for (slot, p) in out.iter_mut().zip(points) {
        *slot = LandmarkPoint::new(p.x, p.y, p.v);
    }
    Ok(LandmarkFrame::detected(
        rec.frame,
        rec.t,
        Skeleton::new(out),
    ))
}

/// Parses a landmark sequence from JSONL, validating every record in one pass.
pub fn parse_sequence<R: BufRead>(mut input: R) -> Result<LandmarkSequence, FormatError> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let mut info: Option<VideoInfo> = None;
    let mut frames: Vec<LandmarkFrame> = Vec::new();

    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let at = |kind| FormatError::Record {
            line: line_no,
            kind,
        };

        match info {
            None => {
                let value: serde_json::Value = serde_json::from_str(trimmed)
                    .map_err(|e| at(RecordError::InvalidJson(e.to_string())))?;
                if value.get("fps").is_none() {
                    return Err(FormatError::MissingHeader);
                }
                let header: HeaderRecord = serde_json::from_value(value)
                    .map_err(|e| at(RecordError::InvalidHeader(e.to_string())))?;
                let parsed = VideoInfo {
                    fps: header.fps,
                    width: header.width,
                    height: header.height,
                };
                parsed.validate().map_err(at)?;
                info = Some(parsed);
            }
            Some(video) => {
                let rec: FrameRecord = serde_json::from_str(trimmed)
                    .map_err(|e| at(RecordError::InvalidJson(e.to_string())))?;
                let frame = frame_from_record(rec).map_err(at)?;
                validate_frame(&frame, frames.last(), video.fps).map_err(at)?;
                frames.push(frame);
            }
        }
    }

    let info = info.ok_or(FormatError::MissingHeader)?;
    Ok(LandmarkSequence { info, frames })
}

pub fn parse_str(input: &str) -> Result<LandmarkSequence, FormatError> {
    parse_sequence(input.as_bytes())
}

/// Writes `seq` as JSONL. Output is deterministic and reparses to an equal sequence.
pub fn write_sequence<W: Write>(seq: &LandmarkSequence, mut out: W) -> io::Result<()> {
    let header = HeaderRecord {
        fps: seq.info.fps,
        width: seq.info.width,
        height: seq.info.height,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for frame in &seq.frames {
        let rec = FrameRecord {
            frame: frame.frame_index,
            t: frame.timestamp,
            detected: frame.is_detected(),
            landmarks: frame.landmarks.as_ref().map(|s| {
                s.points()
                    .iter()
                    .map(|p| PointRecord {
                        x: p.x,
                        y: p.y,
                        v: p.visibility,
                    })
                    .collect()
            }),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_to_vec(seq: &LandmarkSequence) -> Vec<u8> {
    let mut buf = Vec::new();
    write_sequence(seq, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

impl fmt::Display for VideoInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} @ {} fps", self.width, self.height, self.fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"fps":60,"width":3840,"height":2160}"#;

    fn points_json(n: usize) -> String {
        let pts: Vec<String> = (0..n)
            .map(|i| format!(r#"{{"x":{}.5,"y":{},"v":0.9}}"#, i, 2 * i))
            .collect();
        format!("[{}]", pts.join(","))
    }

    #[test]
    fn header_only_is_empty_sequence() {
        let seq = parse_str(&format!("{HEADER}\n")).unwrap();
        assert_eq!(seq.fps(), 60.0);
        assert_eq!(seq.width(), 3840);
        assert_eq!(seq.height(), 2160);
        assert!(seq.frames().is_empty());
        assert_eq!(seq.total_frames(), 0);
    }

    #[test]
    fn miss_marker_without_landmarks_key() {
        let input = format!("{HEADER}\n{{\"frame\":0,\"t\":0.0,\"detected\":false}}\n");
        let seq = parse_str(&input).unwrap();
        assert_eq!(seq.frames().len(), 1);
        assert!(!seq.frames()[0].is_detected());
    }

    #[test]
    fn short_landmark_list_reports_line() {
        let input = format!(
            "{HEADER}\n{{\"frame\":0,\"t\":0,\"detected\":true,\"landmarks\":{}}}\n{{\"frame\":1,\"t\":0.0166,\"detected\":true,\"landmarks\":{}}}\n",
            points_json(33),
            points_json(32)
        );
        let err = parse_str(&input).unwrap_err();
        assert_eq!(err.to_string(), "landmark count 32 \u{2260} 33 at line 3");
    }

    #[test]
    fn missing_header() {
        assert!(matches!(parse_str(""), Err(FormatError::MissingHeader)));
        let input = "{\"frame\":0,\"t\":0,\"detected\":false}\n";
        assert!(matches!(parse_str(input), Err(FormatError::MissingHeader)));
    }

    #[test]
    fn rejects_non_monotonic_frames() {
        let input = format!(
            "{HEADER}\n{{\"frame\":3,\"t\":0.05,\"detected\":false}}\n{{\"frame\":3,\"t\":0.05,\"detected\":false}}\n"
        );
        match parse_str(&input) {
            Err(FormatError::Record {
                line: 3,
                kind: RecordError::NonMonotonicFrame { prev: 3, got: 3 },
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_number_and_bad_visibility() {
        let pts = points_json(33).replacen("\"v\":0.9", "\"v\":1.5", 1);
        let input =
            format!("{HEADER}\n{{\"frame\":0,\"t\":0,\"detected\":true,\"landmarks\":{pts}}}\n");
        assert!(matches!(
            parse_str(&input),
            Err(FormatError::Record {
                line: 2,
                kind: RecordError::Visibility(_)
            })
        ));
        let pts = points_json(33).replacen("0.5", "0.5e999", 1);
        let input =
            format!("{HEADER}\n{{\"frame\":0,\"t\":0,\"detected\":true,\"landmarks\":{pts}}}\n");
        assert!(matches!(
            parse_str(&input),
            Err(FormatError::Record { line: 2, .. })
        ));
    }

    #[test]
    fn z_coordinate_is_ignored() {
        let pts: Vec<String> = (0..33)
            .map(|i| format!(r#"{{"x":{i},"y":1,"z":-0.3,"v":1}}"#))
            .collect();
        let input = format!(
            "{HEADER}\n{{\"frame\":0,\"t\":0,\"detected\":true,\"landmarks\":[{}]}}\n",
            pts.join(",")
        );
        let seq = parse_str(&input).unwrap();
        let skel = seq.frames()[0].landmarks.as_ref().unwrap();
        assert_eq!(skel[5], LandmarkPoint::new(5.0, 1.0, 1.0));
    }

    #[test]
    fn timestamp_must_track_frame_index() {
        let input = format!("{HEADER}\n{{\"frame\":60,\"t\":3.0,\"detected\":false}}\n");
        assert!(matches!(
            parse_str(&input),
            Err(FormatError::Record {
                line: 2,
                kind: RecordError::TimestampMismatch { .. }
            })
        ));
    }

    #[test]
    fn gaps_count_toward_total_frames() {
        let input = format!(
            "{HEADER}\n{{\"frame\":0,\"t\":0,\"detected\":false}}\n{{\"frame\":9,\"t\":0.15,\"detected\":false}}\n"
        );
        let seq = parse_str(&input).unwrap();
        assert_eq!(seq.total_frames(), 10);
    }

    #[test]
    fn writes_one_miss_line() {
        let info = VideoInfo {
            fps: 30.0,
            width: 100,
            height: 50,
        };
        let skel = Skeleton::new([LandmarkPoint::new(1.0, 2.0, 0.5); LANDMARK_COUNT]);
        let seq = LandmarkSequence::new(
            info,
            vec![
                LandmarkFrame::detected(0, 0.0, skel),
                LandmarkFrame::missed(1, 1.0 / 30.0),
            ],
        )
        .unwrap();
        let text = String::from_utf8(write_to_vec(&seq)).unwrap();
        assert_eq!(text.matches("\"detected\":false").count(), 1);
        assert_eq!(parse_str(&text).unwrap(), seq);
    }
}
