//! Body reference line and per-side upper-arm angles.
//!
//! The reference line runs from the hip midpoint to the nose. Each arm's angle
//! is the rotation from that line to the shoulder-to-elbow vector, in degrees
//! within `[0, 360)`. The right arm is measured clockwise on screen and the
//! left arm counterclockwise, so mirror-image arm positions give equal angles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::{index, LandmarkFrame, Skeleton};
use crate::preprocess::CorrectedSequence;

/// Minimum vector length, in pixels, for a direction to be meaningful.
pub const MIN_SEGMENT_PX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn shoulder_elbow(self) -> (usize, usize) {
        match self {
            Side::Left => (index::LEFT_SHOULDER, index::LEFT_ELBOW),
            Side::Right => (index::RIGHT_SHOULDER, index::RIGHT_ELBOW),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("frame {0} has no landmarks")]
    NotDetected(u64),
    #[error("reference line shorter than {MIN_SEGMENT_PX} px ({0:.3} px)")]
    DegenerateReference(f64),
    #[error("upper arm shorter than {MIN_SEGMENT_PX} px ({0:.3} px)")]
    DegenerateArm(f64),
    #[error("no frame yields a {0} arm angle")]
    EmptySeries(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLine {
    pub origin: (f64, f64),
    /// Unit vector from the hip midpoint toward the nose.
    pub direction: (f64, f64),
}

impl ReferenceLine {
    pub fn from_skeleton(skeleton: &Skeleton) -> Result<Self, KinematicsError> {
        let lh = skeleton[index::LEFT_HIP];
        let rh = skeleton[index::RIGHT_HIP];
        let nose = skeleton[index::NOSE];
        let origin = ((lh.x + rh.x) / 2.0, (lh.y + rh.y) / 2.0);
        let (dx, dy) = (nose.x - origin.0, nose.y - origin.1);
        let len = dx.hypot(dy);
        if len < MIN_SEGMENT_PX {
            return Err(KinematicsError::DegenerateReference(len));
        }
        Ok(Self {
            origin,
            direction: (dx / len, dy / len),
        })
    }
}

pub fn reference_line(frame: &LandmarkFrame) -> Result<ReferenceLine, KinematicsError> {
    let skeleton = frame
        .landmarks
        .as_ref()
        .ok_or(KinematicsError::NotDetected(frame.frame_index))?;
    ReferenceLine::from_skeleton(skeleton)
}

fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can round a tiny negative up to exactly 360
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

pub fn skeleton_arm_angle(skeleton: &Skeleton, side: Side) -> Result<f64, KinematicsError> {
    let reference = ReferenceLine::from_skeleton(skeleton)?;
    let (si, ei) = side.shoulder_elbow();
    let (ux, uy) = (
        skeleton[ei].x - skeleton[si].x,
        skeleton[ei].y - skeleton[si].y,
    );
    let len = ux.hypot(uy);
    if len < MIN_SEGMENT_PX {
        return Err(KinematicsError::DegenerateArm(len));
    }
    let (dx, dy) = reference.direction;
    let cross = dx * uy - dy * ux;
    let dot = dx * ux + dy * uy;
    // with y pointing down, a positive cross product is a clockwise turn
    let clockwise = cross.atan2(dot).to_degrees();
    Ok(normalize_degrees(match side {
        Side::Right => clockwise,
        Side::Left => -clockwise,
    }))
}

pub fn arm_angle(frame: &LandmarkFrame, side: Side) -> Result<f64, KinematicsError> {
    let skeleton = frame
        .landmarks
        .as_ref()
        .ok_or(KinematicsError::NotDetected(frame.frame_index))?;
    skeleton_arm_angle(skeleton, side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub timestamp: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSeries {
    pub side: Side,
    pub samples: Vec<AngleSample>,
    pub source_fps: f64,
}

impl AngleSeries {
    pub fn new(side: Side, samples: Vec<AngleSample>, source_fps: f64) -> Self {
        Self {
            side,
            samples,
            source_fps,
        }
    }

    /// Builds a series from `(t, angle)` pairs, e.g. a uniformly sampled signal.
    pub fn from_pairs(
        side: Side,
        source_fps: f64,
        pairs: impl IntoIterator<Item = (f64, f64)>,
    ) -> Self {
        let samples = pairs
            .into_iter()
            .map(|(timestamp, angle)| AngleSample { timestamp, angle })
            .collect();
        Self::new(side, samples, source_fps)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    pub fn mean_angle(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        Some(self.samples.iter().map(|s| s.angle).sum::<f64>() / self.samples.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,angle_deg\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.timestamp, s.angle));
        }
        out
    }
}

/// One sample per frame where the angle is computable; misses and degenerate
/// frames leave gaps.
pub fn angle_series(seq: &CorrectedSequence, side: Side) -> Result<AngleSeries, KinematicsError> {
    let mut samples: Vec<AngleSample> = Vec::new();
    for (frame, skeleton) in seq.base.detected_frames() {
        let Ok(angle) = skeleton_arm_angle(skeleton, side) else {
            continue;
        };
        if samples
            .last()
            .is_some_and(|last| frame.timestamp <= last.timestamp)
        {
            continue;
        }
        samples.push(AngleSample {
            timestamp: frame.timestamp,
            angle,
        });
    }
    if samples.is_empty() {
        return Err(KinematicsError::EmptySeries(side.name()));
    }
    Ok(AngleSeries::new(side, samples, seq.base.fps()))
}
