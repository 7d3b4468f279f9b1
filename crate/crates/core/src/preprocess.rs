//! Swim direction, left/right label correction and detection rate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::{index, LandmarkSequence, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Positive means travelling toward increasing pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SwimDirection {
    pub axis: Axis,
    pub sense: Sense,
}

impl SwimDirection {
    pub const LEFT_TO_RIGHT: Self = Self::new(Axis::Horizontal, Sense::Positive);
    pub const RIGHT_TO_LEFT: Self = Self::new(Axis::Horizontal, Sense::Negative);
    pub const TOP_TO_BOTTOM: Self = Self::new(Axis::Vertical, Sense::Positive);
    pub const BOTTOM_TO_TOP: Self = Self::new(Axis::Vertical, Sense::Negative);

    pub const ALL: [Self; 4] = [
        Self::LEFT_TO_RIGHT,
        Self::RIGHT_TO_LEFT,
        Self::TOP_TO_BOTTOM,
        Self::BOTTOM_TO_TOP,
    ];

    pub const fn new(axis: Axis, sense: Sense) -> Self {
        Self { axis, sense }
    }

    /// Unit vector of travel in image coordinates.
    pub fn forward(self) -> (f64, f64) {
        let s = match self.sense {
            Sense::Positive => 1.0,
            Sense::Negative => -1.0,
        };
        match self.axis {
            Axis::Horizontal => (s, 0.0),
            Axis::Vertical => (0.0, s),
        }
    }

    /// Unit vector toward a face-down swimmer's right side: the forward vector
    /// turned 90 degrees clockwise on screen.
    pub fn right(self) -> (f64, f64) {
        let (fx, fy) = self.forward();
        (-fy, fx)
    }

    pub fn code(self) -> &'static str {
        match (self.axis, self.sense) {
            (Axis::Horizontal, Sense::Positive) => "ltr",
            (Axis::Horizontal, Sense::Negative) => "rtl",
            (Axis::Vertical, Sense::Positive) => "ttb",
            (Axis::Vertical, Sense::Negative) => "btt",
        }
    }
}

impl fmt::Display for SwimDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown direction '{0}' (expected ltr, rtl, ttb or btt)")]
pub struct ParseDirectionError(String);

impl FromStr for SwimDirection {
    type Err = ParseDirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ltr" => Ok(Self::LEFT_TO_RIGHT),
            "rtl" => Ok(Self::RIGHT_TO_LEFT),
            "ttb" => Ok(Self::TOP_TO_BOTTOM),
            "btt" => Ok(Self::BOTTOM_TO_TOP),
            other => Err(ParseDirectionError(other.to_string())),
        }
    }
}

impl TryFrom<String> for SwimDirection {
    type Error = ParseDirectionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SwimDirection> for String {
    fn from(d: SwimDirection) -> String {
        d.code().to_string()
    }
}

/// A bilateral landmark pair, stored as (left, right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetricPair {
    pub left: usize,
    pub right: usize,
}

pub const SYMMETRIC_PAIRS: [SymmetricPair; 6] = [
    SymmetricPair {
        left: index::LEFT_SHOULDER,
        right: index::RIGHT_SHOULDER,
    },
    SymmetricPair {
        left: index::LEFT_ELBOW,
        right: index::RIGHT_ELBOW,
    },
    SymmetricPair {
        left: index::LEFT_WRIST,
        right: index::RIGHT_WRIST,
    },
    SymmetricPair {
        left: index::LEFT_HIP,
        right: index::RIGHT_HIP,
    },
    SymmetricPair {
        left: index::LEFT_KNEE,
        right: index::RIGHT_KNEE,
    },
    SymmetricPair {
        left: index::LEFT_ANKLE,
        right: index::RIGHT_ANKLE,
    },
];

impl SymmetricPair {
    /// Exchanges the two labels. Applying it twice restores the skeleton.
    pub fn swap(self, skeleton: &mut Skeleton) {
        skeleton.swap(self.left, self.right);
    }

    /// True when the pair's cross-axis ordering contradicts `dir`. The right
    /// limb of a face-down swimmer lies on the clockwise side of the travel
    /// direction; equal coordinates are never a contradiction.
    pub fn is_mislabeled(self, skeleton: &Skeleton, dir: SwimDirection) -> bool {
        let (rx, ry) = dir.right();
        let l = skeleton[self.left];
        let r = skeleton[self.right];
        let lateral = (r.x - l.x) * rx + (r.y - l.y) * ry;
        lateral < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("need at least 2 detected frames to estimate direction, found {0}")]
    TooFewDetections(usize),
    #[error("nose shows no net displacement; pass an explicit direction")]
    NoDisplacement,
}

/// Ratio of detected frames to all frames in the covered span.
pub fn detection_rate(seq: &LandmarkSequence) -> Result<f64, PreprocessError> {
    let total = seq.total_frames();
    if total == 0 {
        return Err(PreprocessError::EmptySequence);
    }
    Ok(seq.detected_count() as f64 / total as f64)
}

/// Dominant axis and sign of the nose's net displacement between the first
/// and last detected frames.
pub fn estimate_direction(seq: &LandmarkSequence) -> Result<SwimDirection, PreprocessError> {
    let mut detected = seq.detected_frames();
    let first = detected.next();
    let last = detected.last();
    let (first, last) = match (first, last) {
        (Some((_, a)), Some((_, b))) => (a, b),
        (Some(_), None) => return Err(PreprocessError::TooFewDetections(1)),
        _ => return Err(PreprocessError::TooFewDetections(0)),
    };
    let dx = last[index::NOSE].x - first[index::NOSE].x;
    let dy = last[index::NOSE].y - first[index::NOSE].y;
    if dx == 0.0 && dy == 0.0 {
        return Err(PreprocessError::NoDisplacement);
    }
    let sense = |d: f64| {
        if d > 0.0 {
            Sense::Positive
        } else {
            Sense::Negative
        }
    };
    Ok(if dx.abs() >= dy.abs() {
        SwimDirection::new(Axis::Horizontal, sense(dx))
    } else {
        SwimDirection::new(Axis::Vertical, sense(dy))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSequence {
    pub base: LandmarkSequence,
    pub direction: SwimDirection,
    /// Frame indices where at least one pair was relabeled.
    pub swapped_frames: BTreeSet<u64>,
    pub swapped_pairs: usize,
}

/// Relabels every symmetric pair whose geometry contradicts the swim direction.
/// Coordinates are never modified.
pub fn correct_sides(seq: &LandmarkSequence, dir: SwimDirection) -> CorrectedSequence {
    let mut swapped_frames = BTreeSet::new();
    let mut swapped_pairs = 0;
    let base = seq.map_frames(|frame| {
        let mut frame = frame.clone();
        if let Some(skeleton) = frame.landmarks.as_mut() {
            for pair in SYMMETRIC_PAIRS {
                if pair.is_mislabeled(skeleton, dir) {
                    pair.swap(skeleton);
                    swapped_pairs += 1;
                    swapped_frames.insert(frame.frame_index);
                }
            }
        }
        frame
    });
    CorrectedSequence {
        base,
        direction: dir,
        swapped_frames,
        swapped_pairs,
    }
}
