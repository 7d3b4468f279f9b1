//! Deterministic synthetic swimmer with full ground truth.
//!
//! The swimmer travels in a straight line at constant speed, face down, with
//! arms following a periodic angle profile (fundamental plus a second
//! harmonic) half a cycle apart. World units are meters, mapped to pixels at
//! [`PX_PER_M`]. Dropout, label swaps, angle noise and head jitter are drawn
//! from independent seeded streams, so changing one knob leaves the others'
//! draws untouched.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::{
    index, LandmarkFrame, LandmarkPoint, LandmarkSequence, Skeleton, VideoInfo, LANDMARK_COUNT,
};
use crate::preprocess::{Axis, Sense, SwimDirection, SYMMETRIC_PAIRS};
use crate::velocity::{PoolCalibration, Raster};

pub const PX_PER_M: f64 = 20.0;
pub const MAX_RASTER_SIDE: u32 = 8192;

pub const WATER_COLOR: [u8; 3] = [30, 120, 200];
pub const SKIN_COLOR: [u8; 3] = [225, 185, 150];
pub const SPLASH_COLOR: [u8; 3] = [245, 250, 255];

/// Mean arm angle, degrees.
pub const ARM_MEAN_DEG: f64 = 180.0;
/// Fundamental amplitude of the arm angle, degrees.
pub const ARM_AMPLITUDE_DEG: f64 = 75.0;
/// Second-harmonic amplitude relative to the fundamental.
pub const ARM_HARMONIC: f64 = 0.3;

// body geometry, meters
const NOSE_TO_SHOULDERS: f64 = 0.25;
const SHOULDERS_TO_HIPS: f64 = 0.55;
const SHOULDER_HALF: f64 = 0.25;
const UPPER_ARM: f64 = 0.14;
const FOREARM: f64 = 0.10;
const HIP_HALF: f64 = 0.16;
const THIGH: f64 = 0.45;
const SHIN: f64 = 0.45;
const KNEE_HALF: f64 = 0.13;
const ANKLE_HALF: f64 = 0.11;
const BODY_HALF_WIDTH: f64 = 0.2;

const MARGIN_M: f64 = 2.0;
const CROSS_HALF_M: f64 = 3.0;
const STRIPE_M: f64 = 0.2;
const SPLASH_HALF_M: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("raster {width}x{height} exceeds {MAX_RASTER_SIDE} px per side")]
    RasterTooLarge { width: u32, height: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwimScenario {
    /// Seconds per stroke cycle.
    pub cadence: f64,
    /// Meters per second.
    pub velocity: f64,
    pub direction: SwimDirection,
    pub duration: f64,
    pub fps: f64,
    pub dropout_prob: f64,
    /// Mean length in frames of a dropout burst; 1 gives i.i.d. dropout.
    pub dropout_burst_mean: f64,
    pub swap_prob: f64,
    pub angle_noise_sd: f64,
    /// Degrees added to every right-arm angle.
    pub asymmetry_offset: f64,
    pub head_noise_px: f64,
    /// Probability that a rendered frame has a splash over the head.
    pub splash_prob: f64,
    pub marker_spacing: f64,
    pub seed: u64,
}

impl Default for SwimScenario {
    fn default() -> Self {
        Self {
            cadence: 2.0,
            velocity: 1.5,
            direction: SwimDirection::LEFT_TO_RIGHT,
            duration: 20.0,
            fps: 60.0,
            dropout_prob: 0.0,
            dropout_burst_mean: 1.0,
            swap_prob: 0.0,
            angle_noise_sd: 0.0,
            asymmetry_offset: 0.0,
            head_noise_px: 0.0,
            splash_prob: 0.0,
            marker_spacing: 10.0,
            seed: 0,
        }
    }
}

impl SwimScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("cadence", self.cadence),
            ("velocity", self.velocity),
            ("duration", self.duration),
            ("fps", self.fps),
            ("marker_spacing", self.marker_spacing),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidScenario(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        for (name, p) in [
            ("dropout_prob", self.dropout_prob),
            ("swap_prob", self.swap_prob),
            ("splash_prob", self.splash_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(SimError::InvalidScenario(format!(
                    "{name} must be in [0, 1), got {p}"
                )));
            }
        }
        for (name, v) in [
            ("angle_noise_sd", self.angle_noise_sd),
            ("head_noise_px", self.head_noise_px),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidScenario(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(self.dropout_burst_mean.is_finite() && self.dropout_burst_mean >= 1.0) {
            return Err(SimError::InvalidScenario(format!(
                "dropout_burst_mean must be >= 1, got {}",
                self.dropout_burst_mean
            )));
        }
        if !self.asymmetry_offset.is_finite() {
            return Err(SimError::InvalidScenario(
                "asymmetry_offset must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration * self.fps + 1e-9).floor() as u64 + 1
    }

    /// Distance covered, meters.
    pub fn distance(&self) -> f64 {
        self.velocity * self.duration
    }

    pub fn pool_length_m(&self) -> f64 {
        self.distance() + 2.0 * MARGIN_M
    }

    /// Image dimensions: along-axis extent covers the swim, cross-axis is fixed.
    pub fn image_size(&self) -> (u32, u32) {
        let along = (self.pool_length_m() * PX_PER_M).ceil() as u32;
        let across = (2.0 * CROSS_HALF_M * PX_PER_M).round() as u32;
        match self.direction.axis {
            Axis::Horizontal => (along, across),
            Axis::Vertical => (across, along),
        }
    }

    /// Times at which the head reaches each marker passed during the swim.
    pub fn crossing_times(&self) -> Vec<f64> {
        let count = (self.distance() / self.marker_spacing + 1e-9).floor() as u64;
        (1..=count)
            .map(|k| k as f64 * self.marker_spacing / self.velocity)
            .collect()
    }

    /// Pixel position of pool point `along` meters from the start line and
    /// `lateral` meters toward the swimmer's right.
    pub fn to_pixel(&self, along: f64, lateral: f64) -> (f64, f64) {
        let (w, h) = self.image_size();
        let along_len = match self.direction.axis {
            Axis::Horizontal => w,
            Axis::Vertical => h,
        } as f64;
        let from_trailing = (MARGIN_M + along) * PX_PER_M;
        let a = match self.direction.sense {
            Sense::Positive => from_trailing,
            Sense::Negative => along_len - from_trailing,
        };
        let (rx, ry) = self.direction.right();
        let c = CROSS_HALF_M * PX_PER_M;
        match self.direction.axis {
            Axis::Horizontal => (a, c + lateral * PX_PER_M * ry),
            Axis::Vertical => (c + lateral * PX_PER_M * rx, a),
        }
    }

    fn along_of_pixel(&self, p: u32) -> f64 {
        let (w, h) = self.image_size();
        let along_len = match self.direction.axis {
            Axis::Horizontal => w,
            Axis::Vertical => h,
        } as f64;
        let center = p as f64 + 0.5;
        let from_trailing = match self.direction.sense {
            Sense::Positive => center,
            Sense::Negative => along_len - center,
        };
        from_trailing / PX_PER_M - MARGIN_M
    }
}

/// Arm angle at stroke phase `phase` (radians), before offset and noise.
pub fn arm_profile(phase: f64) -> f64 {
    ARM_MEAN_DEG + ARM_AMPLITUDE_DEG * (phase.sin() + ARM_HARMONIC * (2.0 * phase).sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: u64,
    pub t: f64,
    pub detected: bool,
    /// Right-arm stroke phase in radians, `[0, 2pi)`.
    pub phase: f64,
    pub right_angle: f64,
    pub left_angle: f64,
    /// Bit i set when `SYMMETRIC_PAIRS[i]` was emitted with swapped labels.
    pub swapped_pairs: u8,
    /// Head position along the pool, meters.
    pub head_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cadence: f64,
    pub velocity: f64,
    pub direction: SwimDirection,
    pub marker_spacing: f64,
    pub crossing_times: Vec<f64>,
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    /// Undoes the injected swaps, giving the true labels of `seq`.
    pub fn true_labels(&self, seq: &LandmarkSequence) -> LandmarkSequence {
        seq.map_frames(|frame| {
            let mut frame = frame.clone();
            let truth = self
                .frames
                .get(frame.frame_index as usize)
                .filter(|t| t.frame == frame.frame_index);
            if let (Some(skel), Some(truth)) = (frame.landmarks.as_mut(), truth) {
                for (i, pair) in SYMMETRIC_PAIRS.iter().enumerate() {
                    if truth.swapped_pairs & (1 << i) != 0 {
                        pair.swap(skel);
                    }
                }
            }
            frame
        })
    }

    pub fn detection_rate(&self) -> f64 {
        self.frames.iter().filter(|f| f.detected).count() as f64 / self.frames.len() as f64
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Places all 33 landmarks for the given arm angles and head position.
fn build_skeleton(sc: &SwimScenario, head_m: f64, right_deg: f64, left_deg: f64) -> Skeleton {
    let shoulders = head_m - NOSE_TO_SHOULDERS;
    let hips = shoulders - SHOULDERS_TO_HIPS;
    let knees = hips - THIGH;
    let ankles = knees - SHIN;
    let (r, l) = (right_deg.to_radians(), left_deg.to_radians());
    // lateral is measured toward the right, so the left arm's sweep is mirrored
    let r_dir = (r.cos(), r.sin());
    let l_dir = (l.cos(), -l.sin());

    let mut pts = [(0.0, 0.0); LANDMARK_COUNT];
    use index::*;
    pts[NOSE] = (head_m, 0.0);
    pts[LEFT_EYE_INNER] = (head_m - 0.03, -0.02);
    pts[LEFT_EYE] = (head_m - 0.03, -0.04);
    pts[LEFT_EYE_OUTER] = (head_m - 0.03, -0.06);
    pts[RIGHT_EYE_INNER] = (head_m - 0.03, 0.02);
    pts[RIGHT_EYE] = (head_m - 0.03, 0.04);
    pts[RIGHT_EYE_OUTER] = (head_m - 0.03, 0.06);
    pts[LEFT_EAR] = (head_m - 0.1, -0.08);
    pts[RIGHT_EAR] = (head_m - 0.1, 0.08);
    pts[MOUTH_LEFT] = (head_m - 0.01, -0.03);
    pts[MOUTH_RIGHT] = (head_m - 0.01, 0.03);
    pts[LEFT_SHOULDER] = (shoulders, -SHOULDER_HALF);
    pts[RIGHT_SHOULDER] = (shoulders, SHOULDER_HALF);
    let limb =
        |base: (f64, f64), dir: (f64, f64), len: f64| (base.0 + len * dir.0, base.1 + len * dir.1);
    pts[LEFT_ELBOW] = limb(pts[LEFT_SHOULDER], l_dir, UPPER_ARM);
    pts[RIGHT_ELBOW] = limb(pts[RIGHT_SHOULDER], r_dir, UPPER_ARM);
    pts[LEFT_WRIST] = limb(pts[LEFT_SHOULDER], l_dir, UPPER_ARM + FOREARM);
    pts[RIGHT_WRIST] = limb(pts[RIGHT_SHOULDER], r_dir, UPPER_ARM + FOREARM);
    for (idx, wrist, dir) in [
        (LEFT_PINKY, LEFT_WRIST, l_dir),
        (LEFT_INDEX, LEFT_WRIST, l_dir),
        (LEFT_THUMB, LEFT_WRIST, l_dir),
        (RIGHT_PINKY, RIGHT_WRIST, r_dir),
        (RIGHT_INDEX, RIGHT_WRIST, r_dir),
        (RIGHT_THUMB, RIGHT_WRIST, r_dir),
    ] {
        pts[idx] = limb(pts[wrist], dir, 0.05);
    }
    pts[LEFT_HIP] = (hips, -HIP_HALF);
    pts[RIGHT_HIP] = (hips, HIP_HALF);
    pts[LEFT_KNEE] = (knees, -KNEE_HALF);
    pts[RIGHT_KNEE] = (knees, KNEE_HALF);
    pts[LEFT_ANKLE] = (ankles, -ANKLE_HALF);
    pts[RIGHT_ANKLE] = (ankles, ANKLE_HALF);
    pts[LEFT_HEEL] = (ankles - 0.05, -ANKLE_HALF);
    pts[RIGHT_HEEL] = (ankles - 0.05, ANKLE_HALF);
    pts[LEFT_FOOT_INDEX] = (ankles - 0.2, -ANKLE_HALF);
    pts[RIGHT_FOOT_INDEX] = (ankles - 0.2, ANKLE_HALF);

    let mut out = [LandmarkPoint::default(); LANDMARK_COUNT];
    for (slot, (along, lateral)) in out.iter_mut().zip(pts) {
        let (x, y) = sc.to_pixel(along, lateral);
        *slot = LandmarkPoint::new(x, y, 0.99);
    }
    Skeleton::new(out)
}

/// Generates the landmark sequence and its ground truth.
pub fn generate(sc: &SwimScenario) -> Result<(LandmarkSequence, GroundTruth), SimError> {
    sc.validate()?;
    let mut drop_rng = rng_stream(sc.seed, 0);
    let mut swap_rng = rng_stream(sc.seed, 1);
    let mut noise_rng = rng_stream(sc.seed, 2);
    let angle_noise = Normal::new(0.0, sc.angle_noise_sd).expect("sd validated");
    let head_noise = Normal::new(0.0, sc.head_noise_px).expect("sd validated");

    let burst = sc.dropout_burst_mean;
    let (start_drop, stay_dropped) = if burst > 1.0 {
        let start = (sc.dropout_prob / (burst * (1.0 - sc.dropout_prob))).min(1.0);
        (start, 1.0 - 1.0 / burst)
    } else {
        (sc.dropout_prob, sc.dropout_prob)
    };

    let (width, height) = sc.image_size();
    let info = VideoInfo {
        fps: sc.fps,
        width,
        height,
    };
    let mut frames = Vec::new();
    let mut truths = Vec::new();
    let mut dropped = false;
    for k in 0..sc.frame_count() {
        let t = k as f64 / sc.fps;
        let phase = (TAU * t / sc.cadence).rem_euclid(TAU);
        let right = arm_profile(phase) + sc.asymmetry_offset + angle_noise.sample(&mut noise_rng);
        let left = arm_profile(phase + PI) + angle_noise.sample(&mut noise_rng);
        let jitter = (
            head_noise.sample(&mut noise_rng),
            head_noise.sample(&mut noise_rng),
        );

        let u: f64 = drop_rng.random();
        dropped = if dropped {
            u < stay_dropped
        } else {
            u < start_drop
        };

        let mut swapped = 0u8;
        for i in 0..SYMMETRIC_PAIRS.len() {
            if swap_rng.random::<f64>() < sc.swap_prob {
                swapped |= 1 << i;
            }
        }

        let head_m = sc.velocity * t;
        if dropped {
            frames.push(LandmarkFrame::missed(k, t));
            swapped = 0;
        } else {
            let mut skel = build_skeleton(sc, head_m, right, left);
            skel[index::NOSE].x += jitter.0;
            skel[index::NOSE].y += jitter.1;
            for (i, pair) in SYMMETRIC_PAIRS.iter().enumerate() {
                if swapped & (1 << i) != 0 {
                    pair.swap(&mut skel);
                }
            }
            frames.push(LandmarkFrame::detected(k, t, skel));
        }
        truths.push(FrameTruth {
            frame: k,
            t,
            detected: !dropped,
            phase,
            right_angle: right,
            left_angle: left,
            swapped_pairs: swapped,
            head_m,
        });
    }

    let seq = LandmarkSequence::new(info, frames)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let truth = GroundTruth {
        cadence: sc.cadence,
        velocity: sc.velocity,
        direction: sc.direction,
        marker_spacing: sc.marker_spacing,
        crossing_times: sc.crossing_times(),
        frames: truths,
    };
    Ok((seq, truth))
}

/// Renders top-down frames: water, marker stripes across the lane and the swimmer.
#[derive(Debug, Clone)]
pub struct FrameRenderer {
    scenario: SwimScenario,
    calibration: PoolCalibration,
    width: u32,
    height: u32,
    marker_lines: Vec<bool>,
}

pub fn render_frames(sc: &SwimScenario, cal: &PoolCalibration) -> Result<FrameRenderer, SimError> {
    sc.validate()?;
    cal.validate()
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let (width, height) = sc.image_size();
    if width > MAX_RASTER_SIDE || height > MAX_RASTER_SIDE {
        return Err(SimError::RasterTooLarge { width, height });
    }
    let along_len = match sc.direction.axis {
        Axis::Horizontal => width,
        Axis::Vertical => height,
    };
    let marker_lines = (0..along_len)
        .map(|p| {
            let s = sc.along_of_pixel(p);
            let k = (s / cal.marker_spacing).floor();
            k >= 1.0 && s - k * cal.marker_spacing < STRIPE_M
        })
        .collect();
    Ok(FrameRenderer {
        scenario: sc.clone(),
        calibration: *cal,
        width,
        height,
        marker_lines,
    })
}

impl FrameRenderer {
    pub fn frame_count(&self) -> u64 {
        self.scenario.frame_count()
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn fill_pool_rect(
        &self,
        raster: &mut Raster,
        a0: f64,
        a1: f64,
        c0: f64,
        c1: f64,
        rgb: [u8; 3],
    ) {
        let p = self.scenario.to_pixel(a0, c0);
        let q = self.scenario.to_pixel(a1, c1);
        let x0 = p.0.min(q.0).max(0.0).round() as u32;
        let x1 = p.0.max(q.0).max(0.0).round() as u32;
        let y0 = p.1.min(q.1).max(0.0).round() as u32;
        let y1 = p.1.max(q.1).max(0.0).round() as u32;
        raster.fill_rect(x0, y0, x1, y1, rgb);
    }

    pub fn render(&self, frame_index: u64) -> Raster {
        let mut raster = Raster::filled(self.width, self.height, WATER_COLOR);
        let color = self.calibration.marker_color;
        for (p, _) in self.marker_lines.iter().enumerate().filter(|(_, m)| **m) {
            match self.scenario.direction.axis {
                Axis::Horizontal => raster.fill_rect(p as u32, 0, p as u32 + 1, self.height, color),
                Axis::Vertical => raster.fill_rect(0, p as u32, self.width, p as u32 + 1, color),
            }
        }

        let t = frame_index as f64 / self.scenario.fps;
        let head = self.scenario.velocity * t;
        let tail = head - NOSE_TO_SHOULDERS - SHOULDERS_TO_HIPS - THIGH - SHIN;
        self.fill_pool_rect(
            &mut raster,
            tail,
            head,
            -BODY_HALF_WIDTH,
            BODY_HALF_WIDTH,
            SKIN_COLOR,
        );

        if self.scenario.splash_prob > 0.0 {
            let mut rng = rng_stream(
                self.scenario.seed ^ frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                3,
            );
            if rng.random::<f64>() < self.scenario.splash_prob {
                self.fill_pool_rect(
                    &mut raster,
                    head - SPLASH_HALF_M,
                    head + SPLASH_HALF_M,
                    -SPLASH_HALF_M,
                    SPLASH_HALF_M,
                    SPLASH_COLOR,
                );
            }
        }
        raster
    }

    pub fn frames(&self) -> impl Iterator<Item = Raster> + '_ {
        (0..self.frame_count()).map(|k| self.render(k))
    }
}
