use proptest::prelude::*;

use swimtrack::kinematics::{skeleton_arm_angle, AngleSeries, Side};
use swimtrack::landmarks::{
    index, parse_str, write_to_vec, FormatError, LandmarkFrame, LandmarkPoint, LandmarkSequence,
    Skeleton, VideoInfo, LANDMARK_COUNT,
};
use swimtrack::metrics::{
    detect_peaks, stroke_duration_fft, stroke_duration_peaks, symmetry_from_means, FftConfig,
    PeakConfig,
};
use swimtrack::preprocess::{
    correct_sides, detection_rate, estimate_direction, SwimDirection, SYMMETRIC_PAIRS,
};
use swimtrack::velocity::{
    extract_crossings, marker_fraction, velocity_segments, AdjacencySample, MarkerCrossing,
    PoolCalibration, Raster,
};

fn point() -> impl Strategy<Value = LandmarkPoint> {
    (-2000.0..4000.0f64, -2000.0..4000.0f64, 0.0..=1.0f64)
        .prop_map(|(x, y, v)| LandmarkPoint::new(x, y, v))
}

fn skeleton() -> impl Strategy<Value = Skeleton> {
    prop::collection::vec(point(), LANDMARK_COUNT).prop_map(|pts| {
        let mut arr = [LandmarkPoint::default(); LANDMARK_COUNT];
        arr.copy_from_slice(&pts);
        Skeleton::new(arr)
    })
}

fn sequence() -> impl Strategy<Value = LandmarkSequence> {
    let frames = prop::collection::vec(
        (
            1u64..4,
            -0.45..0.45f64,
            prop::option::weighted(0.75, skeleton()),
        ),
        0..16,
    );
    (1.0..120.0f64, 1u32..5000, 1u32..5000, frames).prop_map(|(fps, width, height, raw)| {
        let mut k = 0;
        let frames = raw
            .into_iter()
            .map(|(step, jitter, skel)| {
                k += step;
                let t = (k as f64 + jitter) / fps;
                match skel {
                    Some(s) => LandmarkFrame::detected(k, t, s),
                    None => LandmarkFrame::missed(k, t),
                }
            })
            .collect();
        LandmarkSequence::new(VideoInfo { fps, width, height }, frames).unwrap()
    })
}

fn valid_arms(s: &Skeleton) -> bool {
    Side::BOTH
        .iter()
        .all(|&side| skeleton_arm_angle(s, side).is_ok())
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn map_points(s: &Skeleton, f: impl Fn(f64, f64) -> (f64, f64)) -> Skeleton {
    let mut arr = [LandmarkPoint::default(); LANDMARK_COUNT];
    for (i, p) in arr.iter_mut().enumerate() {
        let (x, y) = f(s[i].x, s[i].y);
        *p = LandmarkPoint::new(x, y, s[i].visibility);
    }
    Skeleton::new(arr)
}

fn direction() -> impl Strategy<Value = SwimDirection> {
    prop::sample::select(SwimDirection::ALL.to_vec())
}

proptest! {
    #[test]
    fn parse_inverts_write(seq in sequence()) {
        let text = write_to_vec(&seq);
        let back = parse_str(std::str::from_utf8(&text).unwrap()).unwrap();
        prop_assert_eq!(&back, &seq);
        prop_assert_eq!(write_to_vec(&back), text);
    }

    #[test]
    fn wrong_landmark_count_names_its_line(seq in sequence(), pick in any::<prop::sample::Index>(), n in 0usize..40) {
        prop_assume!(n != LANDMARK_COUNT && seq.detected_count() > 0);
        let text = String::from_utf8(write_to_vec(&seq)).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let detected: Vec<usize> = (1..lines.len()).filter(|&i| lines[i].contains("\"detected\":true")).collect();
        let target = *pick.get(&detected);
        let mut rec: serde_json::Value = serde_json::from_str(&lines[target]).unwrap();
        let pts = rec["landmarks"].as_array().unwrap().clone();
        rec["landmarks"] = (0..n).map(|i| pts[i % pts.len()].clone()).collect::<Vec<_>>().into();
        lines[target] = rec.to_string();
        match parse_str(&lines.join("\n")) {
            Err(FormatError::Record { line, kind }) => {
                prop_assert_eq!(line, target + 1);
                prop_assert_eq!(kind.to_string(), format!("landmark count {n} \u{2260} 33"));
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn side_correction_is_idempotent(seq in sequence(), dir in direction()) {
        let once = correct_sides(&seq, dir);
        let twice = correct_sides(&once.base, dir);
        prop_assert_eq!(twice.swapped_pairs, 0);
        prop_assert_eq!(&twice.base, &once.base);
        for f in &once.swapped_frames {
            prop_assert!(seq.frames().iter().any(|g| g.frame_index == *f && g.is_detected()));
        }
    }

    #[test]
    fn side_correction_only_relabels(seq in sequence(), dir in direction()) {
        let corrected = correct_sides(&seq, dir);
        prop_assert_eq!(detection_rate(&corrected.base), detection_rate(&seq));
        for (a, b) in seq.frames().iter().zip(corrected.base.frames()) {
            prop_assert_eq!(a.frame_index, b.frame_index);
            prop_assert_eq!(a.timestamp, b.timestamp);
            match (&a.landmarks, &b.landmarks) {
                (Some(x), Some(y)) => {
                    let key = |p: &LandmarkPoint| (p.x.to_bits(), p.y.to_bits(), p.visibility.to_bits());
                    let mut before: Vec<_> = x.points().iter().map(key).collect();
                    let mut after: Vec<_> = y.points().iter().map(key).collect();
                    before.sort_unstable();
                    after.sort_unstable();
                    prop_assert_eq!(before, after);
                }
                (None, None) => {}
                _ => prop_assert!(false, "detection flag changed"),
            }
        }
    }

    #[test]
    fn pair_swap_is_an_involution(s in skeleton()) {
        for pair in SYMMETRIC_PAIRS {
            let mut t = s.clone();
            pair.swap(&mut t);
            pair.swap(&mut t);
            prop_assert_eq!(&t, &s);
        }
    }

    #[test]
    fn direction_ignores_translation(seq in sequence(), dx in -1e3..1e3f64, dy in -1e3..1e3f64) {
        let moved = seq.map_frames(|f| {
            let mut f = f.clone();
            if let Some(s) = &f.landmarks {
                f.landmarks = Some(map_points(s, |x, y| (x + dx, y + dy)));
            }
            f
        });
        prop_assert_eq!(estimate_direction(&moved), estimate_direction(&seq));
    }

    #[test]
    fn arm_angle_survives_similarity_transforms(
        s in skeleton(),
        theta in 0.0..std::f64::consts::TAU,
        scale in 0.05..20.0f64,
        tx in -1e4..1e4f64,
        ty in -1e4..1e4f64,
    ) {
        let moved = map_points(&s, |x, y| {
            let (c, sn) = (theta.cos(), theta.sin());
            (scale * (c * x - sn * y) + tx, scale * (sn * x + c * y) + ty)
        });
        prop_assume!(valid_arms(&s) && valid_arms(&moved));
        for side in Side::BOTH {
            let a = skeleton_arm_angle(&s, side).unwrap();
            let b = skeleton_arm_angle(&moved, side).unwrap();
            prop_assert!((0.0..360.0).contains(&a));
            prop_assert!(angular_gap(a, b) <= 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn mirrored_body_keeps_each_arms_angle(s in skeleton()) {
        prop_assume!(valid_arms(&s));
        let hx = 0.5 * (s[index::LEFT_HIP].x + s[index::RIGHT_HIP].x);
        let hy = 0.5 * (s[index::LEFT_HIP].y + s[index::RIGHT_HIP].y);
        let (dx, dy) = (s[index::NOSE].x - hx, s[index::NOSE].y - hy);
        let n = dx.hypot(dy);
        let (ux, uy) = (dx / n, dy / n);
        let mut m = map_points(&s, |x, y| {
            let (px, py) = (x - hx, y - hy);
            let along = px * ux + py * uy;
            (hx + 2.0 * along * ux - px, hy + 2.0 * along * uy - py)
        });
        for pair in SYMMETRIC_PAIRS {
            pair.swap(&mut m);
        }
        prop_assume!(valid_arms(&m));
        let left = skeleton_arm_angle(&s, Side::Left).unwrap();
        let right = skeleton_arm_angle(&s, Side::Right).unwrap();
        prop_assert!(angular_gap(left, skeleton_arm_angle(&m, Side::Right).unwrap()) <= 1e-6);
        prop_assert!(angular_gap(right, skeleton_arm_angle(&m, Side::Left).unwrap()) <= 1e-6);
    }

    #[test]
    fn symmetry_index_flips_sign_with_sides(l in 0.1..360.0f64, r in 0.1..360.0f64) {
        let a = symmetry_from_means(l, r, 10.0).unwrap();
        let b = symmetry_from_means(r, l, 10.0).unwrap();
        prop_assert_eq!(a.si_percent, -b.si_percent);
        prop_assert_eq!(a.symmetric, b.symmetric);
    }

    #[test]
    fn symmetry_index_is_scale_free(l in 0.1..360.0f64, r in 0.1..360.0f64, c in 0.01..100.0f64) {
        let a = symmetry_from_means(l, r, 10.0).unwrap().si_percent;
        let b = symmetry_from_means(c * l, c * r, 10.0).unwrap().si_percent;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn angle_offset_changes_neither_estimator(
        period in 0.6..8.0f64,
        offset in -100.0..100.0f64,
        phase in 0.0..std::f64::consts::TAU,
    ) {
        let make = |shift: f64| AngleSeries::from_pairs(Side::Right, 30.0, (0..600).map(|k| {
            let t = k as f64 / 30.0;
            let w = std::f64::consts::TAU * t / period + phase;
            (t, 180.0 + shift + 60.0 * w.sin() + 15.0 * (2.0 * w).sin())
        }));
        let base = make(0.0);
        let shifted = make(offset);
        let fa = stroke_duration_fft(&base, &FftConfig::default()).unwrap().dominant_frequency;
        let fb = stroke_duration_fft(&shifted, &FftConfig::default()).unwrap().dominant_frequency;
        prop_assert_eq!(fa, fb);
        let cfg = PeakConfig::default();
        prop_assert_eq!(detect_peaks(&base, &cfg).len(), detect_peaks(&shifted, &cfg).len());
    }

    #[test]
    fn peak_duration_respects_min_separation(
        values in prop::collection::vec(0.0..360.0f64, 2..400),
        fps in 5.0..120.0f64,
    ) {
        let series = AngleSeries::from_pairs(Side::Left, fps, values.iter().enumerate().map(|(k, &v)| (k as f64 / fps, v)));
        let cfg = PeakConfig::default();
        if let Ok(est) = stroke_duration_peaks(&series, &cfg) {
            prop_assert!(est.duration >= cfg.min_separation);
        }
        let peaks = detect_peaks(&series, &cfg);
        for w in peaks.windows(2) {
            let gap = series.samples[w[1]].timestamp - series.samples[w[0]].timestamp;
            prop_assert!(gap >= cfg.min_separation - 1e-12);
        }
    }

    #[test]
    fn crossings_do_not_depend_on_sample_density(
        flags in prop::collection::vec(any::<bool>(), 1..300),
        fps in 5.0..60.0f64,
    ) {
        let cal = PoolCalibration::default();
        let sparse: Vec<AdjacencySample> = flags.iter().enumerate().map(|(k, &adjacent)| AdjacencySample {
            timestamp: k as f64 / fps,
            frame_index: k as u64,
            adjacent,
        }).collect();
        let dense: Vec<AdjacencySample> = sparse.iter().flat_map(|s| [*s, *s]).collect();
        let a = extract_crossings(&sparse, &cal, 2.0);
        let b = extract_crossings(&dense, &cal, 2.0);
        prop_assert_eq!(a.len(), b.len());
    }

    #[test]
    fn average_velocity_within_segment_range(gaps in prop::collection::vec(0.5..20.0f64, 1..12)) {
        let mut t = 0.0;
        let mut crossings = vec![MarkerCrossing { timestamp: 0.0, frame_index: 0, cumulative_distance: 10.0 }];
        for (k, g) in gaps.iter().enumerate() {
            t += g;
            crossings.push(MarkerCrossing {
                timestamp: t,
                frame_index: (t * 30.0) as u64,
                cumulative_distance: 10.0 * (k + 2) as f64,
            });
        }
        let v = velocity_segments(&crossings).unwrap();
        let lo = v.segments.iter().map(|s| s.velocity).fold(f64::INFINITY, f64::min);
        let hi = v.segments.iter().map(|s| s.velocity).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v.average >= lo * (1.0 - 1e-12) && v.average <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn marker_fraction_ignores_pixel_order(
        colored in prop::collection::vec(any::<bool>(), 60 * 20),
        seed in any::<u64>(),
    ) {
        let cal = PoolCalibration { crop_width: 60, crop_height: 20, ..PoolCalibration::default() };
        let head = LandmarkPoint::new(100.0, 30.0, 1.0);
        let paint = |flags: &[bool]| {
            let mut r = Raster::filled(200, 60, [0, 80, 160]);
            for (i, &c) in flags.iter().enumerate() {
                if c {
                    r.set_pixel(40 + (i % 60) as u32, 20 + (i / 60) as u32, [255, 0, 0]);
                }
            }
            r
        };
        let mut shuffled = colored.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let dir = SwimDirection::LEFT_TO_RIGHT;
        prop_assert_eq!(
            marker_fraction(&paint(&colored), &head, &cal, dir),
            marker_fraction(&paint(&shuffled), &head, &cal, dir)
        );
    }
}
