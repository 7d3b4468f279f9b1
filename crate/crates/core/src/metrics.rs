//! Symmetry index and stroke duration.
//!
//! Stroke duration has two estimators. The spectral one resamples the angle
//! series onto a uniform grid, removes the mean, applies a Blackman window and
//! picks the strongest frequency in a cadence band. The peak counter divides
//! the series span by the number of well-separated maxima and is used when too
//! many frames were lost for the spectrum to be trusted.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{AngleSample, AngleSeries};

pub const DEFAULT_SYMMETRY_THRESHOLD: f64 = 10.0;
pub const MIN_FFT_SAMPLES: usize = 32;
pub const MIN_FFT_SPAN_S: f64 = 5.0;
/// Zero-padding factor applied before rounding the FFT length up to a power of two.
pub const FFT_PAD_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{0} angle series is empty")]
    EmptySeries(&'static str),
    #[error("mean angles sum to zero; symmetry index undefined")]
    UndefinedSymmetry,
    #[error("need at least {MIN_FFT_SAMPLES} samples for the spectrum, got {0}")]
    TooFewSamples(usize),
    #[error("series spans {0:.2} s, need at least {MIN_FFT_SPAN_S} s for the spectrum")]
    SpanTooShort(f64),
    #[error("no spectral bin inside [{f_min}, {f_max}] Hz")]
    NoBinInBand { f_min: f64, f_max: f64 },
    #[error("series has no variation; no dominant frequency")]
    NoDominantFrequency,
    #[error("series has zero time span")]
    ZeroSpan,
    #[error("no peaks found")]
    NoPeaks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryResult {
    pub si_percent: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub threshold: f64,
    pub symmetric: bool,
}

/// Signed percentage difference of the mean right and left arm angles,
/// relative to their average.
pub fn symmetry_index(
    left: &AngleSeries,
    right: &AngleSeries,
    threshold: f64,
) -> Result<SymmetryResult, MetricsError> {
    let x_left = left.mean_angle().ok_or(MetricsError::EmptySeries("left"))?;
    let x_right = right
        .mean_angle()
        .ok_or(MetricsError::EmptySeries("right"))?;
    symmetry_from_means(x_left, x_right, threshold)
}

pub fn symmetry_from_means(
    x_left: f64,
    x_right: f64,
    threshold: f64,
) -> Result<SymmetryResult, MetricsError> {
    let total = x_right + x_left;
    if total == 0.0 {
        return Err(MetricsError::UndefinedSymmetry);
    }
    let si_percent = (x_right - x_left) / (0.5 * total) * 100.0;
    Ok(SymmetryResult {
        si_percent,
        x_left,
        x_right,
        threshold,
        symmetric: si_percent.abs() <= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeMethod {
    Fft,
    Peaks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBin {
    pub frequency: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrokeEstimate {
    pub method: StrokeMethod,
    /// Seconds per stroke cycle.
    pub duration: f64,
    pub dominant_frequency: Option<f64>,
    pub peak_count: Option<usize>,
    /// Set when the spectral estimator was selected but failed.
    pub fft_failure: Option<String>,
    #[serde(skip)]
    pub spectrum: Option<Vec<SpectrumBin>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftConfig {
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for FftConfig {
    fn default() -> Self {
        Self {
            f_min: 0.1,
            f_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Seconds; of two closer maxima only the higher survives.
    pub min_separation: f64,
    /// Degrees.
    pub min_prominence: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            min_separation: 0.5,
            min_prominence: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeConfig {
    pub fft: FftConfig,
    pub peaks: PeakConfig,
    /// Detection rates at or above this use the spectral estimator.
    pub rate_cutoff: f64,
}

impl Default for StrokeConfig {
    fn default() -> Self {
        Self {
            fft: FftConfig::default(),
            peaks: PeakConfig::default(),
            rate_cutoff: 0.9,
        }
    }
}

/// Linear interpolation of the samples onto `t0 + k / fps` up to the last timestamp.
pub fn resample_uniform(samples: &[AngleSample], fps: f64) -> Vec<f64> {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Vec::new();
    };
    let t0 = first.timestamp;
    let n = ((last.timestamp - t0) * fps + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 / fps;
        while j + 1 < samples.len() - 1 && samples[j + 1].timestamp <= t {
            j += 1;
        }
        if samples.len() == 1 {
            out.push(first.angle);
            continue;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let span = b.timestamp - a.timestamp;
        let w = if span > 0.0 {
            ((t - a.timestamp) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(a.angle + w * (b.angle - a.angle));
    }
    out
}

pub fn blackman(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 / m;
            0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
        })
        .collect()
}

/// Spectral stroke duration over the `[f_min, f_max]` band.
pub fn stroke_duration_fft(
    series: &AngleSeries,
    config: &FftConfig,
) -> Result<StrokeEstimate, MetricsError> {
    if series.len() < MIN_FFT_SAMPLES {
        return Err(MetricsError::TooFewSamples(series.len()));
    }
    let span = series.span();
    if span < MIN_FFT_SPAN_S {
        return Err(MetricsError::SpanTooShort(span));
    }
    let fs = series.source_fps;
    let mut signal = resample_uniform(&series.samples, fs);
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let scale = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    signal.iter_mut().for_each(|v| *v -= mean);
    let residual = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual <= 1e-9 * (1.0 + scale) {
        return Err(MetricsError::NoDominantFrequency);
    }

    let window = blackman(n);
    let gain: f64 = window.iter().sum();
    let n_fft = (n * FFT_PAD_FACTOR).next_power_of_two();
    let mut buffer: Vec<Complex<f64>> = signal
        .iter()
        .zip(&window)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new()
        .plan_fft_forward(n_fft)
        .process(&mut buffer);

    let df = fs / n_fft as f64;
    let magnitude = |k: usize| 2.0 * buffer[k].norm() / gain;
    let lo = (config.f_min / df).ceil() as usize;
    let hi = ((config.f_max / df).floor() as usize).min(n_fft / 2);
    if lo > hi {
        return Err(MetricsError::NoBinInBand {
            f_min: config.f_min,
            f_max: config.f_max,
        });
    }
    let (best, best_mag) =
        (lo..=hi)
            .map(|k| (k, magnitude(k)))
            .fold((lo, f64::NEG_INFINITY), |acc, (k, m)| {
                if m > acc.1 {
                    (k, m)
                } else {
                    acc
                }
            });
    if best_mag <= 0.0 {
        return Err(MetricsError::NoDominantFrequency);
    }
    let frequency = best as f64 * df;
    let report_top = ((2.0 * config.f_max / df).floor() as usize).min(n_fft / 2);
    let spectrum = (0..=report_top)
        .map(|k| SpectrumBin {
            frequency: k as f64 * df,
            magnitude: magnitude(k),
        })
        .collect();
    Ok(StrokeEstimate {
        method: StrokeMethod::Fft,
        duration: 1.0 / frequency,
        dominant_frequency: Some(frequency),
        peak_count: None,
        fft_failure: None,
        spectrum: Some(spectrum),
    })
}

/// Indices of strict local maxima. A flat top bounded by lower samples on both
/// sides counts once, at its midpoint.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    if values.len() < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < values.len() - 1 {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < values.len() && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < values.len() && values[j + 1] < values[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height of a peak above the higher of its two bases, each base being the
/// lowest point between the peak and the nearest higher sample on that side.
pub fn prominence(values: &[f64], peak: usize) -> f64 {
    let h = values[peak];
    let mut left_min = h;
    for &v in values[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &values[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peaks that survive the prominence and separation rules, in time order.
pub fn detect_peaks(series: &AngleSeries, config: &PeakConfig) -> Vec<usize> {
    let values: Vec<f64> = series.samples.iter().map(|s| s.angle).collect();
    let mut candidates: Vec<usize> = local_maxima(&values)
        .into_iter()
        .filter(|&p| prominence(&values, p) >= config.min_prominence)
        .collect();
    // tallest first; the stable sort keeps earlier peaks ahead on ties
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut kept: Vec<usize> = Vec::new();
    for p in candidates {
        let t = series.samples[p].timestamp;
        if kept
            .iter()
            .all(|&q| (series.samples[q].timestamp - t).abs() >= config.min_separation)
        {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Series span divided by the number of peaks, never below the minimum separation.
pub fn stroke_duration_peaks(
    series: &AngleSeries,
    config: &PeakConfig,
) -> Result<StrokeEstimate, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries(series.side.name()));
    }
    let span = series.span();
    if span <= 0.0 {
        return Err(MetricsError::ZeroSpan);
    }
    let peaks = detect_peaks(series, config);
    if peaks.is_empty() {
        return Err(MetricsError::NoPeaks);
    }
    let duration = (span / peaks.len() as f64).max(config.min_separation);
    Ok(StrokeEstimate {
        method: StrokeMethod::Peaks,
        duration,
        dominant_frequency: None,
        peak_count: Some(peaks.len()),
        fft_failure: None,
        spectrum: None,
    })
}

/// Picks the estimator from the detection rate; a failed spectral estimate
/// falls back to peak counting.
pub fn stroke_duration(
    series: &AngleSeries,
    detection_rate: f64,
    config: &StrokeConfig,
) -> Result<StrokeEstimate, MetricsError> {
    if detection_rate >= config.rate_cutoff {
        match stroke_duration_fft(series, &config.fft) {
            Ok(est) => Ok(est),
            Err(err) => {
                let mut est = stroke_duration_peaks(series, &config.peaks)?;
                est.fft_failure = Some(err.to_string());
                Ok(est)
            }
        }
    } else {
        stroke_duration_peaks(series, &config.peaks)
    }
}
