//! Viseme library construction from repeated-pronunciation captures.
//!
//! Pipeline: moving-average low-pass, cycle segmentation on the reference
//! channel, DTW alignment onto the medoid cycle, per-index mean, and
//! resampling to the library grid.

use thiserror::Error;

use crate::blendshape::{
    resample_trajectory, BlendshapeError, BlendshapeVector, ChannelId, FrameSeries, VisemeTrajectory, CHANNEL_COUNT,
};
use crate::dtw::{dtw_distance, DtwError};
use crate::library::DEFAULT_SAMPLE_COUNT;
use crate::scalar::{Real, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("filter window must be odd and at most the series length ({len}), got {window}")]
    BadWindow { window: usize, len: usize },
    #[error("insufficient cycles: detected {found} peaks, need at least {required}")]
    InsufficientCycles { found: usize, required: usize },
    #[error("capture lasts {duration:.3} s, shorter than twice the peak separation ({separation:.3} s)")]
    TooShort { duration: f64, separation: f64 },
    #[error("no segments to fuse")]
    NoSegments,
    #[error("medoid cycle has a single frame")]
    DegenerateCycle,
    #[error("invalid builder config: {0}")]
    Config(String),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Blendshape(#[from] BlendshapeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentationMode {
    /// Minimum before each peak to the minimum after it.
    ValleyToValley,
    /// From one peak to the next.
    PeakToPeak,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuilderConfig {
    pub reference_channel: ChannelId,
    pub smoothing_window: usize,
    pub peak_min_height: f64,
    /// Seconds.
    pub peak_min_separation: f64,
    pub segmentation_mode: SegmentationMode,
    pub target_samples: usize,
    pub min_cycles: usize,
    /// Blend the first/last 10% of the output toward the per-channel minimum
    /// of the fused cycle so consecutive visemes start and end at rest.
    pub rest_align: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            reference_channel: ChannelId::JAW_OPEN,
            smoothing_window: 3,
            peak_min_height: 0.15,
            peak_min_separation: 0.25,
            segmentation_mode: SegmentationMode::ValleyToValley,
            target_samples: DEFAULT_SAMPLE_COUNT,
            min_cycles: 3,
            rest_align: false,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.smoothing_window < 3 || self.smoothing_window.is_multiple_of(2) {
            return Err(BuildError::Config(format!(
                "smoothing_window must be odd and >= 3, got {}",
                self.smoothing_window
            )));
        }
        if !(self.peak_min_height > 0.0) || !(self.peak_min_separation > 0.0) {
            return Err(BuildError::Config("peak thresholds must be positive".into()));
        }
        if self.target_samples < 2 {
            return Err(BuildError::Config(format!(
                "target_samples must be >= 2, got {}",
                self.target_samples
            )));
        }
        if self.min_cycles == 0 {
            return Err(BuildError::Config("min_cycles must be >= 1".into()));
        }
        Ok(())
    }
}

/// One pronunciation cycle cut from a capture.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleSegment<T> {
    pub frames: FrameSeries<T>,
    /// Index (within `frames`) of the reference-channel maximum.
    pub peak_index: usize,
    /// Index of the first frame in the source series.
    pub source_start: usize,
}

/// Centered moving average per channel. Edge frames average over the part
/// of the window that lies inside the series.
pub fn lowpass_filter<T: Scalar>(series: &FrameSeries<T>, window: usize) -> Result<FrameSeries<T>, BuildError> {
    let len = series.len();
    if window.is_multiple_of(2) || window > len {
        return Err(BuildError::BadWindow { window, len });
    }
    let half = window / 2;
    let frames = series.frames();
    let out = (0..len)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(len - 1);
            let count = T::of_usize(hi - lo + 1);
            let mut values = [T::zero(); CHANNEL_COUNT];
            let mut lows = [T::one(); CHANNEL_COUNT];
            let mut highs = [T::zero(); CHANNEL_COUNT];
            for f in &frames[lo..=hi] {
                for (c, &v) in f.values().iter().enumerate() {
                    values[c] = values[c] + v;
                    lows[c] = lows[c].min_of(v);
                    highs[c] = highs[c].max_of(v);
                }
            }
            for c in 0..CHANNEL_COUNT {
                values[c] = (values[c] / count).max_of(lows[c]).min_of(highs[c]);
            }
            BlendshapeVector::new(values).expect("mean of unit values")
        })
        .collect();
    Ok(series.with_frames(out))
}

/// Local maxima of `x` (plateaus report their midpoint), endpoints excluded.
fn local_maxima<T: Scalar>(x: &[T]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Peak detection with height and separation constraints. Among peaks
/// closer than the separation, the higher one survives (earlier on ties).
pub fn detect_peaks<T: Scalar>(x: &[T], fps: f64, min_height: f64, min_separation: f64) -> Vec<usize> {
    let height = T::of(min_height);
    let mut candidates: Vec<usize> = local_maxima(x).into_iter().filter(|&i| x[i] >= height).collect();
    candidates.sort_by(|&a, &b| {
        x[b].partial_cmp(&x[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let min_frames = min_separation * fps - 1e-9;
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| (k.abs_diff(c) as f64) >= min_frames) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

fn argmin_last<T: Scalar>(x: &[T], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..=hi {
        if x[i] <= x[best] {
            best = i;
        }
    }
    best
}

fn argmin_first<T: Scalar>(x: &[T], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..=hi {
        if x[i] < x[best] {
            best = i;
        }
    }
    best
}

fn argmax_first<T: Scalar>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Cuts a (filtered) capture into pronunciation cycles around the peaks of
/// the reference channel.
pub fn segment_cycles<T: Scalar>(
    series: &FrameSeries<T>,
    cfg: &BuilderConfig,
) -> Result<Vec<CycleSegment<T>>, BuildError> {
    let duration = series.len().saturating_sub(1) as f64 / series.fps();
    if duration < 2.0 * cfg.peak_min_separation {
        return Err(BuildError::TooShort {
            duration,
            separation: cfg.peak_min_separation,
        });
    }
    let x = series.channel(cfg.reference_channel);
    let peaks = detect_peaks(&x, series.fps(), cfg.peak_min_height, cfg.peak_min_separation);
    if peaks.len() < cfg.min_cycles {
        return Err(BuildError::InsufficientCycles {
            found: peaks.len(),
            required: cfg.min_cycles,
        });
    }

    let bounds: Vec<(usize, usize)> = match cfg.segmentation_mode {
        SegmentationMode::ValleyToValley => peaks
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let prev = if k == 0 { 0 } else { peaks[k - 1] };
                let next = peaks.get(k + 1).copied().unwrap_or(x.len() - 1);
                (argmin_last(&x, prev, p), argmin_first(&x, p, next))
            })
            .collect(),
        SegmentationMode::PeakToPeak => peaks.windows(2).map(|w| (w[0], w[1])).collect(),
    };

    Ok(bounds
        .into_iter()
        .map(|(lo, hi)| CycleSegment {
            frames: series.slice(lo, hi + 1),
            peak_index: argmax_first(&x[lo..=hi]),
            source_start: lo,
        })
        .collect())
}

/// Result of fusing aligned cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedCycle<T> {
    pub trajectory: VisemeTrajectory<T>,
    /// Index of the segment used as the time reference.
    pub medoid: usize,
    /// RMS deviation of the warped segments from the fused mean.
    pub residual: T,
}

/// Medoid-referenced DTW alignment followed by per-index mean.
pub fn align_and_fuse<T: Real>(segments: &[CycleSegment<T>]) -> Result<VisemeTrajectory<T>, BuildError> {
    align_and_fuse_detailed(segments).map(|f| f.trajectory)
}

pub fn align_and_fuse_detailed<T: Real>(segments: &[CycleSegment<T>]) -> Result<FusedCycle<T>, BuildError> {
    if segments.is_empty() {
        return Err(BuildError::NoSegments);
    }
    let n = segments.len();
    let mut totals = vec![T::zero(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let cost = dtw_distance(segments[i].frames.frames(), segments[j].frames.frames())?.cost;
            totals[i] = totals[i] + cost;
            totals[j] = totals[j] + cost;
        }
    }
    let medoid = (0..n).fold(0, |best, i| if totals[i] < totals[best] { i } else { best });
    let reference = segments[medoid].frames.frames();
    let len = reference.len();
    if len < 2 {
        return Err(BuildError::DegenerateCycle);
    }

    // warped[s][k]: segment s mapped onto reference index k
    let mut warped: Vec<Vec<[T; CHANNEL_COUNT]>> = Vec::with_capacity(n);
    for seg in segments {
        let frames = seg.frames.frames();
        let path = dtw_distance(reference, frames)?.path;
        let mut sums = vec![[T::zero(); CHANNEL_COUNT]; len];
        let mut lows = vec![[T::one(); CHANNEL_COUNT]; len];
        let mut highs = vec![[T::zero(); CHANNEL_COUNT]; len];
        let mut counts = vec![0usize; len];
        for (k, i) in path {
            for (c, &v) in frames[i].values().iter().enumerate() {
                sums[k][c] = sums[k][c] + v;
                lows[k][c] = lows[k][c].min(v);
                highs[k][c] = highs[k][c].max(v);
            }
            counts[k] += 1;
        }
        for k in 0..len {
            let cnt = T::of_usize(counts[k]);
            for c in 0..CHANNEL_COUNT {
                sums[k][c] = (sums[k][c] / cnt).max(lows[k][c]).min(highs[k][c]);
            }
        }
        warped.push(sums);
    }

    let count = T::of_usize(n);
    let mut samples = Vec::with_capacity(len);
    let mut sq_err = T::zero();
    for k in 0..len {
        let mut values = [T::zero(); CHANNEL_COUNT];
        for (c, out) in values.iter_mut().enumerate() {
            let mut sum = T::zero();
            let mut lo = T::one();
            let mut hi = T::zero();
            for w in &warped {
                sum = sum + w[k][c];
                lo = lo.min(w[k][c]);
                hi = hi.max(w[k][c]);
            }
            // keep the mean inside the contributing range despite rounding
            *out = (sum / count).max(lo).min(hi);
            for w in &warped {
                let d = w[k][c] - *out;
                sq_err = sq_err + d * d;
            }
        }
        samples.push(BlendshapeVector::new(values)?);
    }
    let residual = (sq_err / T::of_usize(n * len * CHANNEL_COUNT)).sqrt();
    Ok(FusedCycle {
        trajectory: VisemeTrajectory::new(samples)?,
        medoid,
        residual,
    })
}

/// Summary of one viseme build.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildStats<T> {
    pub cycles: usize,
    pub medoid: usize,
    pub medoid_frames: usize,
    pub residual: T,
}

/// Full pipeline: filter, segment, fuse, resample, optional rest alignment.
pub fn build_viseme<T: Real>(series: &FrameSeries<T>, cfg: &BuilderConfig) -> Result<VisemeTrajectory<T>, BuildError> {
    build_viseme_with_stats(series, cfg).map(|(t, _)| t)
}

pub fn build_viseme_with_stats<T: Real>(
    series: &FrameSeries<T>,
    cfg: &BuilderConfig,
) -> Result<(VisemeTrajectory<T>, BuildStats<T>), BuildError> {
    cfg.validate()?;
    let filtered = lowpass_filter(series, cfg.smoothing_window)?;
    let segments = segment_cycles(&filtered, cfg)?;
    let fused = align_and_fuse_detailed(&segments)?;
    let medoid_frames = fused.trajectory.sample_count();
    let mut trajectory = resample_trajectory(&fused.trajectory, cfg.target_samples)?;
    if cfg.rest_align {
        trajectory = rest_align(&trajectory, &fused.trajectory)?;
    }
    Ok((
        trajectory,
        BuildStats {
            cycles: segments.len(),
            medoid: fused.medoid,
            medoid_frames,
            residual: fused.residual,
        },
    ))
}

/// Blends the first and last 10% of samples toward the per-channel minimum
/// of `cycle`; the two endpoints land exactly on that minimum.
fn rest_align<T: Real>(
    trajectory: &VisemeTrajectory<T>,
    cycle: &VisemeTrajectory<T>,
) -> Result<VisemeTrajectory<T>, BuildError> {
    let rest = BlendshapeVector::from_fn(|c| cycle.samples().iter().map(|s| s.get(c)).fold(T::one(), |a, b| a.min(b)))?;
    let n = trajectory.sample_count();
    let ramp = ((n as f64) * 0.1).ceil().max(1.0) as usize;
    let samples = trajectory
        .samples()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let from_edge = j.min(n - 1 - j);
            if from_edge >= ramp {
                *s
            } else {
                let w = T::of_usize(from_edge) / T::of_usize(ramp);
                rest.lerp(s, w)
            }
        })
        .collect();
    Ok(VisemeTrajectory::new(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::frame_distance;

    fn series_from(jaw: &[f64], fps: f64) -> FrameSeries<f64> {
        let frames = jaw
            .iter()
            .map(|&v| BlendshapeVector::from_fn(|c| if c == ChannelId::JAW_OPEN { v } else { 0.5 * v }).unwrap())
            .collect();
        FrameSeries::new(frames, fps, 0.0).unwrap()
    }

    fn cosine_cycles(freq: f64, secs: f64, fps: f64) -> Vec<f64> {
        let n = (secs * fps).round() as usize;
        (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * freq * i as f64 / fps).cos()))
            .collect()
    }

    #[test]
    fn filter_constant_is_identity() {
        let s = series_from(&[0.4; 9], 60.0);
        assert_eq!(lowpass_filter(&s, 5).unwrap(), s);
    }

    #[test]
    fn filter_impulse() {
        let s = series_from(&[0.0, 0.0, 1.0, 0.0, 0.0], 60.0);
        let f = lowpass_filter(&s, 3).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(f.channel(ChannelId::JAW_OPEN), vec![0.0, third, third, third, 0.0]);
    }

    #[test]
    fn filter_rejects_bad_window() {
        let s = series_from(&[0.0; 4], 60.0);
        assert_eq!(lowpass_filter(&s, 2), Err(BuildError::BadWindow { window: 2, len: 4 }));
        assert_eq!(lowpass_filter(&s, 5), Err(BuildError::BadWindow { window: 5, len: 4 }));
    }

    #[test]
    fn segments_five_cycles() {
        let s = series_from(&cosine_cycles(2.0, 2.5, 60.0), 60.0);
        let f = lowpass_filter(&s, 3).unwrap();
        let segs = segment_cycles(&f, &BuilderConfig::default()).unwrap();
        assert_eq!(segs.len(), 5);
        // analytic peaks at t = 0.25 + 0.5k, valleys at 0.5k
        for (k, seg) in segs.iter().enumerate() {
            assert_eq!(seg.source_start + seg.peak_index, 15 + 30 * k);
            assert_eq!(seg.source_start, 30 * k);
        }
        let cfg = BuilderConfig {
            segmentation_mode: SegmentationMode::PeakToPeak,
            ..BuilderConfig::default()
        };
        assert_eq!(segment_cycles(&f, &cfg).unwrap().len(), 4);
    }

    #[test]
    fn flat_series_has_no_cycles() {
        let s = series_from(&[0.0; 120], 60.0);
        assert_eq!(
            segment_cycles(&s, &BuilderConfig::default()),
            Err(BuildError::InsufficientCycles { found: 0, required: 3 })
        );
    }

    #[test]
    fn close_peaks_merge_into_higher() {
        // peaks at frames 20 and 26 (0.1 s apart at 60 FPS)
        let mut x = vec![0.0; 60];
        for (i, v) in x.iter_mut().enumerate() {
            let a = (-((i as f64 - 20.0) / 2.0).powi(2)).exp() * 0.6;
            let b = (-((i as f64 - 26.0) / 2.0).powi(2)).exp() * 0.9;
            *v = a.max(b);
        }
        let peaks = detect_peaks(&x, 60.0, 0.15, 0.25);
        assert_eq!(peaks, vec![26]);
    }

    #[test]
    fn plateau_peak_reports_midpoint() {
        let x = [0.0, 0.5, 0.5, 0.5, 0.0, 0.2, 0.2];
        assert_eq!(local_maxima(&x), vec![2]);
    }

    #[test]
    fn identical_segments_fuse_to_themselves() {
        let s = series_from(&[0.0, 0.2, 0.7, 0.9, 0.3, 0.05], 60.0);
        let seg = CycleSegment {
            frames: s.clone(),
            peak_index: 3,
            source_start: 0,
        };
        let fused = align_and_fuse(&vec![seg.clone(); 4]).unwrap();
        assert_eq!(fused.samples(), s.frames());
        let single = align_and_fuse(&[seg]).unwrap();
        assert_eq!(single.samples(), s.frames());
        assert_eq!(align_and_fuse::<f64>(&[]), Err(BuildError::NoSegments));
    }

    #[test]
    fn build_rejects_two_cycles() {
        let s = series_from(&cosine_cycles(2.0, 1.0, 60.0), 60.0);
        assert!(matches!(
            build_viseme(&s, &BuilderConfig::default()),
            Err(BuildError::InsufficientCycles { found: 2, .. })
        ));
        let zero = series_from(&[0.0; 120], 60.0);
        assert!(build_viseme(&zero, &BuilderConfig::default()).is_err());
    }

    #[test]
    fn rest_align_pins_endpoints_to_minimum() {
        let s = series_from(&cosine_cycles(2.0, 2.5, 60.0), 60.0);
        let cfg = BuilderConfig {
            rest_align: true,
            ..BuilderConfig::default()
        };
        let (t, stats) = build_viseme_with_stats(&s, &cfg).unwrap();
        assert_eq!(stats.cycles, 5);
        let jaw = t.channel(ChannelId::JAW_OPEN);
        let min = jaw.iter().cloned().fold(1.0, f64::min);
        assert_eq!(jaw[0], min);
        assert_eq!(jaw[59], min);
    }

    #[test]
    fn config_validation() {
        let bad = BuilderConfig {
            smoothing_window: 4,
            ..BuilderConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(BuilderConfig::default().validate().is_ok());
    }

    #[test]
    fn frame_distance_is_euclidean() {
        let a = BlendshapeVector::<f64>::zeros();
        let b = BlendshapeVector::from_fn(|c| if c.index() < 4 { 0.5 } else { 0.0 }).unwrap();
        assert_eq!(frame_distance(&a, &b), 1.0);
    }
}
