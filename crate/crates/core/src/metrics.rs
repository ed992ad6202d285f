//! Evaluation metrics: Pearson correlation, RMSE, mean absolute jerk and
//! variance-based channel selection.

use std::fmt::Write as _;

use thiserror::Error;

use crate::blendshape::{ChannelId, FrameSeries, CHANNEL_COUNT};
use crate::io::{fmt_fixed, TIME_COLUMN};
use crate::scalar::{Real, Scalar};

/// Number of channels scored by [`evaluate`].
pub const ACTIVE_CHANNELS: usize = 9;

/// Reported jerk unit: `10^3 / s^3`.
pub const JERK_UNIT: f64 = 1000.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} samples, got {got}")]
    TooShort { required: usize, got: usize },
    #[error("cannot select {0} channels out of {CHANNEL_COUNT}")]
    BadChannelCount(usize),
    #[error("no channels selected")]
    NoChannels,
    #[error("series do not overlap in time")]
    NoOverlap,
    #[error("frame rate must be positive, got {0}")]
    BadFrameRate(f64),
}

fn check_pair<T>(x: &[T], y: &[T], min: usize) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(MetricError::TooShort {
            required: min,
            got: x.len(),
        });
    }
    Ok(())
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, v| a + *v) / T::of_usize(x.len())
}

/// Population variance.
pub fn variance<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let m = mean(x);
    x.iter().fold(T::zero(), |a, v| a + (*v - m) * (*v - m)) / T::of_usize(x.len())
}

/// Sample Pearson correlation. `None` when either series is constant.
pub fn pcc<T: Real>(x: &[T], y: &[T]) -> Result<Option<T>, MetricError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (*a - mx, *b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(None);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(Some(r.max_of(-T::one()).min_of(T::one())))
}

pub fn rmse<T: Real>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check_pair(x, y, 1)?;
    let sum = x.iter().zip(y).fold(T::zero(), |a, (p, q)| a + (*p - *q) * (*p - *q));
    Ok((sum / T::of_usize(x.len())).sqrt())
}

/// Third forward difference scaled by `fps^3`; length `len - 3`.
pub fn jerk_series<T: Scalar>(x: &[T], fps: T) -> Result<Vec<T>, MetricError> {
    if !(fps > T::zero()) {
        return Err(MetricError::BadFrameRate(fps.as_f64()));
    }
    if x.len() < 4 {
        return Err(MetricError::TooShort {
            required: 4,
            got: x.len(),
        });
    }
    let three = T::of_usize(3);
    let scale = fps * fps * fps;
    Ok(x.windows(4)
        .map(|w| (w[3] - three * w[2] + three * w[1] - w[0]) * scale)
        .collect())
}

/// Mean of `|jerk|` over the given channels and all valid indices, in
/// units of `10^3 / s^3`.
pub fn maj<T: Scalar>(series: &FrameSeries<T>, channels: &[ChannelId]) -> Result<T, MetricError> {
    if channels.is_empty() {
        return Err(MetricError::NoChannels);
    }
    let fps = T::of(series.fps());
    let mut sum = T::zero();
    let mut count = 0usize;
    for &c in channels {
        for j in jerk_series(&series.channel(c), fps)? {
            sum = sum + j.abs();
            count += 1;
        }
    }
    Ok(sum / T::of_usize(count) / T::of(JERK_UNIT))
}

/// The `k` channels with the highest variance; ties keep canonical order.
pub fn select_active_channels<T: Scalar>(gt: &FrameSeries<T>, k: usize) -> Result<Vec<ChannelId>, MetricError> {
    if k == 0 || k > CHANNEL_COUNT {
        return Err(MetricError::BadChannelCount(k));
    }
    if gt.is_empty() {
        return Err(MetricError::TooShort { required: 1, got: 0 });
    }
    let mut scored: Vec<(ChannelId, T)> = ChannelId::all().map(|c| (c, variance(&gt.channel(c)))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(scored.into_iter().take(k).map(|(c, _)| c).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelScore {
    pub channel: ChannelId,
    /// `None` when the correlation is undefined (a constant channel).
    pub pcc: Option<f64>,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub active_channels: Vec<ChannelId>,
    pub channels: Vec<ChannelScore>,
    /// Mean PCC over channels where it is defined.
    pub mean_pcc: Option<f64>,
    pub undefined_pcc: usize,
    pub mean_rmse: f64,
    /// Mean absolute jerk of the generated series over the active channels.
    pub maj: f64,
    pub jaw_open_pcc: Option<f64>,
    pub jaw_open_rmse: f64,
    pub frames_compared: usize,
    pub fps: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frames compared: {} at {} fps", self.frames_compared, self.fps);
        let _ = writeln!(out, "{:<22} {:>12} {:>12}", "channel", "pcc", "rmse");
        for s in &self.channels {
            let _ = writeln!(out, "{:<22} {:>12} {:>12.6}", s.channel.name(), fmt_opt(s.pcc), s.rmse);
        }
        let _ = writeln!(
            out,
            "mean pcc: {} ({} undefined)",
            fmt_opt(self.mean_pcc),
            self.undefined_pcc
        );
        let _ = writeln!(out, "mean rmse: {:.6}", self.mean_rmse);
        let _ = writeln!(out, "jawOpen pcc: {}", fmt_opt(self.jaw_open_pcc));
        let _ = writeln!(out, "jawOpen rmse: {:.6}", self.jaw_open_rmse);
        let _ = writeln!(out, "maj (1e3/s^3): {:.6}", self.maj);
        out
    }
}

/// Puts both series on the grid of the higher-rate one, restricted to the
/// overlapping time range. Returns `(gen, gt)` channel-major samples.
fn align<T: Real>(gen: &FrameSeries<T>, gt: &FrameSeries<T>) -> Result<(FrameSeries<T>, FrameSeries<T>), MetricError> {
    const EPS: f64 = 1e-9;
    let lo = gen.start_time().max(gt.start_time());
    let hi = gen.end_time().min(gt.end_time());
    if gen.is_empty() || gt.is_empty() || hi < lo - EPS {
        return Err(MetricError::NoOverlap);
    }
    let grid_is_gen = gen.fps() > gt.fps();
    let (grid, other) = if grid_is_gen { (gen, gt) } else { (gt, gen) };
    let mut on_grid = Vec::new();
    let mut resampled = Vec::new();
    let mut first = None;
    for (i, f) in grid.frames().iter().enumerate() {
        let t = grid.time_of(i);
        if t < lo - EPS || t > hi + EPS {
            continue;
        }
        if let Some(v) = other.sample_at_time(t) {
            first.get_or_insert(i);
            on_grid.push(*f);
            resampled.push(v);
        }
    }
    let Some(first) = first else {
        return Err(MetricError::NoOverlap);
    };
    let start = grid.time_of(first);
    let a = FrameSeries::new(on_grid, grid.fps(), start).map_err(|_| MetricError::NoOverlap)?;
    let b = FrameSeries::new(resampled, grid.fps(), start).map_err(|_| MetricError::NoOverlap)?;
    Ok(if grid_is_gen { (a, b) } else { (b, a) })
}

/// Scores `gen` against ground truth `gt` on the nine most active
/// ground-truth channels.
pub fn evaluate<T: Real>(gen: &FrameSeries<T>, gt: &FrameSeries<T>) -> Result<MetricReport, MetricError> {
    evaluate_channels(gen, gt, &select_active_channels(gt, ACTIVE_CHANNELS)?)
}

/// [`evaluate`] on a caller-chosen channel set.
pub fn evaluate_channels<T: Real>(
    gen: &FrameSeries<T>,
    gt: &FrameSeries<T>,
    active: &[ChannelId],
) -> Result<MetricReport, MetricError> {
    let (g, r) = align(gen, gt)?;
    if g.len() < 2 {
        return Err(MetricError::TooShort {
            required: 2,
            got: g.len(),
        });
    }
    let mut channels = Vec::with_capacity(active.len());
    for &c in active {
        let (x, y) = (g.channel(c), r.channel(c));
        channels.push(ChannelScore {
            channel: c,
            pcc: pcc(&x, &y)?.map(|v| v.as_f64()),
            rmse: rmse(&x, &y)?.as_f64(),
        });
    }
    let defined: Vec<f64> = channels.iter().filter_map(|s| s.pcc).collect();
    let mean_pcc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let mean_rmse = channels.iter().map(|s| s.rmse).sum::<f64>() / channels.len().max(1) as f64;
    let jx = g.channel(ChannelId::JAW_OPEN);
    let jy = r.channel(ChannelId::JAW_OPEN);
    Ok(MetricReport {
        active_channels: active.to_vec(),
        undefined_pcc: channels.len() - defined.len(),
        channels,
        mean_pcc,
        mean_rmse,
        maj: maj(gen, active)?.as_f64(),
        jaw_open_pcc: pcc(&jx, &jy)?.map(|v| v.as_f64()),
        jaw_open_rmse: rmse(&jx, &jy)?.as_f64(),
        frames_compared: g.len(),
        fps: g.fps(),
    })
}

/// Per-frame jerk of the selected channels, one row per valid index.
pub fn write_jerk_csv<T: Scalar>(series: &FrameSeries<T>, channels: &[ChannelId]) -> Result<String, MetricError> {
    let fps = T::of(series.fps());
    let columns = channels
        .iter()
        .map(|&c| jerk_series(&series.channel(c), fps))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from(TIME_COLUMN);
    for c in channels {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    let rows = columns.first().map_or(0, Vec::len);
    for n in 0..rows {
        out.push_str(&fmt_fixed(series.time_of(n)));
        for col in &columns {
            let _ = write!(out, ",{}", fmt_fixed(col[n].as_f64()));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blendshape::BlendshapeVector;
    use num_rational::Ratio;

    fn series_from(f: impl Fn(usize, ChannelId) -> f64, n: usize, fps: f64) -> FrameSeries<f64> {
        FrameSeries::new(
            (0..n)
                .map(|i| BlendshapeVector::from_fn(|c| f(i, c)).unwrap())
                .collect(),
            fps,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn pcc_cases() {
        let x = [0.1f64, 0.5, 0.2, 0.9];
        assert!((pcc(&x, &x).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        assert!((pcc(&x, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // 40-digit evaluation: 0.98198050606196571569
        let r: f64 = pcc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-15);
        assert_eq!(pcc(&[0.3, 0.3, 0.3], &x[..3]).unwrap(), None);
        assert!(matches!(pcc(&x, &x[..2]), Err(MetricError::LengthMismatch(4, 2))));
        assert!(matches!(pcc(&x[..1], &x[..1]), Err(MetricError::TooShort { .. })));
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0f64, 1.0], &[1.0, 3.0]).unwrap() - 1.581_138_830_084_189_7).abs() < 1e-15);
    }

    #[test]
    fn jerk_is_exact_on_rational_polynomials() {
        let fps = Ratio::from_integer(60);
        let dt = Ratio::new(1, 60);
        let quad: Vec<Ratio<i64>> = (0..12).map(|n| (dt * n) * (dt * n)).collect();
        assert!(jerk_series(&quad, fps)
            .unwrap()
            .iter()
            .all(|j| *j == Ratio::from_integer(0)));
        let cube: Vec<Ratio<i64>> = (0..12).map(|n| (dt * n) * (dt * n) * (dt * n)).collect();
        assert!(jerk_series(&cube, fps)
            .unwrap()
            .iter()
            .all(|j| *j == Ratio::from_integer(6)));
        assert!(matches!(
            jerk_series(&cube[..3], fps),
            Err(MetricError::TooShort { .. })
        ));
    }

    #[test]
    fn maj_units() {
        let c = series_from(|_, _| 0.4, 10, 60.0);
        assert_eq!(maj(&c, &[ChannelId::JAW_OPEN]).unwrap(), 0.0);
        let cube: FrameSeries<Ratio<i64>> = FrameSeries::new(
            (0..10)
                .map(|n| {
                    let t = Ratio::new(n, 60);
                    BlendshapeVector::from_fn(|c| {
                        if c == ChannelId::JAW_OPEN {
                            t * t * t
                        } else {
                            Ratio::from_integer(0)
                        }
                    })
                    .unwrap()
                })
                .collect(),
            60.0,
            0.0,
        )
        .unwrap();
        assert_eq!(maj(&cube, &[ChannelId::JAW_OPEN]).unwrap(), Ratio::new(6, 1000));
        assert!(matches!(maj(&c, &[]), Err(MetricError::NoChannels)));
    }

    #[test]
    fn channel_selection() {
        let s = series_from(
            |i, c| match c.index() {
                0 => {
                    if i % 2 == 0 {
                        0.0
                    } else {
                        0.4
                    }
                }
                1 => {
                    if i % 2 == 0 {
                        0.3
                    } else {
                        0.5
                    }
                }
                _ => 0.2,
            },
            8,
            60.0,
        );
        assert_eq!(
            select_active_channels(&s, 2).unwrap(),
            vec![ChannelId::from_index(0).unwrap(), ChannelId::from_index(1).unwrap()]
        );
        let all = select_active_channels(&s, 27).unwrap();
        assert_eq!(all.len(), 27);
        assert_eq!(all[2], ChannelId::from_index(2).unwrap());
        assert!(select_active_channels(&s, 28).is_err());
    }

    #[test]
    fn evaluate_self_and_scaled() {
        let gt = series_from(
            |i, c| 0.1 + 0.4 * ((i as f64 * 0.2 + c.index() as f64).sin() * 0.5 + 0.5) * (c.index() % 3) as f64 / 2.0,
            90,
            60.0,
        );
        let r = evaluate(&gt, &gt).unwrap();
        assert!(r.channels.iter().all(|s| s.rmse == 0.0));
        assert!(r.channels.iter().all(|s| s.pcc.is_none_or(|p| (p - 1.0).abs() < 1e-12)));
        assert_eq!(r.maj, maj(&gt, &r.active_channels).unwrap());

        let half = gt.with_frames(gt.frames().iter().map(|f| f.scaled(0.5)).collect());
        let r = evaluate(&half, &gt).unwrap();
        assert!((r.jaw_open_pcc.unwrap() - 1.0).abs() < 1e-12);
        let jaw = gt.channel(ChannelId::JAW_OPEN);
        let rms = (jaw.iter().map(|v| v * v).sum::<f64>() / jaw.len() as f64).sqrt();
        assert!((r.jaw_open_rmse - 0.5 * rms).abs() < 1e-12);

        let late = FrameSeries::new(gt.frames().to_vec(), 60.0, 100.0).unwrap();
        assert_eq!(evaluate(&late, &gt), Err(MetricError::NoOverlap));
    }

    #[test]
    fn evaluate_resamples_lower_rate() {
        let fine = series_from(
            |i, c| {
                if c == ChannelId::JAW_OPEN {
                    i as f64 / 120.0
                } else {
                    0.0
                }
            },
            121,
            120.0,
        );
        let coarse = series_from(
            |i, c| if c == ChannelId::JAW_OPEN { i as f64 / 60.0 } else { 0.0 },
            61,
            60.0,
        );
        let r = evaluate(&coarse, &fine).unwrap();
        assert_eq!(r.frames_compared, 121);
        assert!(r.jaw_open_rmse < 1e-12);
        assert!(r.undefined_pcc > 0);
        assert!(r.to_text().contains("undefined"));
    }

    #[test]
    fn jerk_csv_rows() {
        let s = series_from(|i, _| i as f64 / 10.0, 6, 60.0);
        let csv = write_jerk_csv(&s, &[ChannelId::JAW_OPEN]).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("time_s,jawOpen\n"));
    }
}
