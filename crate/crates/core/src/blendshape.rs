//! 27-channel lower-face blendshape frames, trajectories and frame series.
//!
//! The channel set is the ARKit jaw group (4 channels) plus the ARKit mouth
//! group (23 channels), in the fixed order of [`CHANNEL_NAMES`]. Every file
//! format written by this crate carries that list so readers can verify it.

use std::fmt;
use std::ops::Index;

use thiserror::Error;

use crate::scalar::Scalar;

/// Number of lip/jaw channels in a frame.
pub const CHANNEL_COUNT: usize = 27;

/// Canonical channel order.
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = [
    "jawForward",
    "jawLeft",
    "jawRight",
    "jawOpen",
    "mouthClose",
    "mouthFunnel",
    "mouthPucker",
    "mouthLeft",
    "mouthRight",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
];

/// Index into the canonical channel list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(u8);

impl ChannelId {
    pub const JAW_FORWARD: ChannelId = ChannelId(0);
    pub const JAW_LEFT: ChannelId = ChannelId(1);
    pub const JAW_RIGHT: ChannelId = ChannelId(2);
    pub const JAW_OPEN: ChannelId = ChannelId(3);
    pub const MOUTH_CLOSE: ChannelId = ChannelId(4);
    pub const MOUTH_FUNNEL: ChannelId = ChannelId(5);
    pub const MOUTH_PUCKER: ChannelId = ChannelId(6);
    pub const MOUTH_SMILE_LEFT: ChannelId = ChannelId(9);
    pub const MOUTH_SMILE_RIGHT: ChannelId = ChannelId(10);
    pub const MOUTH_DIMPLE_LEFT: ChannelId = ChannelId(13);
    pub const MOUTH_DIMPLE_RIGHT: ChannelId = ChannelId(14);
    pub const MOUTH_STRETCH_LEFT: ChannelId = ChannelId(15);
    pub const MOUTH_STRETCH_RIGHT: ChannelId = ChannelId(16);
    pub const MOUTH_ROLL_LOWER: ChannelId = ChannelId(17);
    pub const MOUTH_ROLL_UPPER: ChannelId = ChannelId(18);
    pub const MOUTH_PRESS_LEFT: ChannelId = ChannelId(21);
    pub const MOUTH_PRESS_RIGHT: ChannelId = ChannelId(22);
    pub const MOUTH_LOWER_DOWN_LEFT: ChannelId = ChannelId(23);
    pub const MOUTH_LOWER_DOWN_RIGHT: ChannelId = ChannelId(24);
    pub const MOUTH_UPPER_UP_LEFT: ChannelId = ChannelId(25);
    pub const MOUTH_UPPER_UP_RIGHT: ChannelId = ChannelId(26);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < CHANNEL_COUNT).then_some(ChannelId(index as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CHANNEL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ChannelId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CHANNEL_NAMES[self.index()]
    }

    /// All channels in canonical order.
    pub fn all() -> impl Iterator<Item = ChannelId> {
        (0..CHANNEL_COUNT as u8).map(ChannelId)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BlendshapeError {
    #[error("non-finite value in channel {channel}")]
    NonFinite { channel: &'static str },
    #[error("trajectory needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("resample target must be at least 2 samples, got {0}")]
    BadSampleCount(usize),
    #[error("frame rate must be positive and finite, got {0}")]
    BadFrameRate(f64),
}

/// One animation frame: 27 activations in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendshapeVector<T> {
    values: [T; CHANNEL_COUNT],
}

impl<T: Scalar> BlendshapeVector<T> {
    /// Clamps every value into `[0, 1]`; rejects non-finite input.
    pub fn new(values: [T; CHANNEL_COUNT]) -> Result<Self, BlendshapeError> {
        let mut out = values;
        for (i, v) in out.iter_mut().enumerate() {
            if !v.as_f64().is_finite() {
                return Err(BlendshapeError::NonFinite {
                    channel: CHANNEL_NAMES[i],
                });
            }
            *v = v.clamp_unit();
        }
        Ok(Self { values: out })
    }

    pub fn zeros() -> Self {
        Self {
            values: [T::zero(); CHANNEL_COUNT],
        }
    }

    pub fn from_fn(mut f: impl FnMut(ChannelId) -> T) -> Result<Self, BlendshapeError> {
        let mut values = [T::zero(); CHANNEL_COUNT];
        for c in ChannelId::all() {
            values[c.index()] = f(c);
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[T; CHANNEL_COUNT] {
        &self.values
    }

    pub fn get(&self, channel: ChannelId) -> T {
        self.values[channel.index()]
    }

    /// `(1 - w) * self + w * other`, per channel, evaluated as
    /// `self + w * (other - self)`. Equal operands pass through unchanged,
    /// `w = 0` and `w = 1` return the operands exactly, and every result is
    /// kept inside the per-channel envelope of the two operands.
    pub fn lerp(&self, other: &Self, w: T) -> Self {
        if w == T::zero() {
            return *self;
        }
        if w == T::one() {
            return *other;
        }
        let mut values = self.values;
        for (v, o) in values.iter_mut().zip(other.values.iter()) {
            let (lo, hi) = if *v <= *o { (*v, *o) } else { (*o, *v) };
            *v = (*v + w * (*o - *v)).max_of(lo).min_of(hi);
        }
        Self { values }
    }

    /// Scales every channel by `gain`, clamping the result.
    pub fn scaled(&self, gain: T) -> Self {
        let mut values = self.values;
        for v in values.iter_mut() {
            *v = *v * gain;
        }
        Self { values }.clamped()
    }

    /// Re-applies the unit clamp. Guards against rounding pushing a convex
    /// combination a hair outside `[0, 1]`.
    fn clamped(mut self) -> Self {
        for v in self.values.iter_mut() {
            *v = v.clamp_unit();
        }
        self
    }

    pub fn l2_norm_sq(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, v| acc + *v * *v)
    }

    pub fn cast<U: Scalar>(&self) -> BlendshapeVector<U> {
        let mut values = [U::zero(); CHANNEL_COUNT];
        for (dst, src) in values.iter_mut().zip(self.values.iter()) {
            *dst = U::of(src.as_f64()).clamp_unit();
        }
        BlendshapeVector { values }
    }
}

impl<T> Index<ChannelId> for BlendshapeVector<T> {
    type Output = T;

    fn index(&self, channel: ChannelId) -> &T {
        &self.values[channel.index()]
    }
}

/// Duration-normalized trajectory of one viseme, sampled on a uniform grid
/// over normalized time `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisemeTrajectory<T> {
    samples: Vec<BlendshapeVector<T>>,
}

impl<T: Scalar> VisemeTrajectory<T> {
    pub fn new(samples: Vec<BlendshapeVector<T>>) -> Result<Self, BlendshapeError> {
        if samples.len() < 2 {
            return Err(BlendshapeError::TooFewSamples(samples.len()));
        }
        Ok(Self { samples })
    }

    /// Same frame repeated `n` times.
    pub fn constant(frame: BlendshapeVector<T>, n: usize) -> Result<Self, BlendshapeError> {
        Self::new(vec![frame; n])
    }

    pub fn samples(&self) -> &[BlendshapeVector<T>] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn first(&self) -> &BlendshapeVector<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &BlendshapeVector<T> {
        &self.samples[self.samples.len() - 1]
    }

    /// Per-channel linear interpolation at normalized time `tau`, clamped
    /// to `[0, 1]`.
    pub fn sample_at(&self, tau: T) -> BlendshapeVector<T> {
        let tau = tau.clamp_unit();
        let last = self.samples.len() - 1;
        let pos = tau * T::of_usize(last);
        let mut idx = pos.as_f64().floor() as usize;
        if idx >= last {
            return self.samples[last];
        }
        let mut frac = pos - T::of_usize(idx);
        // float floor can land one below an exact integer position
        if frac >= T::one() {
            idx += 1;
            frac = frac - T::one();
            if idx >= last {
                return self.samples[last];
            }
        }
        if frac == T::zero() {
            return self.samples[idx];
        }
        self.samples[idx].lerp(&self.samples[idx + 1], frac)
    }

    /// Values of one channel over the grid.
    pub fn channel(&self, channel: ChannelId) -> Vec<T> {
        self.samples.iter().map(|s| s.get(channel)).collect()
    }

    pub fn cast<U: Scalar>(&self) -> VisemeTrajectory<U> {
        VisemeTrajectory {
            samples: self.samples.iter().map(BlendshapeVector::cast).collect(),
        }
    }
}

/// Resamples a trajectory onto `n` uniformly spaced points of normalized
/// time. Endpoints are copied verbatim; interior points interpolate
/// linearly between the two bracketing input samples.
pub fn resample_trajectory<T: Scalar>(
    trajectory: &VisemeTrajectory<T>,
    n: usize,
) -> Result<VisemeTrajectory<T>, BlendshapeError> {
    if n < 2 {
        return Err(BlendshapeError::BadSampleCount(n));
    }
    let src = trajectory.samples();
    let span = src.len() - 1;
    let denom = n - 1;
    let samples = (0..n)
        .map(|j| {
            // exact integer position j * span / denom
            let num = j * span;
            let idx = num / denom;
            let rem = num % denom;
            if rem == 0 {
                src[idx]
            } else {
                let frac = T::of_usize(rem) / T::of_usize(denom);
                src[idx].lerp(&src[idx + 1], frac)
            }
        })
        .collect();
    Ok(VisemeTrajectory { samples })
}

/// Uniformly sampled stream of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeries<T> {
    frames: Vec<BlendshapeVector<T>>,
    fps: f64,
    start_time: f64,
}

impl<T: Scalar> FrameSeries<T> {
    pub fn new(frames: Vec<BlendshapeVector<T>>, fps: f64, start_time: f64) -> Result<Self, BlendshapeError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(BlendshapeError::BadFrameRate(fps));
        }
        Ok(Self {
            frames,
            fps,
            start_time,
        })
    }

    pub fn frames(&self) -> &[BlendshapeVector<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<BlendshapeVector<T>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.fps
    }

    pub fn end_time(&self) -> f64 {
        if self.frames.is_empty() {
            self.start_time
        } else {
            self.time_of(self.frames.len() - 1)
        }
    }

    pub fn channel(&self, channel: ChannelId) -> Vec<T> {
        self.frames.iter().map(|f| f.get(channel)).collect()
    }

    /// Same timing, different frames.
    pub fn with_frames(&self, frames: Vec<BlendshapeVector<T>>) -> Self {
        Self {
            frames,
            fps: self.fps,
            start_time: self.start_time,
        }
    }

    /// Contiguous slice `[from, to)` keeping absolute timing.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            frames: self.frames[from..to].to_vec(),
            fps: self.fps,
            start_time: self.time_of(from),
        }
    }

    /// Linear interpolation at absolute time `t`; `None` outside the series.
    pub fn sample_at_time(&self, t: f64) -> Option<BlendshapeVector<T>> {
        if self.frames.is_empty() {
            return None;
        }
        let pos = (t - self.start_time) * self.fps;
        let last = (self.frames.len() - 1) as f64;
        const SNAP: f64 = 1e-9;
        if pos < -SNAP || pos > last + SNAP {
            return None;
        }
        let nearest = pos.round();
        if (pos - nearest).abs() <= SNAP {
            return Some(self.frames[nearest.clamp(0.0, last) as usize]);
        }
        let idx = pos.floor() as usize;
        let frac = T::of(pos - idx as f64);
        Some(self.frames[idx].lerp(&self.frames[idx + 1], frac))
    }

    pub fn cast<U: Scalar>(&self) -> FrameSeries<U> {
        FrameSeries {
            frames: self.frames.iter().map(BlendshapeVector::cast).collect(),
            fps: self.fps,
            start_time: self.start_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn ramp_traj(values: &[f64]) -> VisemeTrajectory<f64> {
        let samples = values
            .iter()
            .map(|&v| BlendshapeVector::from_fn(|c| if c == ChannelId::JAW_OPEN { v } else { 0.0 }).unwrap())
            .collect();
        VisemeTrajectory::new(samples).unwrap()
    }

    #[test]
    fn channel_list_is_canonical() {
        assert_eq!(CHANNEL_NAMES.len(), 27);
        let mut sorted = CHANNEL_NAMES.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 27);
        for name in [
            "jawOpen",
            "mouthFunnel",
            "mouthUpperUpLeft",
            "mouthUpperUpRight",
            "mouthSmileLeft",
            "mouthStretchLeft",
            "jawLeft",
            "jawRight",
            "mouthDimpleLeft",
            "mouthDimpleRight",
        ] {
            assert!(ChannelId::from_name(name).is_some(), "{name}");
        }
        assert_eq!(ChannelId::JAW_OPEN.name(), "jawOpen");
        assert_eq!(ChannelId::MOUTH_STRETCH_LEFT.name(), "mouthStretchLeft");
        assert_eq!(ChannelId::MOUTH_UPPER_UP_RIGHT.name(), "mouthUpperUpRight");
        assert_eq!(ChannelId::MOUTH_PRESS_LEFT.name(), "mouthPressLeft");
        assert_eq!(ChannelId::MOUTH_DIMPLE_RIGHT.name(), "mouthDimpleRight");
    }

    #[test]
    fn construction_clamps_and_rejects_nan() {
        let mut raw = [0.5; CHANNEL_COUNT];
        raw[0] = -0.1;
        raw[1] = 1.3;
        let v = BlendshapeVector::new(raw).unwrap();
        assert_eq!(v.values()[0], 0.0);
        assert_eq!(v.values()[1], 1.0);
        assert_eq!(BlendshapeVector::new(*v.values()).unwrap(), v);
        raw[2] = f64::NAN;
        assert!(matches!(
            BlendshapeVector::new(raw),
            Err(BlendshapeError::NonFinite { channel: "jawRight" })
        ));
    }

    #[test]
    fn resample_two_sample_ramp() {
        let t = ramp_traj(&[0.0, 1.0]);
        let r = resample_trajectory(&t, 5).unwrap();
        assert_eq!(r.channel(ChannelId::JAW_OPEN), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn resample_keeps_endpoints_bit_identical() {
        let vals: Vec<f64> = (0..30).map(|i| ((i as f64) * 0.37).sin().abs()).collect();
        let t = ramp_traj(&vals);
        let r = resample_trajectory(&t, 60).unwrap();
        assert_eq!(r.sample_count(), 60);
        assert_eq!(r.first(), t.first());
        assert_eq!(r.last(), t.last());
    }

    #[test]
    fn resample_constant_and_fixed_point() {
        let frame = BlendshapeVector::from_fn(|c| c.index() as f64 / 30.0).unwrap();
        let t = VisemeTrajectory::constant(frame, 7).unwrap();
        for n in [2, 3, 13, 100] {
            let r = resample_trajectory(&t, n).unwrap();
            assert!(r.samples().iter().all(|s| *s == frame));
        }
        let vals: Vec<f64> = (0..11).map(|i| (i as f64 / 10.0).powi(2)).collect();
        let t = ramp_traj(&vals);
        assert_eq!(resample_trajectory(&t, 11).unwrap(), t);
    }

    #[test]
    fn resample_rejects_short_target() {
        let t = ramp_traj(&[0.0, 1.0]);
        assert_eq!(resample_trajectory(&t, 1), Err(BlendshapeError::BadSampleCount(1)));
    }

    #[test]
    fn resample_is_exactly_linear_over_rationals() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let mk = |vals: &[Ratio<i64>]| {
            VisemeTrajectory::new(
                vals.iter()
                    .map(|&v| {
                        BlendshapeVector::from_fn(|c| if c.index() == 5 { v } else { Ratio::from_integer(0) }).unwrap()
                    })
                    .collect(),
            )
            .unwrap()
        };
        let t1 = mk(&[r(0, 1), r(1, 3), r(1, 1), r(1, 2)]);
        let t2 = mk(&[r(1, 5), r(2, 3), r(0, 1), r(1, 4)]);
        let alpha = r(2, 7);
        let mix = VisemeTrajectory::new(
            t1.samples()
                .iter()
                .zip(t2.samples())
                .map(|(a, b)| b.lerp(a, alpha))
                .collect(),
        )
        .unwrap();
        let lhs = resample_trajectory(&mix, 9).unwrap();
        let r1 = resample_trajectory(&t1, 9).unwrap();
        let r2 = resample_trajectory(&t2, 9).unwrap();
        for ((l, a), b) in lhs.samples().iter().zip(r1.samples()).zip(r2.samples()) {
            assert_eq!(*l, b.lerp(a, alpha));
        }
    }

    #[test]
    fn sample_at_interpolates() {
        let t = ramp_traj(&[0.0, 1.0, 0.0]);
        assert_eq!(t.sample_at(0.25)[ChannelId::JAW_OPEN], 0.5);
        assert_eq!(t.sample_at(0.5)[ChannelId::JAW_OPEN], 1.0);
        assert_eq!(t.sample_at(1.0)[ChannelId::JAW_OPEN], 0.0);
        assert_eq!(t.sample_at(1.5)[ChannelId::JAW_OPEN], 0.0);
    }

    #[test]
    fn series_time_lookup() {
        let frames = (0..4)
            .map(|i| BlendshapeVector::from_fn(|_| i as f64 / 4.0).unwrap())
            .collect();
        let s = FrameSeries::new(frames, 2.0, 1.0).unwrap();
        assert_eq!(s.time_of(3), 2.5);
        assert_eq!(s.sample_at_time(1.5).unwrap()[ChannelId::JAW_OPEN], 0.25);
        assert_eq!(s.sample_at_time(1.25).unwrap()[ChannelId::JAW_OPEN], 0.125);
        assert!(s.sample_at_time(0.9).is_none());
        assert!(s.sample_at_time(2.6).is_none());
        assert!(FrameSeries::<f64>::new(vec![], 0.0, 0.0).is_err());
    }
}
