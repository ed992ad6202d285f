//! Audio energy envelope and the Method D post-processing stage.

use std::io::Cursor;

use thiserror::Error;

use crate::blendshape::{BlendshapeError, FrameSeries};
use crate::coarticulation::{synthesize, FusionParams, Method, SynthesisError, TimedScript};
use crate::library::VisemeLibrary;
use crate::pinyin::MappingTable;
use crate::scalar::{Real, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("wav: {0}")]
    Wav(String),
    #[error("unsupported wav encoding: {0}")]
    Unsupported(String),
    #[error("audio contains no samples")]
    Empty,
    #[error("envelope has {envelope} frames but the series has {series}")]
    LengthMismatch { envelope: usize, series: usize },
    #[error("invalid modulation parameter: {0}")]
    Params(String),
}

/// Decoded mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    /// Samples in `[-1, 1]`.
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Decodes 16-bit PCM WAV. Stereo (or wider) input is averaged to mono.
pub fn read_wav(bytes: &[u8]) -> Result<Audio, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| AudioError::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Unsupported(format!(
            "{:?} {}-bit (expected 16-bit PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let raw = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AudioError::Wav(e.to_string()))?;
    let samples = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Encodes mono samples as 16-bit PCM WAV, clamping to full scale.
pub fn write_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in samples {
            let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(q).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    /// `y[n] = alpha x[n] + (1 - alpha) y[n-1]`.
    Ema,
    /// Centered moving average over an odd number of frames.
    MovingAverage { frames: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationParams {
    /// RMS window length in seconds.
    pub window: f64,
    /// Gain applied when the envelope is zero.
    pub floor_gain: f64,
    pub norm_percentile: f64,
    pub ema_alpha: f64,
    pub smoothing: Smoothing,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            window: 0.025,
            floor_gain: 0.2,
            norm_percentile: 95.0,
            ema_alpha: 0.3,
            smoothing: Smoothing::Ema,
        }
    }
}

impl ModulationParams {
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: String| Err(AudioError::Params(m));
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if !(0.0..1.0).contains(&self.floor_gain) {
            return bad(format!("floor gain must lie in [0, 1), got {}", self.floor_gain));
        }
        if !(self.norm_percentile > 0.0 && self.norm_percentile <= 100.0) {
            return bad(format!("percentile must lie in (0, 100], got {}", self.norm_percentile));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad(format!("ema alpha must lie in (0, 1], got {}", self.ema_alpha));
        }
        if let Smoothing::MovingAverage { frames } = self.smoothing {
            if frames == 0 || frames % 2 == 0 {
                return bad(format!("moving average needs an odd frame count, got {frames}"));
            }
        }
        Ok(())
    }
}

/// Normalized per-frame energy in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEnvelope {
    values: Vec<f64>,
    fps: f64,
}

impl EnergyEnvelope {
    pub fn new(values: Vec<f64>, fps: f64) -> Result<Self, AudioError> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(AudioError::Params(format!("envelope value {v} outside [0, 1]")));
        }
        Ok(Self { values, fps })
    }

    pub fn constant(value: f64, len: usize, fps: f64) -> Result<Self, AudioError> {
        Self::new(vec![value; len], fps)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }
}

/// Un-normalized RMS over a window centered on each frame time `n / fps`,
/// truncated at the audio edges. Frames whose window misses the audio
/// entirely get zero.
pub fn rms_raw(audio: &Audio, fps: f64, frames: usize, window: f64) -> Result<Vec<f64>, AudioError> {
    if audio.samples.is_empty() {
        return Err(AudioError::Empty);
    }
    let sr = audio.sample_rate as f64;
    let last = audio.samples.len() as i64 - 1;
    let half = window / 2.0;
    Ok((0..frames)
        .map(|n| {
            let t = n as f64 / fps;
            let lo = (((t - half) * sr) - 1e-9).ceil().max(0.0) as i64;
            let hi = ((((t + half) * sr) + 1e-9).floor() as i64).min(last);
            if hi < lo {
                return 0.0;
            }
            // summed per window: a running prefix sum loses quiet windows to cancellation
            let sum: f64 = audio.samples[lo as usize..=hi as usize].iter().map(|s| s * s).sum();
            (sum / (hi - lo + 1) as f64).sqrt()
        })
        .collect())
}

/// Linear-interpolated percentile of a sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// RMS envelope for `frames` output frames, divided by its percentile value
/// and clamped to `[0, 1]`. Falls back to the maximum when the percentile is
/// zero; silent audio gives an all-zero envelope.
pub fn rms_envelope(
    audio: &Audio,
    fps: f64,
    frames: usize,
    params: &ModulationParams,
) -> Result<EnergyEnvelope, AudioError> {
    params.validate()?;
    let raw = rms_raw(audio, fps, frames, params.window)?;
    let mut scale = percentile(&raw, params.norm_percentile);
    if scale <= 0.0 {
        scale = raw.iter().cloned().fold(0.0, f64::max);
    }
    let values = if scale > 0.0 {
        raw.iter().map(|v| (v / scale).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    EnergyEnvelope::new(values, fps)
}

/// Scales frame `n` by `g_min + (1 - g_min) env[n]`.
pub fn modulate<T: Scalar>(
    series: &FrameSeries<T>,
    env: &EnergyEnvelope,
    floor_gain: f64,
) -> Result<FrameSeries<T>, AudioError> {
    if env.len() != series.len() {
        return Err(AudioError::LengthMismatch {
            envelope: env.len(),
            series: series.len(),
        });
    }
    let frames = series
        .frames()
        .iter()
        .zip(env.values())
        .map(|(f, e)| f.scaled(T::of(floor_gain + (1.0 - floor_gain) * e)))
        .collect();
    Ok(series.with_frames(frames))
}

/// First-order exponential smoothing with `y[0] = x[0]`.
pub fn ema_smooth<T: Scalar>(series: &FrameSeries<T>, alpha: T) -> Result<FrameSeries<T>, AudioError> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(AudioError::Params(format!(
            "ema alpha must lie in (0, 1], got {}",
            alpha.as_f64()
        )));
    }
    let mut out = Vec::with_capacity(series.len());
    for f in series.frames() {
        let y = match out.last() {
            None => *f,
            Some(prev) => crate::blendshape::BlendshapeVector::lerp(prev, f, alpha),
        };
        out.push(y);
    }
    Ok(series.with_frames(out))
}

/// Centered moving average; the window shrinks at the series edges.
pub fn moving_average<T: Scalar>(series: &FrameSeries<T>, frames: usize) -> Result<FrameSeries<T>, AudioError> {
    if frames == 0 || frames.is_multiple_of(2) {
        return Err(AudioError::Params(format!(
            "moving average needs an odd frame count, got {frames}"
        )));
    }
    let half = frames / 2;
    let src = series.frames();
    let out = (0..src.len())
        .map(|n| {
            let lo = n.saturating_sub(half);
            let hi = (n + half).min(src.len() - 1);
            let count = T::of_usize(hi - lo + 1);
            crate::blendshape::BlendshapeVector::from_fn(|c| {
                let sum = src[lo..=hi].iter().fold(T::zero(), |acc, f| acc + f.get(c));
                sum / count
            })
        })
        .collect::<Result<Vec<_>, BlendshapeError>>()
        .map_err(|e| AudioError::Params(e.to_string()))?;
    Ok(series.with_frames(out))
}

/// Modulation followed by the configured smoother.
pub fn apply_energy<T: Scalar>(
    series: &FrameSeries<T>,
    env: &EnergyEnvelope,
    params: &ModulationParams,
) -> Result<FrameSeries<T>, AudioError> {
    params.validate()?;
    let modulated = modulate(series, env, params.floor_gain)?;
    match params.smoothing {
        Smoothing::Ema => ema_smooth(&modulated, T::of(params.ema_alpha)),
        Smoothing::MovingAverage { frames } => moving_average(&modulated, frames),
    }
}

/// Method D: fusion synthesis, energy modulation from `audio`, smoothing.
pub fn synthesize_method_d<T: Real>(
    script: &TimedScript,
    library: &VisemeLibrary<T>,
    table: &MappingTable,
    params: &FusionParams,
    audio: &Audio,
    modulation: &ModulationParams,
) -> Result<FrameSeries<T>, SynthesisError> {
    let fused = synthesize(
        script,
        library,
        table,
        &FusionParams {
            method: Method::C,
            ..params.clone()
        },
    )?;
    let env = rms_envelope(audio, params.fps, fused.len(), modulation)?;
    Ok(apply_energy(&fused, &env, modulation)?)
}
