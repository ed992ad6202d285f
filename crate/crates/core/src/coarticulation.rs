//! Script-driven synthesis of continuous lip trajectories.
//!
//! Inside an event of period `T`, normalized time is `tau = (t - start) / T`.
//! The syllable's viseme sequence decides the generator:
//!
//! * one viseme: the library trajectory is played back as recorded;
//! * two visemes: `(1 - w) V1(tau) + w V2(tau)` with
//!   `w(tau, a) = ((1 - cos(pi tau)) / 2)^a`;
//! * three visemes: two cascaded transitions split at `tau = lambda`, each
//!   using `w(., 1)`.
//!
//! Between events the last pose decays geometrically toward neutral.
//! Methods A and B are the baselines used for ablation: static targets
//! joined by straight lines, and hard per-viseme time slots.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blendshape::{BlendshapeError, BlendshapeVector, ChannelId, FrameSeries, VisemeTrajectory};
use crate::library::VisemeLibrary;
use crate::pinyin::{normalize_syllable, syllable_to_visemes, MapError, MappingTable, VisemeId, VisemeSequence};
use crate::scalar::{Real, Scalar};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CoarticulationError {
    #[error("normalized time {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("lambda must lie in (0, 1), got {0}")]
    BadLambda(f64),
    #[error("trajectories have different sample counts ({0} vs {1})")]
    SampleCountMismatch(usize, usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("script json: {0}")]
    Json(String),
    #[error("event {index}: duration must be positive and finite, got {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("event {index}: start must be finite and non-negative, got {start}")]
    BadStart { index: usize, start: f64 },
    #[error("event {index} starts at {start} before event {prev} ends at {prev_end}")]
    Overlap {
        index: usize,
        start: f64,
        prev: usize,
        prev_end: f64,
    },
    #[error("total duration {total} ends before the last event ({last_end})")]
    TotalTooShort { total: f64, last_end: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("event {index} (`{syllable}`): {source}")]
    Unmapped {
        index: usize,
        syllable: String,
        source: MapError,
    },
    #[error("event {index} (`{syllable}`): viseme {viseme} missing from library")]
    MissingViseme {
        index: usize,
        syllable: String,
        viseme: VisemeId,
    },
    #[error("method D needs an audio energy envelope; use the audio module to compose it")]
    EnergyRequired,
    #[error("invalid fusion parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Coarticulation(#[from] CoarticulationError),
    #[error(transparent)]
    Blendshape(#[from] BlendshapeError),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}

/// One timed syllable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyllableEvent {
    pub syllable: String,
    #[serde(rename = "start_s")]
    pub start: f64,
    /// Articulation period `T` in seconds.
    #[serde(rename = "duration_s")]
    pub duration: f64,
}

impl SyllableEvent {
    pub fn new(syllable: impl Into<String>, start: f64, duration: f64) -> Self {
        Self {
            syllable: syllable.into(),
            start,
            duration,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Sorted, non-overlapping syllable events.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedScript {
    events: Vec<SyllableEvent>,
    total_duration: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Full {
        events: Vec<SyllableEvent>,
        #[serde(default, rename = "total_duration_s", skip_serializing_if = "Option::is_none")]
        total_duration: Option<f64>,
    },
    Bare(Vec<SyllableEvent>),
}

impl TimedScript {
    /// `total_duration` defaults to the end of the last event.
    pub fn new(events: Vec<SyllableEvent>, total_duration: Option<f64>) -> Result<Self, ScriptError> {
        let mut last_end = 0.0f64;
        for (index, e) in events.iter().enumerate() {
            if !(e.duration.is_finite() && e.duration > 0.0) {
                return Err(ScriptError::BadDuration {
                    index,
                    duration: e.duration,
                });
            }
            if !(e.start.is_finite() && e.start >= 0.0) {
                return Err(ScriptError::BadStart { index, start: e.start });
            }
            if index > 0 && e.start < last_end - TIME_EPS {
                return Err(ScriptError::Overlap {
                    index,
                    start: e.start,
                    prev: index - 1,
                    prev_end: last_end,
                });
            }
            last_end = e.end();
        }
        let total = total_duration.unwrap_or(last_end);
        if !(total.is_finite()) || total < last_end - TIME_EPS {
            return Err(ScriptError::TotalTooShort { total, last_end });
        }
        Ok(Self {
            events,
            total_duration: total,
        })
    }

    /// Back-to-back events of equal duration after a lead-in.
    pub fn uniform(syllables: &[&str], lead_in: f64, duration: f64, gap: f64, tail: f64) -> Result<Self, ScriptError> {
        let mut t = lead_in;
        let mut events = Vec::with_capacity(syllables.len());
        for (i, s) in syllables.iter().enumerate() {
            if i > 0 {
                t += gap;
            }
            events.push(SyllableEvent::new(*s, t, duration));
            t += duration;
        }
        Self::new(events, Some(t + tail))
    }

    pub fn events(&self) -> &[SyllableEvent] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }
}

impl FromStr for TimedScript {
    type Err = ScriptError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| ScriptError::Json(e.to_string()))?;
        match file {
            ScriptFile::Full { events, total_duration } => Self::new(events, total_duration),
            ScriptFile::Bare(events) => Self::new(events, None),
        }
    }
}

/// Serializes a script to pretty JSON.
pub fn write_script(script: &TimedScript) -> String {
    let file = ScriptFile::Full {
        events: script.events.clone(),
        total_duration: Some(script.total_duration),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("finite script");
    out.push('\n');
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Static targets joined by linear interpolation.
    A,
    /// Dynamic visemes in hard time slots.
    B,
    /// Dual/triple coarticulation fusion.
    C,
    /// Fusion followed by energy modulation and smoothing.
    D,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Method::A),
            "B" => Ok(Method::B),
            "C" => Ok(Method::C),
            "D" => Ok(Method::D),
            other => Err(format!("unknown method `{other}` (expected A, B, C or D)")),
        }
    }
}

/// How Method A reduces a dynamic viseme to a single target frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetSelection {
    /// Frame with the largest value of the given channel.
    MaxChannel(ChannelId),
    /// Frame with the largest L2 norm.
    MaxNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    /// Exponent bias of the dual-fusion weight.
    pub a: f64,
    /// Split point of the three-viseme cascade.
    pub lambda: f64,
    /// Per-frame decay toward neutral between events.
    pub rest_decay_alpha: f64,
    pub method: Method,
    pub fps: f64,
    /// Share of `T` given to the initial by Methods A and B.
    pub initial_slot_fraction: f64,
    pub target_selection: TargetSelection,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            a: 0.7,
            lambda: 0.5,
            rest_decay_alpha: 0.15,
            method: Method::C,
            fps: 60.0,
            initial_slot_fraction: 0.2,
            target_selection: TargetSelection::MaxChannel(ChannelId::JAW_OPEN),
        }
    }
}

impl FusionParams {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: String| Err(SynthesisError::Params(m));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a must be positive, got {}", self.a));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.rest_decay_alpha > 0.0 && self.rest_decay_alpha <= 1.0) {
            return bad(format!(
                "rest_decay_alpha must lie in (0, 1], got {}",
                self.rest_decay_alpha
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.initial_slot_fraction > 0.0 && self.initial_slot_fraction < 1.0) {
            return bad(format!(
                "initial_slot_fraction must lie in (0, 1), got {}",
                self.initial_slot_fraction
            ));
        }
        Ok(())
    }
}

/// `((1 - cos(pi tau)) / 2)^a`, evaluated as `sin(pi tau / 2)^(2a)`.
pub fn fusion_weight<T: Real>(tau: T, a: T) -> Result<T, CoarticulationError> {
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(CoarticulationError::TauOutOfRange(tau.as_f64()));
    }
    if !(a > T::zero()) {
        return Err(CoarticulationError::BadExponent(a.as_f64()));
    }
    let half_angle = T::FRAC_PI_2() * tau;
    let s = half_angle.sin();
    Ok((s * s).powf(a).clamp_unit())
}

fn check_grid<T: Scalar>(a: &VisemeTrajectory<T>, b: &VisemeTrajectory<T>) -> Result<(), CoarticulationError> {
    if a.sample_count() != b.sample_count() {
        return Err(CoarticulationError::SampleCountMismatch(
            a.sample_count(),
            b.sample_count(),
        ));
    }
    Ok(())
}

/// Two-viseme fusion at normalized time `tau`.
pub fn blend_dual<T: Real>(
    v1: &VisemeTrajectory<T>,
    v2: &VisemeTrajectory<T>,
    tau: T,
    a: T,
) -> Result<BlendshapeVector<T>, CoarticulationError> {
    check_grid(v1, v2)?;
    let w = fusion_weight(tau, a)?;
    Ok(v1.sample_at(tau).lerp(&v2.sample_at(tau), w))
}

/// Three-viseme cascade split at `lambda`; both stages use exponent 1.
pub fn blend_triple<T: Real>(
    v1: &VisemeTrajectory<T>,
    v2: &VisemeTrajectory<T>,
    v3: &VisemeTrajectory<T>,
    tau: T,
    lambda: T,
) -> Result<BlendshapeVector<T>, CoarticulationError> {
    check_grid(v1, v2)?;
    check_grid(v2, v3)?;
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(CoarticulationError::BadLambda(lambda.as_f64()));
    }
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(CoarticulationError::TauOutOfRange(tau.as_f64()));
    }
    if tau <= lambda {
        let w = fusion_weight((tau / lambda).clamp_unit(), T::one())?;
        Ok(v1.sample_at(tau).lerp(&v2.sample_at(tau), w))
    } else {
        let local = ((tau - lambda) / (T::one() - lambda)).clamp_unit();
        let w = fusion_weight(local, T::one())?;
        Ok(v2.sample_at(tau).lerp(&v3.sample_at(tau), w))
    }
}

/// An event resolved against the table and library.
#[derive(Clone, Debug)]
pub struct PlannedEvent<'a, T> {
    pub index: usize,
    pub start: f64,
    pub duration: f64,
    pub syllable: String,
    pub sequence: VisemeSequence,
    pub trajectories: Vec<&'a VisemeTrajectory<T>>,
}

impl<T> PlannedEvent<'_, T> {
    /// Normalized slot boundaries `[0, b1, ..., 1]` used by Methods A and B:
    /// an initial gets `fraction` of the period, the remaining visemes split
    /// the rest evenly.
    pub fn slots(&self, fraction: f64) -> Vec<f64> {
        let n = self.sequence.len();
        let mut bounds = Vec::with_capacity(n + 1);
        bounds.push(0.0);
        if self.sequence.has_initial() && n >= 2 {
            bounds.push(fraction);
            let rest = n - 1;
            for k in 1..rest {
                bounds.push(fraction + (1.0 - fraction) * k as f64 / rest as f64);
            }
        } else {
            for k in 1..n {
                bounds.push(k as f64 / n as f64);
            }
        }
        bounds.push(1.0);
        bounds
    }
}

/// Resolves every event of a script to its viseme trajectories.
pub fn plan_script<'a, T: Scalar>(
    script: &TimedScript,
    library: &'a VisemeLibrary<T>,
    table: &MappingTable,
) -> Result<Vec<PlannedEvent<'a, T>>, SynthesisError> {
    script
        .events()
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let syllable = normalize_syllable(&e.syllable);
            let sequence = syllable_to_visemes(&syllable, table).map_err(|source| SynthesisError::Unmapped {
                index,
                syllable: e.syllable.clone(),
                source,
            })?;
            let trajectories = sequence
                .ids()
                .iter()
                .map(|&viseme| {
                    library.get(viseme).ok_or(SynthesisError::MissingViseme {
                        index,
                        syllable: e.syllable.clone(),
                        viseme,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PlannedEvent {
                index,
                start: e.start,
                duration: e.duration,
                syllable,
                sequence,
                trajectories,
            })
        })
        .collect()
}

/// Number of output frames covering `[0, total]` inclusive.
pub fn frame_count(total_duration: f64, fps: f64) -> usize {
    (total_duration * fps + TIME_EPS).floor() as usize + 1
}

/// For each output frame, the owning event (later events win shared
/// boundary frames) and its normalized time.
fn assign_frames<T>(plan: &[PlannedEvent<'_, T>], n_frames: usize, fps: f64) -> Vec<Option<(usize, f64)>> {
    let mut owner = vec![None; n_frames];
    for (k, ev) in plan.iter().enumerate() {
        let first = ((ev.start * fps) - TIME_EPS).ceil().max(0.0) as usize;
        let last = ((ev.start + ev.duration) * fps + TIME_EPS).floor() as usize;
        for (n, slot) in owner
            .iter_mut()
            .enumerate()
            .take(last.min(n_frames.saturating_sub(1)) + 1)
            .skip(first)
        {
            let t = n as f64 / fps;
            let mut tau = (t - ev.start) / ev.duration;
            if tau.abs() < TIME_EPS {
                tau = 0.0;
            } else if (tau - 1.0).abs() < TIME_EPS {
                tau = 1.0;
            }
            *slot = Some((k, tau.clamp(0.0, 1.0)));
        }
    }
    owner
}

fn fused_frame<T: Real>(
    ev: &PlannedEvent<'_, T>,
    tau: T,
    params: &FusionParams,
) -> Result<BlendshapeVector<T>, SynthesisError> {
    let t = &ev.trajectories;
    Ok(match t.len() {
        1 => t[0].sample_at(tau),
        2 => blend_dual(t[0], t[1], tau, T::of(params.a))?,
        _ => blend_triple(t[0], t[1], t[2], tau, T::of(params.lambda))?,
    })
}

/// Method B playback positions: for every frame owned by an event, the
/// slot it falls in and the position inside that slot's trajectory. Each
/// slot maps its first frame to sample 0 and its last frame to the final
/// sample, so the whole trajectory plays. Single-viseme events use `tau`.
fn slot_positions<T>(
    plan: &[PlannedEvent<'_, T>],
    owners: &[Option<(usize, f64)>],
    fraction: f64,
) -> Vec<Option<(usize, f64)>> {
    let mut slot_of = vec![None; owners.len()];
    for (n, owner) in owners.iter().enumerate() {
        if let Some((k, tau)) = *owner {
            let bounds = plan[k].slots(fraction);
            let count = plan[k].trajectories.len();
            let slot = (0..count)
                .find(|&s| tau < bounds[s + 1] - TIME_EPS)
                .unwrap_or(count - 1);
            slot_of[n] = Some((k, slot, tau));
        }
    }
    let mut out = vec![None; owners.len()];
    let mut n = 0;
    while n < slot_of.len() {
        let Some((k, slot, tau)) = slot_of[n] else {
            n += 1;
            continue;
        };
        if plan[k].trajectories.len() == 1 {
            out[n] = Some((slot, tau));
            n += 1;
            continue;
        }
        let mut end = n;
        while end + 1 < slot_of.len() && matches!(slot_of[end + 1], Some((k2, s2, _)) if k2 == k && s2 == slot) {
            end += 1;
        }
        for (i, o) in out.iter_mut().enumerate().take(end + 1).skip(n) {
            let local = if end == n {
                0.0
            } else {
                (i - n) as f64 / (end - n) as f64
            };
            *o = Some((slot, local));
        }
        n = end + 1;
    }
    out
}

fn static_target<T: Real>(traj: &VisemeTrajectory<T>, selection: TargetSelection) -> BlendshapeVector<T> {
    let score = |s: &BlendshapeVector<T>| match selection {
        TargetSelection::MaxChannel(c) => s.get(c),
        TargetSelection::MaxNorm => s.l2_norm_sq(),
    };
    let mut best = traj.first();
    for s in traj.samples() {
        if score(s) > score(best) {
            best = s;
        }
    }
    *best
}

fn static_frame<T: Real>(ev: &PlannedEvent<'_, T>, tau: f64, params: &FusionParams) -> BlendshapeVector<T> {
    let bounds = ev.slots(params.initial_slot_fraction);
    let mut anchors: Vec<(f64, BlendshapeVector<T>)> = Vec::with_capacity(ev.trajectories.len() + 2);
    anchors.push((0.0, BlendshapeVector::zeros()));
    for (k, traj) in ev.trajectories.iter().enumerate() {
        let center = 0.5 * (bounds[k] + bounds[k + 1]);
        anchors.push((center, static_target(traj, params.target_selection)));
    }
    anchors.push((1.0, BlendshapeVector::zeros()));
    let seg = anchors
        .windows(2)
        .position(|w| tau <= w[1].0)
        .unwrap_or(anchors.len() - 2);
    let (t0, f0) = anchors[seg];
    let (t1, f1) = anchors[seg + 1];
    let w = ((tau - t0) / (t1 - t0)).clamp(0.0, 1.0);
    f0.lerp(&f1, T::of(w))
}

/// Synthesizes a frame series for Methods A, B and C. Method D needs an
/// energy envelope and is composed by [`crate::audio::synthesize_method_d`].
pub fn synthesize<T: Real>(
    script: &TimedScript,
    library: &VisemeLibrary<T>,
    table: &MappingTable,
    params: &FusionParams,
) -> Result<FrameSeries<T>, SynthesisError> {
    params.validate()?;
    if params.method == Method::D {
        return Err(SynthesisError::EnergyRequired);
    }
    let plan = plan_script(script, library, table)?;
    let n_frames = frame_count(script.total_duration(), params.fps);
    let owners = assign_frames(&plan, n_frames, params.fps);
    let decay = T::one() - T::of(params.rest_decay_alpha);
    let slots = if params.method == Method::B {
        slot_positions(&plan, &owners, params.initial_slot_fraction)
    } else {
        Vec::new()
    };

    let mut frames: Vec<BlendshapeVector<T>> = Vec::with_capacity(n_frames);
    for (n, owner) in owners.into_iter().enumerate() {
        let frame = match (owner, params.method) {
            (Some((k, tau)), Method::A) => static_frame(&plan[k], tau, params),
            (Some((k, _)), Method::B) => {
                let (slot, local) = slots[n].expect("owned frame has a slot");
                plan[k].trajectories[slot].sample_at(T::of(local))
            }
            (Some((k, tau)), _) => fused_frame(&plan[k], T::of(tau), params)?,
            (None, Method::A) => BlendshapeVector::zeros(),
            (None, _) => frames
                .last()
                .map_or_else(BlendshapeVector::zeros, |prev| prev.scaled(decay)),
        };
        frames.push(frame);
    }
    Ok(FrameSeries::new(frames, params.fps, 0.0)?)
}

pub fn synthesize_method_a<T: Real>(
    script: &TimedScript,
    library: &VisemeLibrary<T>,
    table: &MappingTable,
    params: &FusionParams,
) -> Result<FrameSeries<T>, SynthesisError> {
    synthesize(
        script,
        library,
        table,
        &FusionParams {
            method: Method::A,
            ..params.clone()
        },
    )
}

pub fn synthesize_method_b<T: Real>(
    script: &TimedScript,
    library: &VisemeLibrary<T>,
    table: &MappingTable,
    params: &FusionParams,
) -> Result<FrameSeries<T>, SynthesisError> {
    synthesize(
        script,
        library,
        table,
        &FusionParams {
            method: Method::B,
            ..params.clone()
        },
    )
}

/// Absolute times of phoneme boundaries: every event start and end plus
/// the internal slot boundaries used by Method B.
pub fn phoneme_boundaries<T: Scalar>(
    script: &TimedScript,
    library: &VisemeLibrary<T>,
    table: &MappingTable,
    params: &FusionParams,
) -> Result<Vec<f64>, SynthesisError> {
    let plan = plan_script(script, library, table)?;
    let mut out: Vec<f64> = Vec::new();
    for ev in &plan {
        for b in ev.slots(params.initial_slot_fraction) {
            out.push(ev.start + b * ev.duration);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < TIME_EPS);
    Ok(out)
}

/// Largest per-channel frame-to-frame jump across the given boundary
/// times. For each boundary the jump is measured between the first frame at
/// or after it and the frame before.
pub fn boundary_discontinuity<T: Scalar>(series: &FrameSeries<T>, boundaries: &[f64]) -> T {
    let mut worst = T::zero();
    let frames = series.frames();
    for &b in boundaries {
        let n = ((b - series.start_time()) * series.fps() - TIME_EPS).ceil();
        if n < 1.0 || n >= frames.len() as f64 {
            continue;
        }
        let n = n as usize;
        for (x, y) in frames[n].values().iter().zip(frames[n - 1].values()) {
            worst = worst.max_of((*x - *y).abs());
        }
    }
    worst
}
