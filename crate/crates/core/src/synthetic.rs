//! Deterministic synthetic fixtures: capture streams for every viseme,
//! timed test sentences, matching speech-like audio and a reference
//! trajectory to score against.
//!
//! These are test fixtures with hand-chosen poses, not measured data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::Audio;
use crate::blendshape::{BlendshapeVector, ChannelId, FrameSeries};
use crate::coarticulation::TimedScript;
use crate::pinyin::{syllable_to_visemes, MappingTable, VisemeId};

pub const DEFAULT_SEED: u64 = 42;
pub const CAPTURE_FPS: f64 = 60.0;
pub const AUDIO_SAMPLE_RATE: u32 = 16_000;
/// Voice fundamental. Three periods fill the default 25 ms RMS window.
pub const TONE_HZ: f64 = 120.0;

pub const LEAD_IN: f64 = 0.3;
pub const EVENT_DURATION: f64 = 0.4;
pub const EVENT_GAP: f64 = 0.1;
pub const TAIL: f64 = 0.5;

/// The four test sentences as `(id, syllables)`.
pub const TEST_SENTENCES: [(&str, [&str; 5]); 4] = [
    ("S1", ["yi", "ge", "da", "xi", "gua"]),
    ("S2", ["shi", "fu", "he", "lü", "cha"]),
    ("S3", ["ba", "ba", "mai", "bai", "cai"]),
    ("S4", ["zi", "ji", "zuo", "zao", "can"]),
];

fn pose(pairs: &[(&str, f64)]) -> BlendshapeVector<f64> {
    BlendshapeVector::from_fn(|c| {
        pairs
            .iter()
            .filter(|(name, _)| {
                c.name() == *name || c.name() == format!("{name}Left") || c.name() == format!("{name}Right")
            })
            .map(|(_, v)| *v)
            .sum()
    })
    .expect("fixture poses are in range")
}

/// Peak articulation pose of a viseme. Names without a side suffix apply
/// to both sides.
pub fn viseme_pose(id: VisemeId) -> BlendshapeVector<f64> {
    use VisemeId::*;
    match id {
        V1Bpm => pose(&[
            ("jawOpen", 0.35),
            ("mouthClose", 0.6),
            ("mouthPress", 0.5),
            ("mouthRollLower", 0.3),
            ("mouthRollUpper", 0.3),
        ]),
        V2F => pose(&[
            ("jawOpen", 0.3),
            ("mouthRollLower", 0.5),
            ("mouthUpperUp", 0.3),
            ("mouthFunnel", 0.1),
        ]),
        V3D => pose(&[("jawOpen", 0.45), ("mouthStretch", 0.2), ("mouthLowerDown", 0.2)]),
        V4Gkh => pose(&[("jawOpen", 0.5), ("mouthStretch", 0.15), ("mouthShrugUpper", 0.2)]),
        V5Jqx => pose(&[
            ("jawOpen", 0.3),
            ("mouthSmile", 0.35),
            ("mouthStretch", 0.3),
            ("mouthUpperUp", 0.2),
        ]),
        V6Zcs => pose(&[
            ("jawOpen", 0.3),
            ("mouthStretch", 0.4),
            ("mouthSmile", 0.2),
            ("mouthLowerDown", 0.15),
        ]),
        V7Zh => pose(&[
            ("jawOpen", 0.35),
            ("mouthFunnel", 0.35),
            ("mouthPucker", 0.25),
            ("mouthUpperUp", 0.2),
        ]),
        V8A => pose(&[
            ("jawOpen", 0.8),
            ("mouthLowerDown", 0.45),
            ("mouthUpperUp", 0.25),
            ("mouthStretch", 0.1),
        ]),
        V9O => pose(&[("jawOpen", 0.6), ("mouthFunnel", 0.55), ("mouthPucker", 0.3)]),
        V10E => pose(&[("jawOpen", 0.5), ("mouthStretch", 0.3), ("mouthLowerDown", 0.25)]),
        V11I => pose(&[("jawOpen", 0.3), ("mouthSmile", 0.5), ("mouthStretch", 0.4)]),
        V12U => pose(&[
            ("jawOpen", 0.3),
            ("mouthPucker", 0.7),
            ("mouthFunnel", 0.4),
            ("jawForward", 0.05),
        ]),
        V13V => pose(&[
            ("jawOpen", 0.3),
            ("mouthPucker", 0.6),
            ("mouthFunnel", 0.2),
            ("mouthSmile", 0.15),
            ("jawForward", 0.05),
        ]),
        V14Ai => pose(&[
            ("jawOpen", 0.65),
            ("mouthStretch", 0.35),
            ("mouthSmile", 0.25),
            ("mouthLowerDown", 0.3),
        ]),
    }
}

/// Repetition rate of a viseme's capture cycles, 1.6 to 2.4 Hz.
pub fn viseme_frequency(id: VisemeId) -> f64 {
    1.6 + 0.8 * id.ordinal() as f64 / 13.0
}

/// Parameters of one synthetic capture stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSpec {
    pub pose: BlendshapeVector<f64>,
    /// Cycles per second.
    pub frequency: f64,
    pub cycles: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    /// Seconds of rest before and after the cycles.
    pub rest: f64,
    /// Share of each mouth channel's pose held between cycles. The jaw
    /// always returns to rest.
    pub sustain: f64,
}

impl CaptureSpec {
    pub fn for_viseme(id: VisemeId) -> Self {
        Self {
            pose: viseme_pose(id),
            frequency: viseme_frequency(id),
            cycles: 5,
            fps: CAPTURE_FPS,
            noise_sigma: 0.01,
            rest: 0.25,
            sustain: 0.35,
        }
    }
}

/// Repeated raised-cosine cycles. jawOpen follows the envelope `e(t)`
/// linearly; other channels follow `e(t)^1.3` so they lag slightly, on top
/// of a held share of the pose that fades in over the first half cycle and
/// out over the last. Gaussian noise is added to every channel before
/// clamping.
pub fn capture_series(spec: &CaptureSpec, rng: &mut ChaCha8Rng) -> FrameSeries<f64> {
    let active = spec.cycles as f64 / spec.frequency;
    let total = 2.0 * spec.rest + active;
    let n = (total * spec.fps).round() as usize + 1;
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / spec.fps - spec.rest;
            let inside = (0.0..=active).contains(&t);
            let e = if inside {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * spec.frequency * t).cos())
            } else {
                0.0
            };
            let ramp_len = 0.5 / spec.frequency;
            let held = if inside {
                let edge = t.min(active - t).min(ramp_len) / ramp_len;
                spec.sustain * (0.5 * std::f64::consts::PI * edge).sin().powi(2)
            } else {
                0.0
            };
            BlendshapeVector::from_fn(|c| {
                let shape = if c == ChannelId::JAW_OPEN {
                    e
                } else if c.name().starts_with("mouth") {
                    held + (1.0 - held) * e.powf(1.3)
                } else {
                    e.powf(1.3)
                };
                let jitter = if spec.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                (spec.pose.get(c) * shape + jitter).clamp(0.0, 1.0)
            })
            .expect("clamped")
        })
        .collect();
    FrameSeries::new(frames, spec.fps, 0.0).expect("valid fixture series")
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Capture streams for all visemes, in catalogue order.
pub fn viseme_captures(seed: u64) -> Vec<(VisemeId, FrameSeries<f64>)> {
    VisemeId::ALL
        .into_iter()
        .map(|id| {
            let mut rng = stream(seed, id.ordinal() as u64);
            (id, capture_series(&CaptureSpec::for_viseme(id), &mut rng))
        })
        .collect()
}

/// Uniformly timed script for one sentence.
pub fn sentence_script(syllables: &[&str]) -> TimedScript {
    TimedScript::uniform(syllables, LEAD_IN, EVENT_DURATION, EVENT_GAP, TAIL).expect("fixed timing is valid")
}

/// Speech-like audio: a harmonic tone under a `sin(pi tau)` envelope per
/// event, louder for more open final visemes, silent between events.
pub fn script_audio(script: &TimedScript, table: &MappingTable, sample_rate: u32) -> Audio {
    let n = (script.total_duration() * sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; n];
    let two_pi = 2.0 * std::f64::consts::PI;
    for e in script.events() {
        let openness = syllable_to_visemes(&e.syllable, table)
            .ok()
            .and_then(|s| s.ids().last().copied())
            .map_or(0.5, |id| viseme_pose(id).get(ChannelId::JAW_OPEN));
        let amp = 0.2 + 0.6 * openness;
        let first = (e.start * sample_rate as f64).ceil() as usize;
        let last = ((e.end() * sample_rate as f64).floor() as usize).min(n.saturating_sub(1));
        for (i, s) in samples.iter_mut().enumerate().take(last + 1).skip(first) {
            let t = i as f64 / sample_rate as f64;
            let tau = ((t - e.start) / e.duration).clamp(0.0, 1.0);
            let phase = two_pi * TONE_HZ * t;
            let voice = 0.6 * phase.sin() + 0.3 * (2.0 * phase).sin() + 0.1 * (3.0 * phase).sin();
            *s = amp * (std::f64::consts::PI * tau).sin() * voice;
        }
    }
    Audio { samples, sample_rate }
}

fn cos_bump(t: f64, center: f64, half_width: f64) -> f64 {
    let x = (t - center) / half_width;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    }
}

/// Reference trajectory standing in for a recorded speaker: overlapping
/// cosine bumps of each viseme pose, the initial short and the finals
/// sharing the rest of the syllable, with the last gesture lingering past
/// the end of each syllable, plus light noise.
pub fn reference_series(script: &TimedScript, table: &MappingTable, fps: f64, seed: u64) -> FrameSeries<f64> {
    struct Gesture {
        center: f64,
        half_width: f64,
        pose: BlendshapeVector<f64>,
    }
    let mut gestures = Vec::new();
    for e in script.events() {
        let Ok(seq) = syllable_to_visemes(&e.syllable, table) else {
            continue;
        };
        let n = seq.len();
        let mut bounds = vec![0.0];
        if seq.has_initial() && n >= 2 {
            bounds.push(0.25);
            for k in 1..n - 1 {
                bounds.push(0.25 + 0.75 * k as f64 / (n - 1) as f64);
            }
        } else {
            for k in 1..n {
                bounds.push(k as f64 / n as f64);
            }
        }
        bounds.push(1.0);
        for (k, id) in seq.ids().iter().enumerate() {
            let width = (bounds[k + 1] - bounds[k]) * e.duration;
            let linger = if k + 1 == n { 0.08 } else { 0.0 };
            gestures.push(Gesture {
                center: e.start + (bounds[k] + bounds[k + 1]) / 2.0 * e.duration + linger / 2.0,
                half_width: width / 2.0 + 0.06 + linger / 2.0,
                pose: viseme_pose(*id),
            });
        }
    }
    let mut rng = stream(seed, 1000);
    let noise = Normal::new(0.0, 0.004).expect("finite sigma");
    let n = (script.total_duration() * fps + 1e-9).floor() as usize + 1;
    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / fps;
            let weights: Vec<f64> = gestures.iter().map(|g| cos_bump(t, g.center, g.half_width)).collect();
            let norm = weights.iter().sum::<f64>().max(1.0);
            BlendshapeVector::from_fn(|c| {
                let v: f64 = gestures
                    .iter()
                    .zip(&weights)
                    .map(|(g, w)| w * g.pose.get(c))
                    .sum::<f64>()
                    / norm;
                (v + noise.sample(&mut rng)).clamp(0.0, 1.0)
            })
            .expect("clamped")
        })
        .collect();
    FrameSeries::new(frames, fps, 0.0).expect("valid reference")
}

/// One test sentence with its audio and reference.
#[derive(Clone, Debug)]
pub struct SyntheticSentence {
    pub id: &'static str,
    pub text: String,
    pub script: TimedScript,
    pub audio: Audio,
    pub reference: FrameSeries<f64>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub captures: Vec<(VisemeId, FrameSeries<f64>)>,
    pub sentences: Vec<SyntheticSentence>,
}

/// Captures for every viseme plus the four test sentences.
pub fn generate_corpus(seed: u64, table: &MappingTable) -> SyntheticCorpus {
    let sentences = TEST_SENTENCES
        .iter()
        .enumerate()
        .map(|(k, (id, syllables))| {
            let script = sentence_script(syllables);
            SyntheticSentence {
                id,
                text: syllables.join(" "),
                audio: script_audio(&script, table, AUDIO_SAMPLE_RATE),
                reference: reference_series(&script, table, CAPTURE_FPS, seed.wrapping_add(k as u64)),
                script,
            }
        })
        .collect();
    SyntheticCorpus {
        captures: viseme_captures(seed),
        sentences,
    }
}
