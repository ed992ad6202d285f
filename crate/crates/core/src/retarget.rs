//! Sparse linear retargeting from blendshape frames to actuator commands.
//!
//! Each actuator command is `neutral + sum_c w[c] * v[c]`, clamped to the
//! actuator's stroke limits. Several channels may drive the same actuator.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::blendshape::{BlendshapeVector, ChannelId, FrameSeries};
use crate::io::{fmt_fixed, TIME_COLUMN};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("calibration json: {0}")]
    Json(String),
    #[error("calibration has no actuators")]
    Empty,
    #[error("actuator {row} (`{id}`): {reason}")]
    Row { row: usize, id: String, reason: String },
    #[error("actuator id `{0}` appears more than once")]
    DuplicateId(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{inputs} input frames but {targets} target rows")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("target row {row} has {got} commands, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("actuator `{id}`: {reason}")]
    Solve { id: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Actuator {
    pub id: String,
    /// Sparse row of the mapping matrix.
    pub weights: Vec<(ChannelId, f64)>,
    pub min: f64,
    pub max: f64,
    pub neutral: f64,
}

impl Actuator {
    fn validate(&self, row: usize) -> Result<(), CalibrationError> {
        let err = |reason: String| {
            Err(CalibrationError::Row {
                row,
                id: self.id.clone(),
                reason,
            })
        };
        if self.id.is_empty() {
            return err("empty id".into());
        }
        if self.weights.iter().all(|(_, w)| *w == 0.0) {
            return err("needs at least one non-zero weight".into());
        }
        if let Some((c, w)) = self.weights.iter().find(|(_, w)| !w.is_finite()) {
            return err(format!("weight {w} for {c} is not finite"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.neutral.is_finite()) {
            return err("limits must be finite".into());
        }
        if !(self.min <= self.neutral && self.neutral <= self.max) {
            return err(format!(
                "limits must satisfy min <= neutral <= max (min {}, neutral {}, max {})",
                self.min, self.neutral, self.max
            ));
        }
        Ok(())
    }

    /// Unclamped weighted sum, without the neutral offset.
    pub fn raw<T: Scalar>(&self, v: &BlendshapeVector<T>) -> T {
        self.weights
            .iter()
            .fold(T::zero(), |acc, (c, w)| acc + T::of(*w) * v.get(*c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationMatrix {
    name: String,
    actuators: Vec<Actuator>,
}

impl CalibrationMatrix {
    pub fn new(name: impl Into<String>, actuators: Vec<Actuator>) -> Result<Self, CalibrationError> {
        if actuators.is_empty() {
            return Err(CalibrationError::Empty);
        }
        for (row, a) in actuators.iter().enumerate() {
            a.validate(row)?;
            if actuators[..row].iter().any(|b| b.id == a.id) {
                return Err(CalibrationError::DuplicateId(a.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            actuators,
        })
    }

    /// One actuator per canonical channel, weight 1, limits `[0, 1]`.
    pub fn identity() -> Self {
        let actuators = ChannelId::all()
            .map(|c| Actuator {
                id: c.name().to_string(),
                weights: vec![(c, 1.0)],
                min: 0.0,
                max: 1.0,
                neutral: 0.0,
            })
            .collect();
        Self::new("identity", actuators).expect("identity calibration is valid")
    }

    /// The bundled 14-actuator demo calibration.
    pub fn demo() -> Self {
        load_calibration(Self::demo_source()).expect("bundled calibration is valid")
    }

    pub fn demo_source() -> &'static str {
        include_str!("../data/calib_14dof_demo.json")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn actuators(&self) -> &[Actuator] {
        &self.actuators
    }

    pub fn len(&self) -> usize {
        self.actuators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuators.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.actuators.iter().map(|a| a.id.as_str())
    }
}

/// Parses a calibration file:
/// `{"name": ..., "actuators": [{"id", "weights": {channel: w}, "min", "max", "neutral"}]}`.
pub fn load_calibration(text: &str) -> Result<CalibrationMatrix, CalibrationError> {
    let root: Value = serde_json::from_str(text).map_err(|e| CalibrationError::Json(e.to_string()))?;
    let json_err = |m: &str| CalibrationError::Json(m.to_string());
    let obj = root
        .as_object()
        .ok_or_else(|| json_err("top level must be an object"))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("calibration")
        .to_string();
    let rows = obj
        .get("actuators")
        .and_then(Value::as_array)
        .ok_or_else(|| json_err("missing `actuators` array"))?;
    let mut actuators = Vec::with_capacity(rows.len());
    for (row, entry) in rows.iter().enumerate() {
        let fields = entry.as_object().ok_or_else(|| CalibrationError::Row {
            row,
            id: String::new(),
            reason: "entry must be an object".into(),
        })?;
        let id = fields.get("id").and_then(Value::as_str).unwrap_or("").to_string();
        let row_err = |reason: String| CalibrationError::Row {
            row,
            id: id.clone(),
            reason,
        };
        let number = |key: &str, default: Option<f64>| -> Result<f64, CalibrationError> {
            match fields.get(key) {
                Some(v) => v.as_f64().ok_or_else(|| row_err(format!("`{key}` must be a number"))),
                None => default.ok_or_else(|| row_err(format!("missing `{key}`"))),
            }
        };
        let empty = Map::new();
        let weights_obj = match fields.get("weights") {
            Some(Value::Object(m)) => m,
            Some(_) => return Err(row_err("`weights` must be an object".into())),
            None => &empty,
        };
        let mut weights = Vec::with_capacity(weights_obj.len());
        for (channel, w) in weights_obj {
            let c = ChannelId::from_name(channel).ok_or_else(|| row_err(format!("unknown channel `{channel}`")))?;
            let w = w
                .as_f64()
                .ok_or_else(|| row_err(format!("weight for `{channel}` must be a number")))?;
            weights.push((c, w));
        }
        actuators.push(Actuator {
            weights,
            min: number("min", Some(0.0))?,
            max: number("max", Some(1.0))?,
            neutral: number("neutral", Some(0.0))?,
            id,
        });
    }
    CalibrationMatrix::new(name, actuators)
}

/// Inverse of [`load_calibration`].
pub fn write_calibration(calib: &CalibrationMatrix) -> String {
    let mut root = Map::new();
    root.insert("name".into(), Value::from(calib.name.clone()));
    let rows: Vec<Value> = calib
        .actuators
        .iter()
        .map(|a| {
            let mut m = Map::new();
            m.insert("id".into(), Value::from(a.id.clone()));
            let weights: Map<String, Value> = a
                .weights
                .iter()
                .map(|(c, w)| (c.name().to_string(), Value::from(*w)))
                .collect();
            m.insert("weights".into(), Value::Object(weights));
            m.insert("min".into(), Value::from(a.min));
            m.insert("max".into(), Value::from(a.max));
            m.insert("neutral".into(), Value::from(a.neutral));
            Value::Object(m)
        })
        .collect();
    root.insert("actuators".into(), Value::Array(rows));
    let mut out = serde_json::to_string_pretty(&Value::Object(root)).expect("finite calibration");
    out.push('\n');
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActuatorFrame<T> {
    pub time: f64,
    pub commands: Vec<T>,
}

/// Clamp events per actuator.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClampStats {
    pub per_actuator: Vec<usize>,
}

impl ClampStats {
    pub fn new(actuators: usize) -> Self {
        Self {
            per_actuator: vec![0; actuators],
        }
    }

    pub fn total(&self) -> usize {
        self.per_actuator.iter().sum()
    }
}

/// Unclamped raw row products `W v`, without neutral offsets.
pub fn raw_commands<T: Scalar>(v: &BlendshapeVector<T>, calib: &CalibrationMatrix) -> Vec<T> {
    calib.actuators.iter().map(|a| a.raw(v)).collect()
}

/// Commands for one frame; records every clamp in `stats`.
pub fn retarget_frame<T: Scalar>(
    v: &BlendshapeVector<T>,
    calib: &CalibrationMatrix,
    time: f64,
    stats: &mut ClampStats,
) -> ActuatorFrame<T> {
    if stats.per_actuator.len() != calib.len() {
        *stats = ClampStats::new(calib.len());
    }
    let commands = calib
        .actuators
        .iter()
        .zip(stats.per_actuator.iter_mut())
        .map(|(a, count)| {
            let cmd = T::of(a.neutral) + a.raw(v);
            let (lo, hi) = (T::of(a.min), T::of(a.max));
            if cmd < lo {
                *count += 1;
                lo
            } else if cmd > hi {
                *count += 1;
                hi
            } else {
                cmd
            }
        })
        .collect();
    ActuatorFrame { time, commands }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetargetResult<T> {
    pub frames: Vec<ActuatorFrame<T>>,
    pub stats: ClampStats,
}

pub fn retarget_series<T: Scalar>(series: &FrameSeries<T>, calib: &CalibrationMatrix) -> RetargetResult<T> {
    let mut stats = ClampStats::new(calib.len());
    let frames = series
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| retarget_frame(f, calib, series.time_of(i), &mut stats))
        .collect();
    RetargetResult { frames, stats }
}

/// CSV with a time column followed by one column per actuator.
pub fn write_actuator_csv<T: Scalar>(frames: &[ActuatorFrame<T>], calib: &CalibrationMatrix) -> String {
    let mut out = String::new();
    out.push_str(TIME_COLUMN);
    for id in calib.ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for f in frames {
        out.push_str(&fmt_fixed(f.time));
        for c in &f.commands {
            let _ = write!(out, ",{}", fmt_fixed(c.as_f64()));
        }
        out.push('\n');
    }
    out
}

/// Refits every actuator row by ordinary least squares on paired
/// recordings, keeping each row's channel support and neutral offset from
/// `template`. Solves `min ||X w - (y - neutral)||` per actuator.
pub fn fit_calibration(
    template: &CalibrationMatrix,
    inputs: &[BlendshapeVector<f64>],
    targets: &[Vec<f64>],
) -> Result<CalibrationMatrix, FitError> {
    if inputs.len() != targets.len() {
        return Err(FitError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    if let Some((row, t)) = targets.iter().enumerate().find(|(_, t)| t.len() != template.len()) {
        return Err(FitError::RowWidth {
            row,
            got: t.len(),
            expected: template.len(),
        });
    }
    let mut actuators = Vec::with_capacity(template.len());
    for (k, a) in template.actuators.iter().enumerate() {
        let support: Vec<ChannelId> = a.weights.iter().map(|(c, _)| *c).collect();
        if inputs.len() < support.len() {
            return Err(FitError::Solve {
                id: a.id.clone(),
                reason: format!("{} frames cannot determine {} weights", inputs.len(), support.len()),
            });
        }
        let x = DMatrix::from_fn(inputs.len(), support.len(), |r, c| inputs[r].get(support[c]));
        let y = DVector::from_fn(inputs.len(), |r, _| targets[r][k] - a.neutral);
        let w = x.svd(true, true).solve(&y, 1e-12).map_err(|reason| FitError::Solve {
            id: a.id.clone(),
            reason: reason.to_string(),
        })?;
        actuators.push(Actuator {
            weights: support.iter().copied().zip(w.iter().copied()).collect(),
            ..a.clone()
        });
    }
    CalibrationMatrix::new(template.name.clone(), actuators).map_err(|e| FitError::Solve {
        id: String::new(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weights: Vec<(ChannelId, f64)>, min: f64, max: f64, neutral: f64) -> CalibrationMatrix {
        CalibrationMatrix::new(
            "t",
            vec![Actuator {
                id: "a".into(),
                weights,
                min,
                max,
                neutral,
            }],
        )
        .unwrap()
    }

    fn vector(pairs: &[(ChannelId, f64)]) -> BlendshapeVector<f64> {
        BlendshapeVector::from_fn(|c| pairs.iter().find(|(p, _)| *p == c).map_or(0.0, |(_, v)| *v)).unwrap()
    }

    #[test]
    fn demo_has_fourteen_actuators() {
        let demo = CalibrationMatrix::demo();
        assert_eq!(demo.len(), 14);
        assert_eq!(demo.name(), "calib_14dof_demo");
        let back = load_calibration(&write_calibration(&demo)).unwrap();
        assert_eq!(back, demo);
    }

    #[test]
    fn load_errors_identify_rows() {
        let text = r#"{"actuators":[{"id":"ok","weights":{"jawOpen":1}},{"id":"eye","weights":{"eyeBlinkLeft":1}}]}"#;
        match load_calibration(text) {
            Err(CalibrationError::Row { row: 1, id, reason }) => {
                assert_eq!(id, "eye");
                assert!(reason.contains("eyeBlinkLeft"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"actuators":[{"id":"x","weights":{"jawOpen":1},"min":1,"max":0,"neutral":0.5}]}"#;
        assert!(matches!(
            load_calibration(text),
            Err(CalibrationError::Row { row: 0, .. })
        ));
        let text = r#"{"actuators":[{"id":"x","weights":{}}]}"#;
        assert!(matches!(
            load_calibration(text),
            Err(CalibrationError::Row { row: 0, .. })
        ));
        assert_eq!(load_calibration(r#"{"actuators":[]}"#), Err(CalibrationError::Empty));
        let dup = r#"{"actuators":[{"id":"x","weights":{"jawOpen":1}},{"id":"x","weights":{"jawLeft":1}}]}"#;
        assert!(matches!(load_calibration(dup), Err(CalibrationError::DuplicateId(_))));
    }

    #[test]
    fn passthrough_multiplex_and_clamp() {
        let mut stats = ClampStats::default();
        let jaw = single(vec![(ChannelId::JAW_OPEN, 1.0)], 0.0, 1.0, 0.0);
        let f = retarget_frame(&vector(&[(ChannelId::JAW_OPEN, 0.7)]), &jaw, 0.0, &mut stats);
        assert_eq!(f.commands, vec![0.7]);

        let corner = single(
            vec![(ChannelId::MOUTH_SMILE_LEFT, 0.5), (ChannelId::MOUTH_STRETCH_LEFT, 0.5)],
            0.0,
            1.0,
            0.0,
        );
        let v = vector(&[(ChannelId::MOUTH_SMILE_LEFT, 0.4), (ChannelId::MOUTH_STRETCH_LEFT, 0.8)]);
        assert!((raw_commands(&v, &corner)[0] - 0.6).abs() < 1e-15);

        let strong = single(vec![(ChannelId::JAW_OPEN, 1.7)], 0.0, 1.0, 0.0);
        let mut stats = ClampStats::default();
        let f = retarget_frame(&vector(&[(ChannelId::JAW_OPEN, 1.0)]), &strong, 0.0, &mut stats);
        assert_eq!(f.commands, vec![1.0]);
        assert_eq!(stats.total(), 1);
    }

    #[test]
    fn series_neutral_and_identity() {
        let demo = CalibrationMatrix::demo();
        let zeros = FrameSeries::new(vec![BlendshapeVector::<f64>::zeros(); 5], 60.0, 0.0).unwrap();
        let out = retarget_series(&zeros, &demo);
        for f in &out.frames {
            let neutral: Vec<f64> = demo.actuators().iter().map(|a| a.neutral).collect();
            assert_eq!(f.commands, neutral);
        }
        assert_eq!(out.stats.total(), 0);

        let v = BlendshapeVector::from_fn(|c| c.index() as f64 / 30.0).unwrap();
        let s = FrameSeries::new(vec![v; 3], 30.0, 1.0).unwrap();
        let out = retarget_series(&s, &CalibrationMatrix::identity());
        assert_eq!(out.frames[0].commands, v.values().to_vec());
        assert!((out.frames[2].time - (1.0 + 2.0 / 30.0)).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let calib = single(vec![(ChannelId::JAW_OPEN, 1.0)], 0.0, 1.0, 0.0);
        let frames = vec![ActuatorFrame {
            time: 0.5,
            commands: vec![0.25],
        }];
        assert_eq!(
            write_actuator_csv(&frames, &calib),
            "time_s,a\n0.500000000,0.250000000\n"
        );
    }

    #[test]
    fn least_squares_recovers_weights() {
        let template = CalibrationMatrix::demo();
        let truth: Vec<Actuator> = template
            .actuators()
            .iter()
            .enumerate()
            .map(|(k, a)| Actuator {
                weights: a
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(j, (c, _))| (*c, 0.1 + 0.05 * (k + j) as f64))
                    .collect(),
                ..a.clone()
            })
            .collect();
        let truth = CalibrationMatrix::new("truth", truth).unwrap();
        let inputs: Vec<BlendshapeVector<f64>> = (0..60)
            .map(|n| BlendshapeVector::from_fn(|c| (((n * 31 + c.index() * 17) % 97) as f64) / 97.0).unwrap())
            .collect();
        let targets: Vec<Vec<f64>> = inputs
            .iter()
            .map(|v| truth.actuators().iter().map(|a| a.neutral + a.raw(v)).collect())
            .collect();
        let fitted = fit_calibration(&template, &inputs, &targets).unwrap();
        for (f, t) in fitted.actuators().iter().zip(truth.actuators()) {
            for ((_, wf), (_, wt)) in f.weights.iter().zip(&t.weights) {
                assert!((wf - wt).abs() < 1e-9);
            }
        }
        assert!(matches!(
            fit_calibration(&template, &inputs[..2], &targets),
            Err(FitError::LengthMismatch { .. })
        ));
    }
}
