//! Capture and trajectory CSV formats.
//!
//! Both share one layout: a `time_s` column followed by blendshape columns.
//! Reading accepts any superset of the canonical channels (for example the
//! full 52-channel ARKit export) and keeps only the 27 lip/jaw channels.
//! Writing emits exactly `time_s` plus the canonical channels with fixed
//! 9-digit formatting so identical inputs give byte-identical files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::blendshape::{BlendshapeVector, FrameSeries, CHANNEL_COUNT, CHANNEL_NAMES};
use crate::scalar::Scalar;

pub const TIME_COLUMN: &str = "time_s";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("first column must be `{TIME_COLUMN}`, found `{0}`")]
    MissingTimeColumn(String),
    #[error("missing channel column `{0}`")]
    MissingColumn(&'static str),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}: column `{column}` value `{value}` is not a finite number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("row {row}: timestamp {time} does not increase (previous {previous})")]
    NonMonotoneTime { row: usize, time: f64, previous: f64 },
    #[error("need at least 2 rows to infer the frame rate, found {0}")]
    TooFewRows(usize),
    #[error("non-positive frame interval")]
    BadInterval,
}

/// Parses a capture (or trajectory) CSV into a frame series.
///
/// Values are clamped to `[0, 1]`. The frame rate is the reciprocal of the
/// median timestamp delta; the series starts at the first timestamp.
pub fn parse_capture_csv<T: Scalar>(text: &str) -> Result<FrameSeries<T>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let first = headers.get(0).unwrap_or("");
    if first != TIME_COLUMN {
        return Err(FormatError::MissingTimeColumn(first.to_string()));
    }
    for (i, h) in headers.iter().enumerate() {
        if headers.iter().skip(i + 1).any(|o| o == h) {
            return Err(FormatError::DuplicateColumn(h.to_string()));
        }
    }
    let mut columns = [0usize; CHANNEL_COUNT];
    for (slot, name) in columns.iter_mut().zip(CHANNEL_NAMES.iter()) {
        *slot = headers
            .iter()
            .position(|h| h == *name)
            .ok_or(FormatError::MissingColumn(name))?;
    }

    let width = headers.len();
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != width {
            return Err(FormatError::RowWidth {
                row,
                expected: width,
                found: record.len(),
            });
        }
        let cell = |col: usize| -> Result<f64, FormatError> {
            let raw = &record[col];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| FormatError::NotNumeric {
                    row,
                    column: headers[col].to_string(),
                    value: raw.to_string(),
                })
        };
        let time = cell(0)?;
        if let Some(&previous) = times.last() {
            if time <= previous {
                return Err(FormatError::NonMonotoneTime { row, time, previous });
            }
        }
        let mut values = [T::zero(); CHANNEL_COUNT];
        for (v, &col) in values.iter_mut().zip(columns.iter()) {
            *v = T::of(cell(col)?);
        }
        times.push(time);
        frames.push(BlendshapeVector::new(values).expect("finite values"));
    }

    if times.len() < 2 {
        return Err(FormatError::TooFewRows(times.len()));
    }
    let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.sort_by(f64::total_cmp);
    let mid = deltas.len() / 2;
    let median = if deltas.len().is_multiple_of(2) {
        0.5 * (deltas[mid - 1] + deltas[mid])
    } else {
        deltas[mid]
    };
    if median <= 0.0 {
        return Err(FormatError::BadInterval);
    }
    // timestamps carry 9 decimals; snap to the nearest mHz so a 60 FPS
    // file reads back as exactly 60
    let fps = ((1.0 / median) * 1e3).round() / 1e3;
    FrameSeries::new(frames, fps, times[0]).map_err(|_| FormatError::BadInterval)
}

/// Formats a value with the fixed 9-digit convention used by every CSV
/// this crate writes.
pub fn fmt_fixed(value: f64) -> String {
    let s = format!("{value:.9}");
    // avoid "-0.000000000"
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Writes `time_s` plus the 27 canonical channels.
pub fn write_trajectory_csv<T: Scalar>(series: &FrameSeries<T>) -> String {
    let mut out = String::with_capacity(series.len() * CHANNEL_COUNT * 12 + 512);
    out.push_str(TIME_COLUMN);
    for name in CHANNEL_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, frame) in series.frames().iter().enumerate() {
        out.push_str(&fmt_fixed(series.time_of(i)));
        for v in frame.values() {
            let _ = write!(out, ",{}", fmt_fixed(v.as_f64()));
        }
        out.push('\n');
    }
    out
}
