//! Viseme library container and its JSON file format.
//!
//! ```json
//! {
//!   "version": 1,
//!   "sample_count": 60,
//!   "channels": ["jawForward", ...],
//!   "visemes": { "V1_BPM": [[...27 values...], ...], ... },
//!   "metadata": { ... }
//! }
//! ```
//!
//! Channels may appear in any order on load; values are re-ordered into the
//! canonical layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blendshape::{BlendshapeVector, ChannelId, VisemeTrajectory, CHANNEL_COUNT, CHANNEL_NAMES};
use crate::pinyin::VisemeId;
use crate::scalar::Scalar;

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

/// Default number of samples per normalized viseme trajectory.
pub const DEFAULT_SAMPLE_COUNT: usize = 60;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("library json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported library format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("library channel list is missing `{0}`")]
    MissingChannel(&'static str),
    #[error("library channel list has unknown or duplicate channel `{0}`")]
    UnknownChannel(String),
    #[error("viseme {viseme} has {found} samples, library sample_count is {expected}")]
    SampleCountMismatch {
        viseme: String,
        expected: usize,
        found: usize,
    },
    #[error("viseme {viseme} sample {sample} has {found} values, expected {expected}")]
    RowWidth {
        viseme: String,
        sample: usize,
        expected: usize,
        found: usize,
    },
    #[error("viseme {viseme} sample {sample}: value {value} outside [0, 1]")]
    OutOfRange { viseme: String, sample: usize, value: f64 },
    #[error("unknown viseme `{0}` in library")]
    UnknownViseme(String),
    #[error("sample_count must be at least 2, got {0}")]
    BadSampleCount(usize),
}

/// Trajectories for (some or all of) the 14 visemes, on one shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VisemeLibrary<T> {
    sample_count: usize,
    trajectories: BTreeMap<VisemeId, VisemeTrajectory<T>>,
    metadata: BTreeMap<String, String>,
}

impl<T: Scalar> VisemeLibrary<T> {
    pub fn new(sample_count: usize) -> Result<Self, LibraryError> {
        if sample_count < 2 {
            return Err(LibraryError::BadSampleCount(sample_count));
        }
        Ok(Self {
            sample_count,
            trajectories: BTreeMap::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Adds or replaces a trajectory; its length must match the library grid.
    pub fn insert(&mut self, id: VisemeId, trajectory: VisemeTrajectory<T>) -> Result<(), LibraryError> {
        if trajectory.sample_count() != self.sample_count {
            return Err(LibraryError::SampleCountMismatch {
                viseme: id.to_string(),
                expected: self.sample_count,
                found: trajectory.sample_count(),
            });
        }
        self.trajectories.insert(id, trajectory);
        Ok(())
    }

    pub fn get(&self, id: VisemeId) -> Option<&VisemeTrajectory<T>> {
        self.trajectories.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = VisemeId> + '_ {
        self.trajectories.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn cast<U: Scalar>(&self) -> VisemeLibrary<U> {
        VisemeLibrary {
            sample_count: self.sample_count,
            trajectories: self.trajectories.iter().map(|(k, v)| (*k, v.cast())).collect(),
            metadata: self.metadata.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    version: u32,
    sample_count: usize,
    channels: Vec<String>,
    visemes: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

/// Serializes to pretty JSON. Output is deterministic: visemes in
/// enumeration order (the map preserves insertion order), shortest
/// round-trip float formatting.
pub fn serialize_library<T: Scalar>(library: &VisemeLibrary<T>) -> String {
    let mut visemes = serde_json::Map::new();
    for (id, traj) in &library.trajectories {
        let rows: Vec<Vec<f64>> = traj
            .samples()
            .iter()
            .map(|s| s.values().iter().map(|v| v.as_f64()).collect())
            .collect();
        visemes.insert(id.to_string(), serde_json::to_value(rows).expect("finite floats"));
    }
    let mut doc = serde_json::Map::new();
    doc.insert("version".into(), LIBRARY_FORMAT_VERSION.into());
    doc.insert("sample_count".into(), library.sample_count.into());
    doc.insert(
        "channels".into(),
        serde_json::Value::Array(CHANNEL_NAMES.iter().map(|c| (*c).into()).collect()),
    );
    doc.insert("visemes".into(), serde_json::Value::Object(visemes));
    if !library.metadata.is_empty() {
        doc.insert(
            "metadata".into(),
            serde_json::to_value(&library.metadata).expect("string map"),
        );
    }
    let mut out = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("valid json");
    out.push('\n');
    out
}

pub fn deserialize_library<T: Scalar>(text: &str) -> Result<VisemeLibrary<T>, LibraryError> {
    let file: LibraryFile = serde_json::from_str(text)?;
    if file.version != LIBRARY_FORMAT_VERSION {
        return Err(LibraryError::VersionMismatch {
            found: file.version,
            expected: LIBRARY_FORMAT_VERSION,
        });
    }
    // position of each canonical channel in the file's column order
    let mut column_of = [usize::MAX; CHANNEL_COUNT];
    for (col, name) in file.channels.iter().enumerate() {
        let ch = ChannelId::from_name(name).ok_or_else(|| LibraryError::UnknownChannel(name.clone()))?;
        if column_of[ch.index()] != usize::MAX {
            return Err(LibraryError::UnknownChannel(name.clone()));
        }
        column_of[ch.index()] = col;
    }
    if let Some(missing) = column_of.iter().position(|&c| c == usize::MAX) {
        return Err(LibraryError::MissingChannel(CHANNEL_NAMES[missing]));
    }

    let mut library = VisemeLibrary::new(file.sample_count)?;
    library.metadata = file.metadata;
    for (name, rows) in file.visemes {
        let id: VisemeId = name.parse().map_err(|_| LibraryError::UnknownViseme(name.clone()))?;
        if rows.len() != file.sample_count {
            return Err(LibraryError::SampleCountMismatch {
                viseme: name,
                expected: file.sample_count,
                found: rows.len(),
            });
        }
        let mut samples = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != CHANNEL_COUNT {
                return Err(LibraryError::RowWidth {
                    viseme: name,
                    sample: i,
                    expected: CHANNEL_COUNT,
                    found: row.len(),
                });
            }
            let mut values = [T::zero(); CHANNEL_COUNT];
            for (ch, v) in values.iter_mut().enumerate() {
                let raw = row[column_of[ch]];
                if !(0.0..=1.0).contains(&raw) {
                    return Err(LibraryError::OutOfRange {
                        viseme: name,
                        sample: i,
                        value: raw,
                    });
                }
                *v = T::of(raw);
            }
            samples.push(BlendshapeVector::new(values).expect("validated range"));
        }
        let traj = VisemeTrajectory::new(samples).expect("sample_count >= 2");
        library.insert(id, traj)?;
    }
    Ok(library)
}
