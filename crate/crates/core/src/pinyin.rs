//! Toneless Pinyin parsing and the syllable-to-viseme mapping table.
//!
//! A syllable splits into an optional initial (longest match over the 23
//! onset symbols, `zh`/`ch`/`sh` before single letters) and a final. The
//! final is looked up after spelling normalization: `v` is `ü`, a written
//! `u` after `j`, `q`, `x`, `y` is `ü`, and a bare `ue` is `üe`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The 14 dynamic viseme classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VisemeId {
    V1Bpm,
    V2F,
    V3D,
    V4Gkh,
    V5Jqx,
    V6Zcs,
    V7Zh,
    V8A,
    V9O,
    V10E,
    V11I,
    V12U,
    V13V,
    V14Ai,
}

impl VisemeId {
    pub const ALL: [VisemeId; 14] = [
        VisemeId::V1Bpm,
        VisemeId::V2F,
        VisemeId::V3D,
        VisemeId::V4Gkh,
        VisemeId::V5Jqx,
        VisemeId::V6Zcs,
        VisemeId::V7Zh,
        VisemeId::V8A,
        VisemeId::V9O,
        VisemeId::V10E,
        VisemeId::V11I,
        VisemeId::V12U,
        VisemeId::V13V,
        VisemeId::V14Ai,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VisemeId::V1Bpm => "V1_BPM",
            VisemeId::V2F => "V2_F",
            VisemeId::V3D => "V3_D",
            VisemeId::V4Gkh => "V4_GKH",
            VisemeId::V5Jqx => "V5_JQX",
            VisemeId::V6Zcs => "V6_ZCS",
            VisemeId::V7Zh => "V7_ZH",
            VisemeId::V8A => "V8_A",
            VisemeId::V9O => "V9_O",
            VisemeId::V10E => "V10_E",
            VisemeId::V11I => "V11_I",
            VisemeId::V12U => "V12_U",
            VisemeId::V13V => "V13_V",
            VisemeId::V14Ai => "V14_AI",
        }
    }

    /// Zero-based position in [`VisemeId::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for VisemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown viseme id `{0}`")]
pub struct UnknownViseme(pub String);

impl FromStr for VisemeId {
    type Err = UnknownViseme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VisemeId::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| UnknownViseme(s.to_string()))
    }
}

impl Serialize for VisemeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for VisemeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Onset symbols, glides included. Two-letter entries come first so a
/// front-to-back scan is a longest match.
pub const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r", "z", "c", "s", "y",
    "w",
];

/// Finals in normalized spelling.
pub const FINALS: [&str; 36] = [
    "a", "o", "e", "i", "u", "ü", "er", "ai", "ei", "ui", "ao", "ou", "iu", "an", "en", "in", "un", "ün", "ang", "eng",
    "ing", "ong", "ia", "ie", "iao", "ian", "iang", "iong", "ua", "uo", "uai", "uan", "uang", "ueng", "üe", "üan",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty syllable")]
    Empty,
    #[error("invalid character `{ch}` at position {position} in `{syllable}`")]
    BadChar {
        syllable: String,
        position: usize,
        ch: char,
    },
    #[error("`{syllable}` has no final after initial `{initial}` (position {position})")]
    MissingFinal {
        syllable: String,
        initial: &'static str,
        position: usize,
    },
    #[error("unknown final `{final_}` at position {position} in `{syllable}`")]
    UnknownFinal {
        syllable: String,
        final_: String,
        position: usize,
    },
}

/// A syllable split into onset and rhyme, spelled as written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyllableParts {
    pub initial: Option<&'static str>,
    pub final_: String,
}

impl SyllableParts {
    /// Final in table spelling (`ü` restored where the orthography hides it).
    pub fn normalized_final(&self) -> String {
        normalize_final(self.initial, &self.final_)
    }

    pub fn joined(&self) -> String {
        format!("{}{}", self.initial.unwrap_or(""), self.final_)
    }
}

fn normalize_final(initial: Option<&str>, written: &str) -> String {
    let mut f = written.replace('v', "ü");
    if matches!(initial, Some("j" | "q" | "x" | "y")) && f.starts_with('u') {
        f.replace_range(0..1, "ü");
    }
    if f == "ue" {
        f = "üe".to_string();
    }
    f
}

/// Splits a lowercase toneless syllable into initial and final.
pub fn split_syllable(syllable: &str) -> Result<SyllableParts, ParseError> {
    if syllable.is_empty() {
        return Err(ParseError::Empty);
    }
    if let Some((position, ch)) = syllable
        .chars()
        .enumerate()
        .find(|(_, c)| !(c.is_ascii_lowercase() || *c == 'ü'))
    {
        return Err(ParseError::BadChar {
            syllable: syllable.to_string(),
            position,
            ch,
        });
    }
    let initial = INITIALS.into_iter().find(|i| syllable.starts_with(i));
    let rest = &syllable[initial.map_or(0, str::len)..];
    let position = initial.map_or(0, str::len);
    if rest.is_empty() {
        return Err(ParseError::MissingFinal {
            syllable: syllable.to_string(),
            initial: initial.unwrap_or(""),
            position,
        });
    }
    let normalized = normalize_final(initial, rest);
    if !FINALS.contains(&normalized.as_str()) {
        return Err(ParseError::UnknownFinal {
            syllable: syllable.to_string(),
            final_: rest.to_string(),
            position,
        });
    }
    Ok(SyllableParts {
        initial,
        final_: rest.to_string(),
    })
}

/// Lowercases and trims user-supplied syllable text.
pub fn normalize_syllable(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Ordered visemes articulated by one syllable (1 to 3 entries).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisemeSequence {
    ids: Vec<VisemeId>,
    has_initial: bool,
}

impl VisemeSequence {
    pub fn ids(&self) -> &[VisemeId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whether the first entry comes from the syllable's initial.
    pub fn has_initial(&self) -> bool {
        self.has_initial
    }
}

impl fmt::Display for VisemeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.ids.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(id.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("final `{0}` is not in the mapping table")]
    UnmappedFinal(String),
    #[error("initial `{0}` is not in the mapping table")]
    UnmappedInitial(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("mapping table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("mapping table does not cover initial `{0}`")]
    UncoveredInitial(&'static str),
    #[error("mapping table does not cover final `{0}`")]
    UncoveredFinal(&'static str),
    #[error("mapping table entry `{key}`: {source}")]
    UnknownViseme { key: String, source: UnknownViseme },
    #[error("mapping table has unknown initial `{0}`")]
    UnknownInitial(String),
    #[error("mapping table has unknown final `{0}`")]
    UnknownFinal(String),
    #[error("final `{key}` maps to {len} visemes, expected 1 or 2")]
    BadFinalLength { key: String, len: usize },
    #[error("final `{0}` listed twice after spelling normalization")]
    DuplicateFinal(String),
}

#[derive(Deserialize)]
struct RawTable {
    #[serde(default)]
    name: Option<String>,
    initials: BTreeMap<String, String>,
    finals: BTreeMap<String, Vec<String>>,
}

/// Data-driven initial/final to viseme table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingTable {
    name: String,
    initials: BTreeMap<&'static str, VisemeId>,
    finals: BTreeMap<&'static str, Vec<VisemeId>>,
}

const DEFAULT_TABLE: &str = include_str!("../data/table_v1.json");

impl MappingTable {
    /// The shipped `table_v1`.
    pub fn default_table() -> Self {
        load_mapping_table(DEFAULT_TABLE).expect("shipped table is valid")
    }

    /// Source text of the shipped table.
    pub fn default_source() -> &'static str {
        DEFAULT_TABLE
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn initial(&self, initial: &str) -> Option<VisemeId> {
        self.initials.get(initial).copied()
    }

    /// Lookup by final, accepting written or normalized spelling.
    pub fn final_visemes(&self, final_: &str) -> Option<&[VisemeId]> {
        let key = normalize_final(None, final_);
        self.finals.get(key.as_str()).map(Vec::as_slice)
    }
}

/// Parses and validates a mapping table.
pub fn load_mapping_table(text: &str) -> Result<MappingTable, TableError> {
    let raw: RawTable = serde_json::from_str(text)?;
    let parse = |key: &str, v: &str| {
        v.parse::<VisemeId>().map_err(|source| TableError::UnknownViseme {
            key: key.to_string(),
            source,
        })
    };

    let mut initials = BTreeMap::new();
    for (key, value) in &raw.initials {
        let sym = INITIALS
            .into_iter()
            .find(|i| i == key)
            .ok_or_else(|| TableError::UnknownInitial(key.clone()))?;
        initials.insert(sym, parse(key, value)?);
    }
    if let Some(missing) = INITIALS.into_iter().find(|i| !initials.contains_key(i)) {
        return Err(TableError::UncoveredInitial(missing));
    }

    let mut finals = BTreeMap::new();
    for (key, values) in &raw.finals {
        let norm = normalize_final(None, key);
        let sym = FINALS
            .into_iter()
            .find(|f| *f == norm)
            .ok_or_else(|| TableError::UnknownFinal(key.clone()))?;
        if !(1..=2).contains(&values.len()) {
            return Err(TableError::BadFinalLength {
                key: key.clone(),
                len: values.len(),
            });
        }
        let ids = values.iter().map(|v| parse(key, v)).collect::<Result<Vec<_>, _>>()?;
        if finals.insert(sym, ids).is_some() {
            return Err(TableError::DuplicateFinal(sym.to_string()));
        }
    }
    if let Some(missing) = FINALS.into_iter().find(|f| !finals.contains_key(f)) {
        return Err(TableError::UncoveredFinal(missing));
    }

    Ok(MappingTable {
        name: raw.name.unwrap_or_else(|| "custom".to_string()),
        initials,
        finals,
    })
}

/// Concatenates the initial's viseme (if any) with the final's 1 or 2
/// visemes.
pub fn map_to_visemes(parts: &SyllableParts, table: &MappingTable) -> Result<VisemeSequence, MapError> {
    let mut ids = Vec::with_capacity(3);
    if let Some(initial) = parts.initial {
        ids.push(
            table
                .initial(initial)
                .ok_or_else(|| MapError::UnmappedInitial(initial.to_string()))?,
        );
    }
    let key = parts.normalized_final();
    let final_ids = table.finals.get(key.as_str()).ok_or(MapError::UnmappedFinal(key))?;
    ids.extend_from_slice(final_ids);
    Ok(VisemeSequence {
        ids,
        has_initial: parts.initial.is_some(),
    })
}

/// `split_syllable` followed by `map_to_visemes`.
pub fn syllable_to_visemes(syllable: &str, table: &MappingTable) -> Result<VisemeSequence, MapError> {
    let parts = split_syllable(syllable)?;
    map_to_visemes(&parts, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use VisemeId::*;

    fn seq(s: &str) -> Vec<VisemeId> {
        syllable_to_visemes(s, &MappingTable::default_table())
            .unwrap()
            .ids()
            .to_vec()
    }

    #[test]
    fn viseme_ids_round_trip_names() {
        assert_eq!(VisemeId::ALL.len(), 14);
        for v in VisemeId::ALL {
            assert_eq!(v.as_str().parse::<VisemeId>().unwrap(), v);
        }
        assert!("V15_X".parse::<VisemeId>().is_err());
    }

    #[test]
    fn splits_longest_initial() {
        let p = split_syllable("zhang").unwrap();
        assert_eq!(p.initial, Some("zh"));
        assert_eq!(p.final_, "ang");
        let p = split_syllable("ba").unwrap();
        assert_eq!((p.initial, p.final_.as_str()), (Some("b"), "a"));
        let p = split_syllable("a").unwrap();
        assert_eq!((p.initial, p.final_.as_str()), (None, "a"));
        let p = split_syllable("er").unwrap();
        assert_eq!((p.initial, p.final_.as_str()), (None, "er"));
        let p = split_syllable("zuo").unwrap();
        assert_eq!((p.initial, p.final_.as_str()), (Some("z"), "uo"));
    }

    #[test]
    fn split_errors_carry_position() {
        assert_eq!(split_syllable(""), Err(ParseError::Empty));
        assert!(matches!(
            split_syllable("ba3"),
            Err(ParseError::BadChar {
                position: 2,
                ch: '3',
                ..
            })
        ));
        assert!(matches!(
            split_syllable("f"),
            Err(ParseError::MissingFinal {
                initial: "f",
                position: 1,
                ..
            })
        ));
        assert!(matches!(
            split_syllable("bx"),
            Err(ParseError::UnknownFinal { position: 1, .. })
        ));
        assert!(matches!(
            split_syllable("Ba"),
            Err(ParseError::BadChar { position: 0, .. })
        ));
    }

    #[test]
    fn maps_worked_examples() {
        assert_eq!(seq("ba"), vec![V1Bpm, V8A]);
        assert_eq!(seq("zuo"), vec![V6Zcs, V12U, V9O]);
        assert_eq!(seq("fu"), vec![V2F, V12U]);
        assert_eq!(seq("ai"), vec![V14Ai]);
        assert_eq!(seq("shi"), vec![V7Zh, V11I]);
        assert_eq!(seq("er"), vec![V7Zh]);
    }

    #[test]
    fn u_umlaut_spellings_agree() {
        assert_eq!(seq("lü"), vec![V3D, V13V]);
        assert_eq!(seq("lv"), vec![V3D, V13V]);
        assert_eq!(seq("ju"), vec![V5Jqx, V13V]);
        assert_eq!(seq("yue"), vec![V5Jqx, V13V]);
        assert_eq!(seq("lue"), vec![V3D, V13V]);
        assert_eq!(seq("lu"), vec![V3D, V12U]);
        assert_eq!(seq("xuan"), vec![V5Jqx, V13V, V8A]);
    }

    #[test]
    fn default_table_queries() {
        let t = MappingTable::default_table();
        assert_eq!(t.name(), "table_v1");
        assert_eq!(t.initial("m"), Some(V1Bpm));
        assert_eq!(t.initial("y"), Some(V5Jqx));
        assert_eq!(t.initial("w"), Some(V12U));
        assert_eq!(t.final_visemes("uo"), Some(&[V12U, V9O][..]));
        assert_eq!(t.final_visemes("an"), Some(&[V8A][..]));
        assert_eq!(t.final_visemes("v"), Some(&[V13V][..]));
    }

    #[test]
    fn table_missing_final_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(MappingTable::default_source()).unwrap();
        v["finals"].as_object_mut().unwrap().remove("eng");
        let err = load_mapping_table(&v.to_string()).unwrap_err();
        assert!(matches!(err, TableError::UncoveredFinal("eng")));
        assert!(err.to_string().contains("eng"));
    }

    #[test]
    fn table_rejects_bad_entries() {
        let mut v: serde_json::Value = serde_json::from_str(MappingTable::default_source()).unwrap();
        v["initials"]["b"] = "V99".into();
        assert!(matches!(
            load_mapping_table(&v.to_string()),
            Err(TableError::UnknownViseme { .. })
        ));
        let mut v: serde_json::Value = serde_json::from_str(MappingTable::default_source()).unwrap();
        v["initials"].as_object_mut().unwrap().remove("sh");
        assert!(matches!(
            load_mapping_table(&v.to_string()),
            Err(TableError::UncoveredInitial("sh"))
        ));
        let mut v: serde_json::Value = serde_json::from_str(MappingTable::default_source()).unwrap();
        v["finals"]["a"] = serde_json::json!(["V8_A", "V9_O", "V8_A"]);
        assert!(matches!(
            load_mapping_table(&v.to_string()),
            Err(TableError::BadFinalLength { len: 3, .. })
        ));
    }

    #[test]
    fn an_conflict_is_overridable() {
        let mut v: serde_json::Value = serde_json::from_str(MappingTable::default_source()).unwrap();
        v["finals"]["an"] = serde_json::json!(["V14_AI"]);
        let t = load_mapping_table(&v.to_string()).unwrap();
        assert_eq!(syllable_to_visemes("can", &t).unwrap().ids(), &[V6Zcs, V14Ai]);
    }

    #[test]
    fn display_joins_with_spaces() {
        let s = syllable_to_visemes("zuo", &MappingTable::default_table()).unwrap();
        assert_eq!(s.to_string(), "V6_ZCS V12_U V9_O");
        assert!(s.has_initial());
        assert!(!syllable_to_visemes("ao", &MappingTable::default_table())
            .unwrap()
            .has_initial());
    }
}
