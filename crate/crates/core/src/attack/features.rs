//! Error-profile feature kinds, feature sets and vector layouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tabular::{ColumnKind, TableSchema};

/// Guard for the error ratio denominator.
pub const ERROR_RATIO_EPS: f64 = 1e-8;
/// Upper clamp for the error ratio.
pub const ERROR_RATIO_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Actual,
    Prediction,
    Error,
    ErrorRatio,
    Accuracy,
}

impl FeatureKind {
    /// Layout order within a column.
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Actual,
        FeatureKind::Prediction,
        FeatureKind::Error,
        FeatureKind::ErrorRatio,
        FeatureKind::Accuracy,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FeatureKind::Actual => "actual",
            FeatureKind::Prediction => "prediction",
            FeatureKind::Error => "error",
            FeatureKind::ErrorRatio => "error_ratio",
            FeatureKind::Accuracy => "accuracy",
        }
    }

    pub fn applies_to(self, kind: ColumnKind) -> bool {
        match self {
            FeatureKind::Actual | FeatureKind::Prediction => true,
            FeatureKind::Error | FeatureKind::ErrorRatio => kind == ColumnKind::Numeric,
            FeatureKind::Accuracy => kind == ColumnKind::Categorical,
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.token() == s.trim())
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

/// Non-empty subset of [`FeatureKind`]. Written as tokens joined by `+` in
/// layout order, e.g. `actual+error+accuracy`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSet(u8);

impl FeatureSet {
    pub fn new(kinds: impl IntoIterator<Item = FeatureKind>) -> Result<Self> {
        let mask = kinds.into_iter().fold(0, |m, k| m | k.bit());
        if mask == 0 {
            return Err(Error::UnknownFeature("empty feature set".into()));
        }
        Ok(Self(mask))
    }

    pub fn all() -> Self {
        Self(0b1_1111)
    }

    /// All 31 non-empty subsets, ordered by bitmask.
    pub fn all_subsets() -> Vec<Self> {
        (1u8..32).map(Self).collect()
    }

    pub fn contains(self, kind: FeatureKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn kinds(self) -> impl Iterator<Item = FeatureKind> {
        FeatureKind::ALL.into_iter().filter(move |&k| self.contains(k))
    }

    pub fn name(self) -> String {
        self.kinds().map(FeatureKind::token).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Debug for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureSet({})", self.name())
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kinds = s
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<FeatureKind>>>()?;
        FeatureSet::new(kinds)
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub column: usize,
    pub kind: FeatureKind,
}

/// Position of every feature in a profile vector: columns in schema order,
/// kinds in [`FeatureKind::ALL`] order, only applicable pairs, key and
/// foreign-key columns omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLayout {
    pub feature_set: FeatureSet,
    pub schema: TableSchema,
    pub entries: Vec<LayoutEntry>,
}

impl ProfileLayout {
    pub fn new(schema: &TableSchema, feature_set: FeatureSet) -> Result<Self> {
        let mut entries = Vec::new();
        for column in schema.feature_columns() {
            let col_kind = schema.columns[column].kind;
            for kind in feature_set.kinds().filter(|k| k.applies_to(col_kind)) {
                entries.push(LayoutEntry { column, kind });
            }
        }
        if entries.is_empty() {
            return Err(Error::NoApplicableFeatures);
        }
        Ok(Self {
            feature_set,
            schema: schema.clone(),
            entries,
        })
    }

    pub fn width(&self) -> usize {
        self.entries.len()
    }

    /// Columns that need a predictor, in schema order.
    pub fn columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.entries.iter().map(|e| e.column).collect();
        cols.dedup();
        cols
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| format!("{}.{}", self.schema.columns[e.column].name, e.kind.token()))
            .collect()
    }

    /// For each entry of `self`, its position in `wider`.
    pub fn positions_in(&self, wider: &ProfileLayout) -> Result<Vec<usize>> {
        if self.schema != wider.schema {
            return Err(Error::LayoutMismatch);
        }
        self.entries
            .iter()
            .map(|e| {
                wider
                    .entries
                    .iter()
                    .position(|w| w == e)
                    .ok_or(Error::LayoutMismatch)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `min(|actual - predicted| / max(|actual|, eps), cap)`.
pub fn compute_error_ratio(actual: f64, predicted: f64, eps: f64, cap: f64) -> f64 {
    ((actual - predicted).abs() / actual.abs().max(eps)).min(cap)
}
