//! Domain types shared by every stage, plus the delimited-text table format.
//!
//! A customer table is UTF-8 comma-separated text with a header row:
//!
//! ```text
//! id,<feature columns...>,fl_label,audio_ref,churn_outcome
//! ```
//!
//! Feature cells are required. `fl_label`, `audio_ref` and `churn_outcome`
//! may be empty.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "id";
pub const FL_COLUMN: &str = "fl_label";
pub const AUDIO_COLUMN: &str = "audio_ref";
pub const CHURN_COLUMN: &str = "churn_outcome";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    Happiness,
    Neutral,
    Sadness,
    Anger,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 4] = [
        EmotionLabel::Happiness,
        EmotionLabel::Neutral,
        EmotionLabel::Sadness,
        EmotionLabel::Anger,
    ];

    /// 0 for positive emotions, 1 for negative ones.
    pub fn binary(self) -> u8 {
        match self {
            EmotionLabel::Happiness | EmotionLabel::Neutral => 0,
            EmotionLabel::Sadness | EmotionLabel::Anger => 1,
        }
    }

    pub fn is_negative(self) -> bool {
        self.binary() == 1
    }

    /// Label used when only the binary class is known.
    pub fn representative(binary: u8) -> EmotionLabel {
        if binary == 0 {
            EmotionLabel::Neutral
        } else {
            EmotionLabel::Anger
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EmotionLabel::Happiness => "Happiness",
            EmotionLabel::Neutral => "Neutral",
            EmotionLabel::Sadness => "Sadness",
            EmotionLabel::Anger => "Anger",
        };
        f.write_str(s)
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Happiness" => Ok(EmotionLabel::Happiness),
            "Neutral" => Ok(EmotionLabel::Neutral),
            "Sadness" => Ok(EmotionLabel::Sadness),
            "Anger" => Ok(EmotionLabel::Anger),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Maps a textual emotion label to its binary class.
pub fn map_emotion_to_binary(label: &str) -> Result<u8> {
    Ok(label.parse::<EmotionLabel>()?.binary())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLabel {
    Low,
    Mid,
    High,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 3] = [RiskLabel::Low, RiskLabel::Mid, RiskLabel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RiskLabel> {
        RiskLabel::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::Low => "low",
            RiskLabel::Mid => "mid",
            RiskLabel::High => "high",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "low" => Ok(RiskLabel::Low),
            "mid" => Ok(RiskLabel::Mid),
            "high" => Ok(RiskLabel::High),
            other => Err(Error::ValueError(format!("unknown risk label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrediction {
    pub label: EmotionLabel,
    pub binary: u8,
    pub confidence: f64,
}

impl EmotionPrediction {
    pub fn from_label(label: EmotionLabel, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::ValueError(format!("confidence {confidence} outside [0,1]")));
        }
        Ok(EmotionPrediction { label, binary: label.binary(), confidence })
    }
}

/// The per-customer outputs of the three unimodal predictors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityScores {
    pub fl_score: f64,
    pub churn_propensity: f64,
    pub emotion: EmotionPrediction,
}

impl ModalityScores {
    pub fn new(fl_score: f64, churn_propensity: f64, emotion: EmotionPrediction) -> Result<Self> {
        for (name, v) in [("fl_score", fl_score), ("churn_propensity", churn_propensity)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ValueError(format!("{name} {v} outside [0,1]")));
            }
        }
        Ok(ModalityScores { fl_score, churn_propensity, emotion })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub churn_outcome: Option<u8>,
}

impl CustomerRecord {
    pub fn validate(&self, width: usize) -> Result<()> {
        if self.features.len() != width {
            return Err(Error::SchemaMismatch(format!(
                "record {} has {} features, schema declares {width}",
                self.id,
                self.features.len()
            )));
        }
        if let Some(x) = self.features.iter().find(|x| !x.is_finite()) {
            return Err(Error::ValueError(format!("record {}: non-finite feature {x}", self.id)));
        }
        if let Some(fl) = self.fl_label {
            if !(0.0..=1.0).contains(&fl) {
                return Err(Error::ValueError(format!("record {}: fl_label {fl} outside [0,1]", self.id)));
            }
        }
        if let Some(c) = self.churn_outcome {
            if c > 1 {
                return Err(Error::ValueError(format!("record {}: churn_outcome {c} not in {{0,1}}", self.id)));
            }
        }
        Ok(())
    }

    /// Human-readable key/value rendering for single-record tooling.
    pub fn to_kv(&self) -> String {
        toml::to_string(self).expect("record serializes")
    }

    pub fn from_kv(text: &str, width: usize) -> Result<Self> {
        let rec: CustomerRecord =
            toml::from_str(text).map_err(|e| Error::ValueError(e.to_string()))?;
        rec.validate(width)?;
        Ok(rec)
    }
}

/// Ordered feature column names; the remaining columns are fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaSpec {
    pub feature_names: Vec<String>,
}

impl SchemaSpec {
    /// `x0, x1, ...` feature columns.
    pub fn numbered(n: usize) -> Self {
        SchemaSpec { feature_names: (0..n).map(|i| format!("x{i}")).collect() }
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = Vec::with_capacity(self.width() + 4);
        h.push(ID_COLUMN.to_string());
        h.extend(self.feature_names.iter().cloned());
        h.push(FL_COLUMN.to_string());
        h.push(AUDIO_COLUMN.to_string());
        h.push(CHURN_COLUMN.to_string());
        h
    }

    /// Infers a schema from a header row, treating every non-reserved column as a feature.
    pub fn from_header(header: &[&str]) -> Self {
        let reserved = [ID_COLUMN, FL_COLUMN, AUDIO_COLUMN, CHURN_COLUMN];
        SchemaSpec {
            feature_names: header
                .iter()
                .filter(|c| !reserved.contains(c))
                .map(|c| c.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerTable {
    pub schema: SchemaSpec,
    pub rows: Vec<CustomerRecord>,
}

impl CustomerTable {
    pub fn new(schema: SchemaSpec, rows: Vec<CustomerRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            r.validate(schema.width())?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(CustomerTable { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    /// Rows at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> CustomerTable {
        CustomerTable {
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

fn parse_f64(cell: &str, col: &str, line: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::ValueError(format!("line {line}, column {col}: not a number: {cell:?}")))
}

/// Parses a customer table, validating it against `schema`.
pub fn parse_customer_table(raw: &[u8], schema: &SchemaSpec) -> Result<CustomerTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(raw);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let expected = schema.header();
    let got: HashSet<&str> = header.iter().map(String::as_str).collect();
    let want: HashSet<&str> = expected.iter().map(String::as_str).collect();
    if got != want || header.len() != expected.len() {
        return Err(Error::SchemaMismatch(format!(
            "header {:?} does not match expected columns {:?}",
            header, expected
        )));
    }
    let pos = |name: &str| header.iter().position(|h| h == name).expect("column present");
    let id_pos = pos(ID_COLUMN);
    let fl_pos = pos(FL_COLUMN);
    let audio_pos = pos(AUDIO_COLUMN);
    let churn_pos = pos(CHURN_COLUMN);
    let feat_pos: Vec<usize> = schema.feature_names.iter().map(|n| pos(n)).collect();

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let id = rec[id_pos].trim().to_string();
        if id.is_empty() {
            return Err(Error::ValueError(format!("line {line}: empty id")));
        }
        let features = feat_pos
            .iter()
            .zip(&schema.feature_names)
            .map(|(&p, name)| parse_f64(&rec[p], name, line))
            .collect::<Result<Vec<_>>>()?;
        let fl_label = match rec[fl_pos].trim() {
            "" => None,
            s => Some(parse_f64(s, FL_COLUMN, line)?),
        };
        let audio_ref = match rec[audio_pos].trim() {
            "" => None,
            s => Some(s.to_string()),
        };
        let churn_outcome = match rec[churn_pos].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            s => {
                return Err(Error::ValueError(format!(
                    "line {line}: churn_outcome {s:?} not in {{0,1}}"
                )))
            }
        };
        rows.push(CustomerRecord { id, features, fl_label, audio_ref, churn_outcome });
    }
    CustomerTable::new(schema.clone(), rows)
}

/// Serializes a table in the format read by [`parse_customer_table`].
pub fn write_customer_table(table: &CustomerTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(table.schema.header())?;
    for r in &table.rows {
        let mut cells = Vec::with_capacity(table.schema.width() + 4);
        cells.push(r.id.clone());
        cells.extend(r.features.iter().map(|x| x.to_string()));
        cells.push(r.fl_label.map(|v| v.to_string()).unwrap_or_default());
        cells.push(r.audio_ref.clone().unwrap_or_default());
        cells.push(r.churn_outcome.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&cells)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
