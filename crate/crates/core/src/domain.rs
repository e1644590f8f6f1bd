//! Shared vocabulary: running styles, sensor placements, recordings and datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Sampling rate of every conformant recording.
pub const SAMPLING_RATE_HZ: u32 = 500;

/// Acceleration unit used throughout the project (1 g = 9.81 m/s²).
pub const ACCEL_UNIT: &str = "g";

pub const N_STYLES: usize = 8;
pub const N_SENSORS: usize = 5;

/// The eight running styles, in their fixed canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleLabel {
    EggBeater,
    Bouncing,
    HeelStrike,
    ToeStrike,
    LongStride,
    ShortStride,
    WideStance,
    NarrowStance,
}

impl StyleLabel {
    pub const ALL: [StyleLabel; N_STYLES] = [
        StyleLabel::EggBeater,
        StyleLabel::Bouncing,
        StyleLabel::HeelStrike,
        StyleLabel::ToeStrike,
        StyleLabel::LongStride,
        StyleLabel::ShortStride,
        StyleLabel::WideStance,
        StyleLabel::NarrowStance,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleLabel::EggBeater => "egg_beater",
            StyleLabel::Bouncing => "bouncing",
            StyleLabel::HeelStrike => "heel_strike",
            StyleLabel::ToeStrike => "toe_strike",
            StyleLabel::LongStride => "long_stride",
            StyleLabel::ShortStride => "short_stride",
            StyleLabel::WideStance => "wide_stance",
            StyleLabel::NarrowStance => "narrow_stance",
        }
    }
}

/// Integer index (0–7) of a style.
pub fn label_index(label: StyleLabel) -> usize {
    label.index()
}

/// Inverse of [`label_index`].
pub fn index_label(index: usize) -> Option<StyleLabel> {
    StyleLabel::from_index(index)
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StyleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown style {s:?}")))
    }
}

/// Body side of a sensor, used to couple foot-strike transients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Centre,
}

/// Sensor placements; `Com` is the lower-back centre-of-mass unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorLocation {
    Com,
    #[serde(rename = "lfoot")]
    LFoot,
    #[serde(rename = "lshank")]
    LShank,
    #[serde(rename = "rfoot")]
    RFoot,
    #[serde(rename = "rshank")]
    RShank,
}

impl SensorLocation {
    pub const ALL: [SensorLocation; N_SENSORS] = [
        SensorLocation::Com,
        SensorLocation::LFoot,
        SensorLocation::LShank,
        SensorLocation::RFoot,
        SensorLocation::RShank,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorLocation::Com => "com",
            SensorLocation::LFoot => "lfoot",
            SensorLocation::LShank => "lshank",
            SensorLocation::RFoot => "rfoot",
            SensorLocation::RShank => "rshank",
        }
    }

    pub fn side(self) -> Side {
        match self {
            SensorLocation::Com => Side::Centre,
            SensorLocation::LFoot | SensorLocation::LShank => Side::Left,
            SensorLocation::RFoot | SensorLocation::RShank => Side::Right,
        }
    }

    pub fn is_foot(self) -> bool {
        matches!(self, SensorLocation::LFoot | SensorLocation::RFoot)
    }
}

impl fmt::Display for SensorLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown sensor {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn new(id: impl Into<String>) -> Self {
        SubjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifies one recording: a (subject, style, sensor) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordingKey {
    pub subject: SubjectId,
    pub style: StyleLabel,
    pub sensor: SensorLocation,
}

impl fmt::Display for RecordingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.style, self.sensor)
    }
}

/// One sensor's tri-axial acceleration for one (subject, style) session.
///
/// `samples` is `n × 3` with columns x = fore-aft, y = lateral, z = vertical, in g.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuRecording {
    pub key: RecordingKey,
    pub fs: u32,
    pub samples: Array2<f64>,
}

impl ImuRecording {
    pub fn new(key: RecordingKey, fs: u32, samples: Array2<f64>) -> Self {
        ImuRecording { key, fs, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: SubjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_years: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
}

impl SubjectMeta {
    pub fn bare(id: impl Into<String>) -> Self {
        SubjectMeta {
            subject_id: SubjectId::new(id),
            height_m: None,
            weight_kg: None,
            age_years: None,
            sex: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<SubjectMeta>,
    pub recordings: Vec<ImuRecording>,
}

impl Dataset {
    /// Subject ids present in the recordings, sorted.
    pub fn subject_ids(&self) -> Vec<SubjectId> {
        let ids: BTreeSet<_> = self.recordings.iter().map(|r| r.key.subject.clone()).collect();
        ids.into_iter().collect()
    }

    pub fn recording(&self, key: &RecordingKey) -> Option<&ImuRecording> {
        self.recordings.iter().find(|r| &r.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    MissingSensorRecording,
    SamplingRate { found: u32 },
    EmptySamples,
    NonFiniteSample { row: usize },
    LengthMismatch { found: usize, expected: usize },
    DuplicateRecording,
    DuplicateSubject,
    UnknownSubject,
    NonPositiveMeta { field: &'static str },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::MissingSensorRecording => write!(f, "missing sensor recording"),
            Rule::SamplingRate { found } => {
                write!(f, "sampling rate != {SAMPLING_RATE_HZ} (found {found})")
            }
            Rule::EmptySamples => write!(f, "recording has no samples"),
            Rule::NonFiniteSample { row } => write!(f, "non-finite value at row {row}"),
            Rule::LengthMismatch { found, expected } => write!(
                f,
                "sample count {found} differs from sibling sensors ({expected})"
            ),
            Rule::DuplicateRecording => write!(f, "duplicate recording key"),
            Rule::DuplicateSubject => write!(f, "duplicate subject id"),
            Rule::UnknownSubject => write!(f, "recording references unlisted subject"),
            Rule::NonPositiveMeta { field } => write!(f, "{field} must be positive"),
        }
    }
}

/// A single broken dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub key: String,
    #[serde(flatten)]
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), Error> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(self.violations))
        }
    }
}

/// Checks every dataset invariant and lists the violations; an empty report means valid.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |key: String, rule: Rule| violations.push(Violation { key, rule });

    let mut listed = BTreeSet::new();
    for meta in &d.subjects {
        if !listed.insert(meta.subject_id.clone()) {
            push(meta.subject_id.to_string(), Rule::DuplicateSubject);
        }
        let fields = [
            ("height_m", meta.height_m),
            ("weight_kg", meta.weight_kg),
            ("age_years", meta.age_years),
        ];
        for (field, value) in fields {
            if matches!(value, Some(v) if !(v > 0.0)) {
                push(meta.subject_id.to_string(), Rule::NonPositiveMeta { field });
            }
        }
    }

    let mut groups: BTreeMap<(SubjectId, StyleLabel), BTreeMap<SensorLocation, usize>> =
        BTreeMap::new();
    let mut seen = BTreeSet::new();
    for rec in &d.recordings {
        let key = rec.key.to_string();
        if !seen.insert(rec.key.clone()) {
            push(key.clone(), Rule::DuplicateRecording);
            continue;
        }
        if !listed.contains(&rec.key.subject) {
            push(key.clone(), Rule::UnknownSubject);
        }
        if rec.fs != SAMPLING_RATE_HZ {
            push(key.clone(), Rule::SamplingRate { found: rec.fs });
        }
        if rec.is_empty() {
            push(key.clone(), Rule::EmptySamples);
        }
        if let Some(row) = rec
            .samples
            .rows()
            .into_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            push(key.clone(), Rule::NonFiniteSample { row });
        }
        groups
            .entry((rec.key.subject.clone(), rec.key.style))
            .or_default()
            .insert(rec.key.sensor, rec.len());
    }

    for ((subject, style), sensors) in &groups {
        for sensor in SensorLocation::ALL {
            if !sensors.contains_key(&sensor) {
                let key = RecordingKey {
                    subject: subject.clone(),
                    style: *style,
                    sensor,
                };
                push(key.to_string(), Rule::MissingSensorRecording);
            }
        }
        let expected = sensors.values().copied().min().unwrap_or(0);
        for (sensor, &len) in sensors {
            if len != expected {
                let key = RecordingKey {
                    subject: subject.clone(),
                    style: *style,
                    sensor: *sensor,
                };
                push(key.to_string(), Rule::LengthMismatch { found: len, expected });
            }
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n_subjects: usize, len: usize) -> Dataset {
        let mut d = Dataset::default();
        for s in 0..n_subjects {
            let id = format!("S{:02}", s + 1);
            d.subjects.push(SubjectMeta::bare(id.clone()));
            for style in StyleLabel::ALL {
                for sensor in SensorLocation::ALL {
                    let key = RecordingKey {
                        subject: SubjectId::new(id.clone()),
                        style,
                        sensor,
                    };
                    d.recordings
                        .push(ImuRecording::new(key, 500, Array2::zeros((len, 3))));
                }
            }
        }
        d
    }

    #[test]
    fn label_indices_follow_listing() {
        assert_eq!(label_index(StyleLabel::EggBeater), 0);
        assert_eq!(label_index(StyleLabel::NarrowStance), 7);
        for s in StyleLabel::ALL {
            assert_eq!(index_label(label_index(s)), Some(s));
        }
        assert_eq!(index_label(8), None);
    }

    #[test]
    fn enums_round_trip_through_names_and_serde() {
        for s in StyleLabel::ALL {
            assert_eq!(s.name().parse::<StyleLabel>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
            assert_eq!(serde_json::from_str::<StyleLabel>(&json).unwrap(), s);
        }
        for s in SensorLocation::ALL {
            assert_eq!(s.name().parse::<SensorLocation>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
            assert_eq!(serde_json::from_str::<SensorLocation>(&json).unwrap(), s);
        }
        assert!("jogging".parse::<StyleLabel>().is_err());
    }

    #[test]
    fn complete_dataset_is_valid() {
        let d = complete(10, 4);
        assert_eq!(d.recordings.len(), 400);
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn missing_sensor_reported_once() {
        let mut d = complete(2, 4);
        d.recordings.retain(|r| {
            !(r.key.subject.as_str() == "S01"
                && r.key.style == StyleLabel::Bouncing
                && r.key.sensor == SensorLocation::Com)
        });
        let report = validate_dataset(&d);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::MissingSensorRecording);
        assert_eq!(report.violations[0].key, "(S01, bouncing, com)");
    }

    #[test]
    fn wrong_sampling_rate_reported() {
        let mut d = complete(1, 4);
        d.recordings[3].fs = 100;
        let report = validate_dataset(&d);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::SamplingRate { found: 100 });
        assert!(report.violations[0].to_string().contains("sampling rate != 500"));
    }

    #[test]
    fn duplicates_nonfinite_and_lengths() {
        let mut d = complete(1, 4);
        let dup = d.recordings[0].clone();
        d.recordings.push(dup);
        d.recordings[1].samples[[2, 1]] = f64::NAN;
        d.recordings[2].samples = Array2::zeros((3, 3));
        d.subjects.push(SubjectMeta::bare("S01"));
        let rules: Vec<_> = validate_dataset(&d)
            .violations
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert!(rules.contains(&Rule::DuplicateRecording));
        assert!(rules.contains(&Rule::DuplicateSubject));
        assert!(rules.contains(&Rule::NonFiniteSample { row: 2 }));
        assert!(rules
            .iter()
            .any(|r| matches!(r, Rule::LengthMismatch { expected: 3, .. })));
    }

    #[test]
    fn validation_is_pure() {
        let mut d = complete(2, 4);
        d.recordings[5].fs = 250;
        assert_eq!(validate_dataset(&d), validate_dataset(&d));
    }
}
