//! Cohort ingestion: domain types, CSV loading with schema mapping, cohort
//! summaries, and the synthetic generator used for offline testing.

mod load;
mod schema;
mod summary;
pub mod synthetic;

pub use load::{load_cohort, load_cohort_with_sleep, write_cohort_csv, LoadedCohort, RejectedRow};
pub use schema::SchemaMap;
pub use summary::{summarize, CohortSummary, ModalityMissing};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// The eight PIR sensor locations monitored in each home.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    BackDoor,
    Bathroom,
    Bedroom,
    FridgeDoor,
    FrontDoor,
    Hallway,
    Kitchen,
    Lounge,
}

pub const LOCATION_COUNT: usize = 8;

impl Location {
    pub const ALL: [Location; LOCATION_COUNT] = [
        Location::BackDoor,
        Location::Bathroom,
        Location::Bedroom,
        Location::FridgeDoor,
        Location::FrontDoor,
        Location::Hallway,
        Location::Kitchen,
        Location::Lounge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Location::BackDoor => "back-door",
            Location::Bathroom => "bathroom",
            Location::Bedroom => "bedroom",
            Location::FridgeDoor => "fridge-door",
            Location::FrontDoor => "front-door",
            Location::Hallway => "hallway",
            Location::Kitchen => "kitchen",
            Location::Lounge => "lounge",
        }
    }

    pub fn index(&self) -> usize {
        Location::ALL.iter().position(|l| l == self).unwrap()
    }

    /// Parse a raw CSV value. Accepts the canonical kebab-case names as well
    /// as the spellings used by the TIHM public release ("Back Door", ...).
    pub fn parse(raw: &str) -> Option<Location> {
        match normalize_token(raw).as_str() {
            "back-door" => Some(Location::BackDoor),
            "bathroom" => Some(Location::Bathroom),
            "bedroom" => Some(Location::Bedroom),
            "fridge-door" | "fridge" => Some(Location::FridgeDoor),
            "front-door" => Some(Location::FrontDoor),
            "hallway" => Some(Location::Hallway),
            "kitchen" => Some(Location::Kitchen),
            "lounge" | "living-room" => Some(Location::Lounge),
            _ => None,
        }
    }

    /// Private areas per the contextual-feature definitions.
    pub fn is_private(&self) -> bool {
        matches!(self, Location::Bathroom | Location::Bedroom)
    }
}

/// The eight physiological measures collected by participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    BodyTemperature,
    BodyWeight,
    DiastolicBp,
    SystolicBp,
    HeartRate,
    MuscleMass,
    TotalBodyWater,
    SkinTemperature,
}

pub const MEASURE_COUNT: usize = 8;

impl Measure {
    pub const ALL: [Measure; MEASURE_COUNT] = [
        Measure::BodyTemperature,
        Measure::BodyWeight,
        Measure::DiastolicBp,
        Measure::SystolicBp,
        Measure::HeartRate,
        Measure::MuscleMass,
        Measure::TotalBodyWater,
        Measure::SkinTemperature,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::BodyTemperature => "body-temperature",
            Measure::BodyWeight => "body-weight",
            Measure::DiastolicBp => "diastolic-bp",
            Measure::SystolicBp => "systolic-bp",
            Measure::HeartRate => "heart-rate",
            Measure::MuscleMass => "muscle-mass",
            Measure::TotalBodyWater => "total-body-water",
            Measure::SkinTemperature => "skin-temperature",
        }
    }

    pub fn index(&self) -> usize {
        Measure::ALL.iter().position(|m| m == self).unwrap()
    }

    pub fn parse(raw: &str) -> Option<Measure> {
        match normalize_token(raw).as_str() {
            "body-temperature" => Some(Measure::BodyTemperature),
            "body-weight" | "weight" => Some(Measure::BodyWeight),
            "diastolic-bp" | "diastolic-blood-pressure" => Some(Measure::DiastolicBp),
            "systolic-bp" | "systolic-blood-pressure" => Some(Measure::SystolicBp),
            "heart-rate" | "pulse" => Some(Measure::HeartRate),
            "muscle-mass" => Some(Measure::MuscleMass),
            "total-body-water" | "body-water" => Some(Measure::TotalBodyWater),
            "skin-temperature" => Some(Measure::SkinTemperature),
            _ => None,
        }
    }
}

/// Lowercase, trim, and collapse separators to single hyphens.
fn normalize_token(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.trim().chars() {
        if ch.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('-');
            }
            pending_sep = false;
            for low in ch.to_lowercase() {
                out.push(low);
            }
        } else {
            pending_sep = true;
        }
    }
    out
}

/// Clinical label categories. Non-agitation labels are stored verbatim but
/// never enter modeling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    Agitation,
    Other(String),
}

impl LabelKind {
    pub fn parse(raw: &str) -> LabelKind {
        if normalize_token(raw) == "agitation" {
            LabelKind::Agitation
        } else {
            LabelKind::Other(raw.trim().to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            LabelKind::Agitation => "agitation",
            LabelKind::Other(s) => s.as_str(),
        }
    }

    pub fn is_agitation(&self) -> bool {
        matches!(self, LabelKind::Agitation)
    }
}

/// One PIR motion event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub location: Location,
    pub timestamp: NaiveDateTime,
}

/// One physiological reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysiologyReading {
    pub measure: Measure,
    pub value: f64,
    pub timestamp: NaiveDateTime,
}

/// One clinician-verified label event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub kind: LabelKind,
    pub timestamp: NaiveDateTime,
}

/// All records for one participant, each list sorted ascending by timestamp
/// (ties broken by the remaining fields so storage order is canonical).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantData {
    pub activity: Vec<ActivityEvent>,
    pub physiology: Vec<PhysiologyReading>,
    pub labels: Vec<LabelEvent>,
    /// Days with any sleep-mat data; used only by the missingness report.
    pub sleep_days: BTreeSet<NaiveDate>,
}

impl ParticipantData {
    fn sort(&mut self) {
        self.activity
            .sort_by(|a, b| (a.timestamp, a.location).cmp(&(b.timestamp, b.location)));
        self.physiology.sort_by(|a, b| {
            (a.timestamp, a.measure, a.value.to_bits()).cmp(&(
                b.timestamp,
                b.measure,
                b.value.to_bits(),
            ))
        });
        self.labels
            .sort_by(|a, b| (a.timestamp, &a.kind).cmp(&(b.timestamp, &b.kind)));
    }

    fn is_empty(&self) -> bool {
        self.activity.is_empty() && self.physiology.is_empty() && self.labels.is_empty()
    }

    /// Earliest and latest timestamp over all modalities, if any records exist.
    pub fn span(&self) -> Option<(NaiveDateTime, NaiveDateTime)> {
        let mut lo: Option<NaiveDateTime> = None;
        let mut hi: Option<NaiveDateTime> = None;
        let mut update = |t: NaiveDateTime| {
            lo = Some(lo.map_or(t, |v| v.min(t)));
            hi = Some(hi.map_or(t, |v| v.max(t)));
        };
        self.activity.iter().for_each(|e| update(e.timestamp));
        self.physiology.iter().for_each(|r| update(r.timestamp));
        self.labels.iter().for_each(|l| update(l.timestamp));
        lo.zip(hi)
    }
}

/// Validated, immutable store of a whole cohort keyed by participant id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortStore {
    participants: BTreeMap<String, ParticipantData>,
}

impl CohortStore {
    pub fn participant_ids(&self) -> impl Iterator<Item = &str> {
        self.participants.keys().map(|s| s.as_str())
    }

    pub fn participant_count(&self) -> usize {
        self.participants.len()
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantData> {
        self.participants.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParticipantData)> {
        self.participants.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.participants.values().all(|p| p.is_empty())
    }

    /// Insert records; used by the loader and the synthetic generator.
    /// Canonical sort order is restored on `finalize`.
    pub(crate) fn entry(&mut self, id: &str) -> &mut ParticipantData {
        self.participants.entry(id.to_string()).or_default()
    }

    pub(crate) fn finalize(&mut self) {
        for data in self.participants.values_mut() {
            data.sort();
        }
        self.participants.retain(|_, d| !d.is_empty());
    }
}

pub fn day_quarter(ts: NaiveDateTime) -> u8 {
    (ts.hour() / 6) as u8
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file missing: {0}")]
    FileMissing(String),
    #[error("header mismatch in {file}: column {column:?} not found")]
    HeaderMismatch { file: String, column: String },
    #[error("empty cohort: no valid rows in any input file")]
    EmptyCohort,
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("io error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}
