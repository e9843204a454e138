//! Column-name mapping between input CSV headers and the canonical fields.
//!
//! Defaults match the TIHM public release; other releases can override any
//! name through a small TOML file.

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaMap {
    pub activity: ActivityColumns,
    pub physiology: PhysiologyColumns,
    pub labels: LabelColumns,
    pub sleep: SleepColumns,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityColumns {
    pub participant_id: String,
    pub location: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysiologyColumns {
    pub participant_id: String,
    pub measure: String,
    pub value: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelColumns {
    pub participant_id: String,
    pub kind: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SleepColumns {
    pub participant_id: String,
    pub timestamp: String,
}

impl Default for ActivityColumns {
    fn default() -> Self {
        Self {
            participant_id: "patient_id".into(),
            location: "location_name".into(),
            timestamp: "date".into(),
        }
    }
}

impl Default for PhysiologyColumns {
    fn default() -> Self {
        Self {
            participant_id: "patient_id".into(),
            measure: "device_type".into(),
            value: "value".into(),
            timestamp: "date".into(),
        }
    }
}

impl Default for LabelColumns {
    fn default() -> Self {
        Self {
            participant_id: "patient_id".into(),
            kind: "type".into(),
            timestamp: "date".into(),
        }
    }
}

impl Default for SleepColumns {
    fn default() -> Self {
        Self {
            participant_id: "patient_id".into(),
            timestamp: "date".into(),
        }
    }
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            activity: ActivityColumns::default(),
            physiology: PhysiologyColumns::default(),
            labels: LabelColumns::default(),
            sleep: SleepColumns::default(),
        }
    }
}

impl SchemaMap {
    pub fn from_toml_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read schema map {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid schema map {}: {e}", path.display()))
    }
}
