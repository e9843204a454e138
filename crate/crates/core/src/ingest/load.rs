//! CSV loading and writing for cohort data.
//!
//! Rows that fail validation (unparseable timestamp, unknown enum value,
//! non-finite value, missing field) are rejected with a recorded reason,
//! never silently dropped.

use super::schema::SchemaMap;
use super::{
    ActivityEvent, CohortStore, IngestError, LabelEvent, LabelKind, Location, Measure,
    PhysiologyReading,
};
use chrono::NaiveDateTime;
use std::path::Path;

/// One rejected input row and why it was rejected.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RejectedRow {
    pub file: String,
    /// 1-based data-row number (header excluded).
    pub row: usize,
    pub reason: String,
}

/// A validated cohort plus the audit trail of rejected rows.
#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: CohortStore,
    pub rejected: Vec<RejectedRow>,
}

impl LoadedCohort {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// Timestamps are treated as naive local clock time of the deployment.
/// Sub-second digits are truncated to second precision.
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    const FORMATS: [&str; 6] = [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%d",
    ];
    for fmt in FORMATS {
        if fmt == "%Y-%m-%d" {
            if let Ok(d) = chrono::NaiveDate::parse_from_str(raw, fmt) {
                return d.and_hms_opt(0, 0, 0);
            }
        } else if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return t.with_nanosecond_zero();
        }
    }
    // Tolerate a trailing UTC marker; values remain naive local time.
    if let Some(stripped) = raw.strip_suffix('Z').or_else(|| raw.strip_suffix("+00:00")) {
        return parse_timestamp(stripped);
    }
    None
}

trait TruncateSeconds {
    fn with_nanosecond_zero(self) -> Option<NaiveDateTime>;
}

impl TruncateSeconds for NaiveDateTime {
    fn with_nanosecond_zero(self) -> Option<NaiveDateTime> {
        use chrono::Timelike;
        self.with_nanosecond(0)
    }
}

struct ColumnIndices {
    indices: Vec<usize>,
}

fn resolve_columns(
    file: &str,
    headers: &csv::StringRecord,
    wanted: &[&str],
) -> Result<ColumnIndices, IngestError> {
    let mut indices = Vec::with_capacity(wanted.len());
    for name in wanted {
        let pos = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| IngestError::HeaderMismatch {
                file: file.to_string(),
                column: (*name).to_string(),
            })?;
        indices.push(pos);
    }
    Ok(ColumnIndices { indices })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    if !path.exists() {
        return Err(IngestError::FileMissing(path.display().to_string()));
    }
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| IngestError::Csv {
            file: path.display().to_string(),
            source,
        })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Load and validate the three cohort CSV files.
///
/// Column names are resolved through `schema`; rows with unparseable
/// timestamps or unknown enum values are rejected and counted. All
/// per-participant lists come back in canonical sorted order, so the result
/// is independent of input row order.
pub fn load_cohort(
    activity_path: &Path,
    physiology_path: &Path,
    labels_path: &Path,
    schema: &SchemaMap,
) -> Result<LoadedCohort, IngestError> {
    load_cohort_with_sleep(activity_path, physiology_path, labels_path, None, schema)
}

/// Like [`load_cohort`], with an optional sleep CSV that only feeds the
/// missingness summary (sleep never enters modeling).
pub fn load_cohort_with_sleep(
    activity_path: &Path,
    physiology_path: &Path,
    labels_path: &Path,
    sleep_path: Option<&Path>,
    schema: &SchemaMap,
) -> Result<LoadedCohort, IngestError> {
    let mut cohort = CohortStore::default();
    let mut rejected = Vec::new();

    load_activity(activity_path, schema, &mut cohort, &mut rejected)?;
    load_physiology(physiology_path, schema, &mut cohort, &mut rejected)?;
    load_labels(labels_path, schema, &mut cohort, &mut rejected)?;
    if let Some(path) = sleep_path {
        load_sleep(path, schema, &mut cohort, &mut rejected)?;
    }

    cohort.finalize();
    if cohort.is_empty() {
        return Err(IngestError::EmptyCohort);
    }
    Ok(LoadedCohort { cohort, rejected })
}

fn load_activity(
    path: &Path,
    schema: &SchemaMap,
    cohort: &mut CohortStore,
    rejected: &mut Vec<RejectedRow>,
) -> Result<(), IngestError> {
    let file = file_name(path);
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file.clone(),
            source,
        })?
        .clone();
    let cols = resolve_columns(
        &file,
        &headers,
        &[
            &schema.activity.participant_id,
            &schema.activity.location,
            &schema.activity.timestamp,
        ],
    )?;

    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("malformed csv record: {e}"),
                });
                continue;
            }
        };
        let get = |i: usize| record.get(cols.indices[i]).unwrap_or("").trim();
        let id = get(0);
        if id.is_empty() {
            rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: "empty participant id".into(),
            });
            continue;
        }
        let location = match Location::parse(get(1)) {
            Some(l) => l,
            None => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("unknown location {:?}", get(1)),
                });
                continue;
            }
        };
        let timestamp = match parse_timestamp(get(2)) {
            Some(t) => t,
            None => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("unparseable timestamp {:?}", get(2)),
                });
                continue;
            }
        };
        cohort.entry(id).activity.push(ActivityEvent {
            location,
            timestamp,
        });
    }
    Ok(())
}

fn load_physiology(
    path: &Path,
    schema: &SchemaMap,
    cohort: &mut CohortStore,
    rejected: &mut Vec<RejectedRow>,
) -> Result<(), IngestError> {
    let file = file_name(path);
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file.clone(),
            source,
        })?
        .clone();
    let cols = resolve_columns(
        &file,
        &headers,
        &[
            &schema.physiology.participant_id,
            &schema.physiology.measure,
            &schema.physiology.value,
            &schema.physiology.timestamp,
        ],
    )?;

    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("malformed csv record: {e}"),
                });
                continue;
            }
        };
        let get = |i: usize| record.get(cols.indices[i]).unwrap_or("").trim();
        let id = get(0);
        if id.is_empty() {
            rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: "empty participant id".into(),
            });
            continue;
        }
        let measure = match Measure::parse(get(1)) {
            Some(m) => m,
            None => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("unknown measure {:?}", get(1)),
                });
                continue;
            }
        };
        let value = match get(2).parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("non-finite or unparseable value {:?}", get(2)),
                });
                continue;
            }
        };
        let timestamp = match parse_timestamp(get(3)) {
            Some(t) => t,
            None => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("unparseable timestamp {:?}", get(3)),
                });
                continue;
            }
        };
        cohort.entry(id).physiology.push(PhysiologyReading {
            measure,
            value,
            timestamp,
        });
    }
    Ok(())
}

fn load_labels(
    path: &Path,
    schema: &SchemaMap,
    cohort: &mut CohortStore,
    rejected: &mut Vec<RejectedRow>,
) -> Result<(), IngestError> {
    let file = file_name(path);
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file.clone(),
            source,
        })?
        .clone();
    let cols = resolve_columns(
        &file,
        &headers,
        &[
            &schema.labels.participant_id,
            &schema.labels.kind,
            &schema.labels.timestamp,
        ],
    )?;

    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("malformed csv record: {e}"),
                });
                continue;
            }
        };
        let get = |i: usize| record.get(cols.indices[i]).unwrap_or("").trim();
        let id = get(0);
        if id.is_empty() {
            rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: "empty participant id".into(),
            });
            continue;
        }
        let kind_raw = get(1);
        if kind_raw.is_empty() {
            rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: "empty label kind".into(),
            });
            continue;
        }
        let kind = LabelKind::parse(kind_raw);
        let timestamp = match parse_timestamp(get(2)) {
            Some(t) => t,
            None => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("unparseable timestamp {:?}", get(2)),
                });
                continue;
            }
        };
        cohort.entry(id).labels.push(LabelEvent { kind, timestamp });
    }
    Ok(())
}

fn load_sleep(
    path: &Path,
    schema: &SchemaMap,
    cohort: &mut CohortStore,
    rejected: &mut Vec<RejectedRow>,
) -> Result<(), IngestError> {
    let file = file_name(path);
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file.clone(),
            source,
        })?
        .clone();
    let cols = resolve_columns(
        &file,
        &headers,
        &[&schema.sleep.participant_id, &schema.sleep.timestamp],
    )?;

    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("malformed csv record: {e}"),
                });
                continue;
            }
        };
        let get = |i: usize| record.get(cols.indices[i]).unwrap_or("").trim();
        let id = get(0);
        if id.is_empty() {
            rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: "empty participant id".into(),
            });
            continue;
        }
        match parse_timestamp(get(1)) {
            Some(t) => {
                cohort.entry(id).sleep_days.insert(t.date());
            }
            None => rejected.push(RejectedRow {
                file: file.clone(),
                row,
                reason: format!("unparseable timestamp {:?}", get(1)),
            }),
        }
    }
    Ok(())
}

const TIMESTAMP_FMT: &str = "%Y-%m-%d %H:%M:%S";

/// Write a cohort back out as `activity.csv`, `physiology.csv`, `labels.csv`
/// under `dir`, using the default schema column names. The written files
/// round-trip losslessly through [`load_cohort`].
pub fn write_cohort_csv(cohort: &CohortStore, dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        file: dir.display().to_string(),
        source,
    })?;
    let schema = SchemaMap::default();

    let path = dir.join("activity.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    w.write_record([
        schema.activity.participant_id.as_str(),
        schema.activity.location.as_str(),
        schema.activity.timestamp.as_str(),
    ])
    .map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    for (id, data) in cohort.iter() {
        for e in &data.activity {
            w.write_record([
                id,
                e.location.as_str(),
                &e.timestamp.format(TIMESTAMP_FMT).to_string(),
            ])
            .map_err(|source| IngestError::Csv {
                file: path.display().to_string(),
                source,
            })?;
        }
    }
    w.flush().map_err(|source| IngestError::Io {
        file: path.display().to_string(),
        source,
    })?;

    let path = dir.join("physiology.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    w.write_record([
        schema.physiology.participant_id.as_str(),
        schema.physiology.measure.as_str(),
        schema.physiology.value.as_str(),
        schema.physiology.timestamp.as_str(),
    ])
    .map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    for (id, data) in cohort.iter() {
        for r in &data.physiology {
            // serialize() routes f64 through ryu, so values round-trip exactly
            w.serialize((
                id,
                r.measure.as_str(),
                r.value,
                r.timestamp.format(TIMESTAMP_FMT).to_string(),
            ))
            .map_err(|source| IngestError::Csv {
                file: path.display().to_string(),
                source,
            })?;
        }
    }
    w.flush().map_err(|source| IngestError::Io {
        file: path.display().to_string(),
        source,
    })?;

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    w.write_record([
        schema.labels.participant_id.as_str(),
        schema.labels.kind.as_str(),
        schema.labels.timestamp.as_str(),
    ])
    .map_err(|source| IngestError::Csv {
        file: path.display().to_string(),
        source,
    })?;
    for (id, data) in cohort.iter() {
        for l in &data.labels {
            w.write_record([
                id,
                l.kind.as_str(),
                &l.timestamp.format(TIMESTAMP_FMT).to_string(),
            ])
            .map_err(|source| IngestError::Csv {
                file: path.display().to_string(),
                source,
            })?;
        }
    }
    w.flush().map_err(|source| IngestError::Io {
        file: path.display().to_string(),
        source,
    })?;

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parse_timestamp_variants() {
        for raw in [
            "2019-04-23 21:05:06",
            "2019-04-23T21:05:06",
            "2019-04-23 21:05:06.000",
            "2019-04-23T21:05:06Z",
        ] {
            let t = parse_timestamp(raw).unwrap();
            assert_eq!(
                t.format("%Y-%m-%d %H:%M:%S").to_string(),
                "2019-04-23 21:05:06"
            );
        }
        assert_eq!(
            parse_timestamp("2019-04-23")
                .unwrap()
                .format(TIMESTAMP_FMT)
                .to_string(),
            "2019-04-23 00:00:00"
        );
        assert!(parse_timestamp("23/04/2019").is_none());
    }

    #[test]
    fn unknown_location_rejected_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(
            dir.path(),
            "activity.csv",
            "patient_id,location_name,date\np1,garage,2019-04-01 10:00:00\n",
        );
        let p = write_file(
            dir.path(),
            "physiology.csv",
            "patient_id,device_type,value,date\n",
        );
        let l = write_file(
            dir.path(),
            "labels.csv",
            "patient_id,type,date\np1,Agitation,2019-04-01 14:00:00\n",
        );
        let loaded = load_cohort(&a, &p, &l, &SchemaMap::default()).unwrap();
        let data = loaded.cohort.participant("p1").unwrap();
        assert_eq!(data.activity.len(), 0);
        assert_eq!(data.labels.len(), 1);
        assert_eq!(loaded.rejected_count(), 1);
        assert!(loaded.rejected[0].reason.contains("garage"));
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path(), "activity.csv", "patient_id,room,date\n");
        let p = write_file(
            dir.path(),
            "physiology.csv",
            "patient_id,device_type,value,date\n",
        );
        let l = write_file(dir.path(), "labels.csv", "patient_id,type,date\n");
        let err = load_cohort(&a, &p, &l, &SchemaMap::default()).unwrap_err();
        match err {
            IngestError::HeaderMismatch { column, .. } => assert_eq!(column, "location_name"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "physiology.csv",
            "patient_id,device_type,value,date\n",
        );
        let l = write_file(dir.path(), "labels.csv", "patient_id,type,date\n");
        let err = load_cohort(&dir.path().join("nope.csv"), &p, &l, &SchemaMap::default());
        assert!(matches!(err, Err(IngestError::FileMissing(_))));
    }

    #[test]
    fn empty_cohort_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(
            dir.path(),
            "activity.csv",
            "patient_id,location_name,date\n",
        );
        let p = write_file(
            dir.path(),
            "physiology.csv",
            "patient_id,device_type,value,date\n",
        );
        let l = write_file(dir.path(), "labels.csv", "patient_id,type,date\n");
        let err = load_cohort(&a, &p, &l, &SchemaMap::default());
        assert!(matches!(err, Err(IngestError::EmptyCohort)));
    }

    #[test]
    fn order_insensitive_loading() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [
            "p1,kitchen,2019-04-01 10:00:00",
            "p1,hallway,2019-04-01 09:00:00",
            "p1,bedroom,2019-04-01 09:00:00",
            "p2,lounge,2019-04-02 11:30:00",
        ];
        let header = "patient_id,location_name,date\n";
        let p = write_file(
            dir.path(),
            "physiology.csv",
            "patient_id,device_type,value,date\n",
        );
        let l = write_file(
            dir.path(),
            "labels.csv",
            "patient_id,type,date\np1,Agitation,2019-04-01 14:00:00\n",
        );

        let a1 = write_file(
            dir.path(),
            "a1.csv",
            &format!("{header}{}\n", rows.join("\n")),
        );
        let mut shuffled = rows;
        shuffled.reverse();
        let a2 = write_file(
            dir.path(),
            "a2.csv",
            &format!("{header}{}\n", shuffled.join("\n")),
        );

        let c1 = load_cohort(&a1, &p, &l, &SchemaMap::default())
            .unwrap()
            .cohort;
        let c2 = load_cohort(&a2, &p, &l, &SchemaMap::default())
            .unwrap()
            .cohort;
        assert_eq!(c1, c2);
    }
}
