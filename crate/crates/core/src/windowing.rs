//! Fixed-resolution windowing with next-window agitation labels.
//!
//! Each participant's span is snapped outward to midnight boundaries and
//! tiled with windows of 6, 12 or 24 hours. Windows with zero activity are
//! retained; the prediction target of a window is whether agitation occurs
//! in the immediately following window.

use crate::ingest::{day_quarter, ActivityEvent, CohortStore, PhysiologyReading};
use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    H6,
    H12,
    H24,
}

impl Resolution {
    pub fn hours(self) -> u32 {
        match self {
            Resolution::H6 => 6,
            Resolution::H12 => 12,
            Resolution::H24 => 24,
        }
    }

    pub fn from_hours(hours: u32) -> Result<Self, WindowingError> {
        match hours {
            6 => Ok(Resolution::H6),
            12 => Ok(Resolution::H12),
            24 => Ok(Resolution::H24),
            other => Err(WindowingError::BadResolution(other)),
        }
    }

    fn duration(self) -> Duration {
        Duration::hours(i64::from(self.hours()))
    }
}

/// One fixed-resolution interval of a participant's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub participant: String,
    pub start: NaiveDateTime,
    pub resolution: Resolution,
    pub activity: Vec<ActivityEvent>,
    pub physiology: Vec<PhysiologyReading>,
    /// Agitation in the immediately following window; `None` for each
    /// participant's final window, which has no successor inside the span.
    pub label_next: Option<bool>,
    /// Agitation inside this window itself (usable context, not a target).
    pub agitation_now: bool,
    /// Quarter of the day the window starts in (0: 00-06 ... 3: 18-24).
    pub day_quarter: u8,
}

impl Window {
    pub fn end(&self) -> NaiveDateTime {
        self.start + self.resolution.duration()
    }
}

/// All windows of a cohort in (participant, start) order, plus bookkeeping.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub resolution: Resolution,
    /// Final windows per participant, excluded from supervised samples
    /// because no following window exists inside the span.
    pub excluded_no_next: usize,
}

impl WindowSet {
    /// Indices of windows usable as supervised samples.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.windows.len())
            .filter(|&i| self.windows[i].label_next.is_some())
            .collect()
    }
}

/// A run of `n` consecutive windows for one participant; the label is the
/// next-window target of the last window.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub participant: String,
    /// Indices into the originating `WindowSet::windows`, oldest first.
    pub window_indices: Vec<usize>,
    pub label: bool,
}

#[derive(Debug, Error)]
pub enum WindowingError {
    #[error("resolution must be one of 6, 12, 24 (got {0})")]
    BadResolution(u32),
    #[error("no positive windows in input")]
    NoPositives,
}

/// Tile each participant's midnight-snapped span with windows and attach
/// labels and context flags.
pub fn build_windows(cohort: &CohortStore, resolution: Resolution) -> WindowSet {
    let step = resolution.duration();
    let mut windows = Vec::new();
    let mut excluded = 0usize;

    for (id, data) in cohort.iter() {
        let Some((lo, hi)) = data.span() else {
            continue;
        };
        let first = lo.date().and_hms_opt(0, 0, 0).unwrap();
        let last = hi.date().and_hms_opt(0, 0, 0).unwrap() + Duration::hours(24);

        let agitation_times: Vec<NaiveDateTime> = data
            .labels
            .iter()
            .filter(|l| l.kind.is_agitation())
            .map(|l| l.timestamp)
            .collect();

        let mut a_idx = 0usize;
        let mut p_idx = 0usize;
        let mut start = first;
        let mut participant_windows = Vec::new();
        while start < last {
            let end = start + step;
            let a_lo = a_idx;
            while a_idx < data.activity.len() && data.activity[a_idx].timestamp < end {
                a_idx += 1;
            }
            let p_lo = p_idx;
            while p_idx < data.physiology.len() && data.physiology[p_idx].timestamp < end {
                p_idx += 1;
            }
            let agitation_now = agitation_times.iter().any(|t| *t >= start && *t < end);
            participant_windows.push(Window {
                participant: id.to_string(),
                start,
                resolution,
                activity: data.activity[a_lo..a_idx].to_vec(),
                physiology: data.physiology[p_lo..p_idx].to_vec(),
                label_next: None,
                agitation_now,
                day_quarter: day_quarter(start),
            });
            start = end;
        }

        let n = participant_windows.len();
        for i in 0..n {
            if i + 1 < n {
                participant_windows[i].label_next = Some(participant_windows[i + 1].agitation_now);
            } else {
                excluded += 1;
            }
        }
        windows.extend(participant_windows);
    }

    WindowSet {
        windows,
        resolution,
        excluded_no_next: excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryStats {
    /// Fraction of positive windows (agitation next) with no agitation now.
    pub positives_without_current: f64,
    pub positives: usize,
}

/// Fraction of agitation-next windows not themselves containing agitation.
pub fn history_statistics(set: &WindowSet) -> Result<HistoryStats, WindowingError> {
    let mut positives = 0usize;
    let mut without_current = 0usize;
    for w in &set.windows {
        if w.label_next == Some(true) {
            positives += 1;
            if !w.agitation_now {
                without_current += 1;
            }
        }
    }
    if positives == 0 {
        return Err(WindowingError::NoPositives);
    }
    Ok(HistoryStats {
        positives_without_current: without_current as f64 / positives as f64,
        positives,
    })
}

/// Sliding runs of `n` consecutive labeled windows per participant.
/// With contiguous tiling every labeled window follows its predecessor, so
/// each participant contributes `max(0, labeled - n + 1)` samples.
pub fn make_sequences(set: &WindowSet, n: usize) -> Vec<SequenceSample> {
    assert!(n >= 1, "sequence length must be >= 1");
    let step = set.resolution.duration();
    let mut samples = Vec::new();
    let labeled = set.labeled_indices();

    let mut i = 0usize;
    while i < labeled.len() {
        // one contiguous run of labeled windows for one participant
        let mut j = i;
        while j + 1 < labeled.len() {
            let cur = &set.windows[labeled[j]];
            let next = &set.windows[labeled[j + 1]];
            if next.participant == cur.participant && next.start == cur.start + step {
                j += 1;
            } else {
                break;
            }
        }
        let run = &labeled[i..=j];
        if run.len() >= n {
            for k in 0..=(run.len() - n) {
                let window_indices: Vec<usize> = run[k..k + n].to_vec();
                let last = &set.windows[*window_indices.last().unwrap()];
                samples.push(SequenceSample {
                    participant: last.participant.clone(),
                    label: last.label_next.expect("labeled window"),
                    window_indices,
                });
            }
        }
        i = j + 1;
    }
    samples
}

/// Dump one row per window for external inspection.
pub fn write_windows_csv(set: &WindowSet, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "participant",
        "start",
        "resolution_hours",
        "activity_events",
        "physiology_readings",
        "label_next",
        "agitation_now",
        "day_quarter",
    ])?;
    for win in &set.windows {
        w.write_record([
            win.participant.as_str(),
            &win.start.format("%Y-%m-%d %H:%M:%S").to_string(),
            &win.resolution.hours().to_string(),
            &win.activity.len().to_string(),
            &win.physiology.len().to_string(),
            &win.label_next.map_or(String::new(), |b| b.to_string()),
            &win.agitation_now.to_string(),
            &win.day_quarter.to_string(),
        ])?;
    }
    w.flush()
}
