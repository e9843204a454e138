//! Cohort-level descriptive summary: observation days, per-modality
//! missingness, and the agitation day-quarter histogram.

use super::{day_quarter, CohortStore};
use crate::windowing::Resolution;
use chrono::{Days, NaiveDate};
use serde::Serialize;
use std::collections::BTreeSet;

/// Missing-data fractions for one modality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ModalityMissing {
    /// Fraction of span days with zero records (daily basis, as reported
    /// for the public dataset).
    pub day_fraction: f64,
    /// Fraction of windows at the requested resolution with zero records.
    pub window_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParticipantDays {
    pub participant: String,
    /// Days in the midnight-snapped observation span (gaps included).
    pub span_days: u64,
    /// Days with at least one record in any modality (gaps excluded).
    pub active_days: u64,
}

/// Summary record for a cohort at a given window resolution.
#[derive(Debug, Clone, Serialize)]
pub struct CohortSummary {
    pub participants: usize,
    /// Total observation days, span convention (the public dataset counts
    /// 2,803 days this way) and active convention side by side.
    pub total_span_days: u64,
    pub total_active_days: u64,
    pub per_participant_days: Vec<ParticipantDays>,
    pub missing_activity: ModalityMissing,
    pub missing_physiology: ModalityMissing,
    pub missing_sleep: ModalityMissing,
    pub agitation_episodes: usize,
    pub other_label_events: usize,
    /// Counts of agitation episodes per day quarter (0: 00-06 ... 3: 18-24).
    pub agitation_quarter_counts: [usize; 4],
    /// Same histogram as fractions of all episodes (zeros when none).
    pub agitation_quarter_fractions: [f64; 4],
}

fn span_dates(lo: NaiveDate, hi: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    let days = (hi - lo).num_days() as u64;
    (0..=days).map(move |d| lo.checked_add_days(Days::new(d)).unwrap())
}

/// Compute the cohort summary. An empty cohort yields zero counts.
pub fn summarize(cohort: &CohortStore, resolution: Resolution) -> CohortSummary {
    let windows_per_day = (24 / resolution.hours()) as u64;
    let mut total_span_days = 0u64;
    let mut total_active_days = 0u64;
    let mut per_participant_days = Vec::new();

    let mut missing_days = [0u64; 3]; // activity, physiology, sleep
    let mut missing_windows = [0u64; 2]; // activity, physiology (sleep is day-grained)
    let mut total_windows = 0u64;

    let mut agitation_episodes = 0usize;
    let mut other_label_events = 0usize;
    let mut quarter_counts = [0usize; 4];

    for (id, data) in cohort.iter() {
        let Some((lo, hi)) = data.span() else {
            continue;
        };
        let lo_day = lo.date();
        let hi_day = hi.date();
        let span_days = (hi_day - lo_day).num_days() as u64 + 1;

        let activity_days: BTreeSet<NaiveDate> =
            data.activity.iter().map(|e| e.timestamp.date()).collect();
        let physiology_days: BTreeSet<NaiveDate> =
            data.physiology.iter().map(|r| r.timestamp.date()).collect();
        let label_days: BTreeSet<NaiveDate> =
            data.labels.iter().map(|l| l.timestamp.date()).collect();

        let mut active_days = 0u64;
        for day in span_dates(lo_day, hi_day) {
            let has_activity = activity_days.contains(&day);
            let has_physiology = physiology_days.contains(&day);
            let has_sleep = data.sleep_days.contains(&day);
            if has_activity || has_physiology || has_sleep || label_days.contains(&day) {
                active_days += 1;
            }
            if !has_activity {
                missing_days[0] += 1;
            }
            if !has_physiology {
                missing_days[1] += 1;
            }
            if !has_sleep {
                missing_days[2] += 1;
            }
        }

        // Window-grained missingness over the same midnight-snapped span.
        let mut activity_windows: BTreeSet<(NaiveDate, u64)> = BTreeSet::new();
        for e in &data.activity {
            let slot =
                u64::from(chrono::Timelike::hour(&e.timestamp)) / u64::from(resolution.hours());
            activity_windows.insert((e.timestamp.date(), slot));
        }
        let mut physiology_windows: BTreeSet<(NaiveDate, u64)> = BTreeSet::new();
        for r in &data.physiology {
            let slot =
                u64::from(chrono::Timelike::hour(&r.timestamp)) / u64::from(resolution.hours());
            physiology_windows.insert((r.timestamp.date(), slot));
        }
        let participant_windows = span_days * windows_per_day;
        total_windows += participant_windows;
        missing_windows[0] += participant_windows - activity_windows.len() as u64;
        missing_windows[1] += participant_windows - physiology_windows.len() as u64;

        for l in &data.labels {
            if l.kind.is_agitation() {
                agitation_episodes += 1;
                quarter_counts[day_quarter(l.timestamp) as usize] += 1;
            } else {
                other_label_events += 1;
            }
        }

        total_span_days += span_days;
        total_active_days += active_days;
        per_participant_days.push(ParticipantDays {
            participant: id.to_string(),
            span_days,
            active_days,
        });
    }

    let day_frac = |missing: u64| {
        if total_span_days == 0 {
            0.0
        } else {
            missing as f64 / total_span_days as f64
        }
    };
    let window_frac = |missing: u64| {
        if total_windows == 0 {
            0.0
        } else {
            missing as f64 / total_windows as f64
        }
    };
    let quarter_fractions = if agitation_episodes == 0 {
        [0.0; 4]
    } else {
        let n = agitation_episodes as f64;
        [
            quarter_counts[0] as f64 / n,
            quarter_counts[1] as f64 / n,
            quarter_counts[2] as f64 / n,
            quarter_counts[3] as f64 / n,
        ]
    };

    CohortSummary {
        participants: cohort.participant_count(),
        total_span_days,
        total_active_days,
        per_participant_days,
        missing_activity: ModalityMissing {
            day_fraction: day_frac(missing_days[0]),
            window_fraction: window_frac(missing_windows[0]),
        },
        missing_physiology: ModalityMissing {
            day_fraction: day_frac(missing_days[1]),
            window_fraction: window_frac(missing_windows[1]),
        },
        missing_sleep: ModalityMissing {
            day_fraction: day_frac(missing_days[2]),
            // Sleep data is day-grained; the window fraction repeats the
            // daily figure.
            window_fraction: day_frac(missing_days[2]),
        },
        agitation_episodes,
        other_label_events,
        agitation_quarter_counts: quarter_counts,
        agitation_quarter_fractions: quarter_fractions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ActivityEvent, LabelEvent, LabelKind, Location};
    use chrono::NaiveDate;

    fn ts(day: u32, h: u32, m: u32) -> chrono::NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 4, day)
            .unwrap()
            .and_hms_opt(h, m, 0)
            .unwrap()
    }

    #[test]
    fn single_event_cohort() {
        let mut cohort = CohortStore::default();
        cohort.entry("p1").activity.push(ActivityEvent {
            location: Location::Kitchen,
            timestamp: ts(1, 10, 0),
        });
        cohort.finalize();
        let s = summarize(&cohort, Resolution::H6);
        assert_eq!(s.total_span_days, 1);
        assert_eq!(s.total_active_days, 1);
        assert_eq!(s.agitation_episodes, 0);
        assert_eq!(s.missing_activity.day_fraction, 0.0);
        assert_eq!(s.missing_physiology.day_fraction, 1.0);
        // one of four windows has the event
        assert_eq!(s.missing_activity.window_fraction, 0.75);
    }

    #[test]
    fn quarter_histogram_and_gap_conventions() {
        let mut cohort = CohortStore::default();
        {
            let p = cohort.entry("p1");
            p.activity.push(ActivityEvent {
                location: Location::Kitchen,
                timestamp: ts(1, 9, 0),
            });
            // day 2 has no data: a gap inside the span
            p.activity.push(ActivityEvent {
                location: Location::Lounge,
                timestamp: ts(3, 20, 0),
            });
            p.labels.push(LabelEvent {
                kind: LabelKind::Agitation,
                timestamp: ts(1, 14, 30),
            });
            p.labels.push(LabelEvent {
                kind: LabelKind::Agitation,
                timestamp: ts(3, 19, 0),
            });
            p.labels.push(LabelEvent {
                kind: LabelKind::Other("Blood pressure".into()),
                timestamp: ts(3, 9, 0),
            });
        }
        cohort.finalize();
        let s = summarize(&cohort, Resolution::H6);
        assert_eq!(s.total_span_days, 3);
        assert_eq!(s.total_active_days, 2);
        assert_eq!(s.agitation_episodes, 2);
        assert_eq!(s.other_label_events, 1);
        assert_eq!(s.agitation_quarter_counts, [0, 0, 1, 1]);
        assert!((s.agitation_quarter_fractions[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_fraction_monotone_under_added_events() {
        let mut cohort = CohortStore::default();
        cohort.entry("p1").activity.push(ActivityEvent {
            location: Location::Kitchen,
            timestamp: ts(1, 9, 0),
        });
        cohort.entry("p1").activity.push(ActivityEvent {
            location: Location::Kitchen,
            timestamp: ts(4, 9, 0),
        });
        cohort.finalize();
        let before = summarize(&cohort, Resolution::H6);

        cohort.entry("p1").activity.push(ActivityEvent {
            location: Location::Hallway,
            timestamp: ts(2, 12, 0),
        });
        cohort.finalize();
        let after = summarize(&cohort, Resolution::H6);

        assert!(after.missing_activity.day_fraction <= before.missing_activity.day_fraction);
        assert!(after.missing_activity.window_fraction <= before.missing_activity.window_fraction);
        for s in [&before, &after] {
            for m in [&s.missing_activity, &s.missing_physiology, &s.missing_sleep] {
                assert!(m.day_fraction >= 0.0 && m.day_fraction <= 1.0);
                assert!(m.window_fraction >= 0.0 && m.window_fraction <= 1.0);
            }
        }
    }

    #[test]
    fn empty_cohort_zero_counts() {
        let cohort = CohortStore::default();
        let s = summarize(&cohort, Resolution::H24);
        assert_eq!(s.participants, 0);
        assert_eq!(s.total_span_days, 0);
        assert_eq!(s.agitation_episodes, 0);
    }
}
