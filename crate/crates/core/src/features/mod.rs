//! The 48-feature vector per window: 32 statistical activity features
//! (sum/max/mean/std of hourly counts per location), 8 contextual activity
//! features, and 8 physiology means with a missingness mask. Day-quarter and
//! current-agitation context can be appended as features 49-50.

mod preprocess;

pub use preprocess::{apply_preprocessor, fit_preprocessor, PreprocessorState};

use crate::ingest::{Location, Measure, LOCATION_COUNT, MEASURE_COUNT};
use crate::windowing::{Window, WindowSet};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const STATISTICAL_COUNT: usize = 32;
pub const CONTEXTUAL_COUNT: usize = 8;
pub const BASE_FEATURE_COUNT: usize = STATISTICAL_COUNT + CONTEXTUAL_COUNT + MEASURE_COUNT;

const STATISTICS: [&str; 4] = ["sum", "max", "mean", "std"];

pub const CONTEXTUAL_NAMES: [&str; CONTEXTUAL_COUNT] = [
    "total-events",
    "unique-locations",
    "active-location-ratio",
    "private-to-public-ratio",
    "location-entropy",
    "location-dominance-ratio",
    "back-and-forth-count",
    "num-transitions",
];

/// Which context features to append after the base 48.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFlags {
    pub day_quarter: bool,
    pub agitation_now: bool,
}

impl ContextFlags {
    pub const NONE: ContextFlags = ContextFlags {
        day_quarter: false,
        agitation_now: false,
    };
    pub const BOTH: ContextFlags = ContextFlags {
        day_quarter: true,
        agitation_now: true,
    };

    pub fn feature_count(&self) -> usize {
        BASE_FEATURE_COUNT + usize::from(self.day_quarter) + usize::from(self.agitation_now)
    }
}

/// Canonical ordered feature names for a given context configuration.
pub fn feature_names(flags: ContextFlags) -> Vec<String> {
    let mut names = Vec::with_capacity(flags.feature_count());
    for location in Location::ALL {
        for stat in STATISTICS {
            names.push(format!("{}-count-{stat}", location.as_str()));
        }
    }
    names.extend(CONTEXTUAL_NAMES.iter().map(|s| s.to_string()));
    names.extend(Measure::ALL.iter().map(|m| m.as_str().to_string()));
    if flags.day_quarter {
        names.push("day-quarter".to_string());
    }
    if flags.agitation_now {
        names.push("agitation-now".to_string());
    }
    names
}

/// One window's feature row. `missing` marks physiology entries awaiting
/// imputation; activity and context features are never missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least 2 training rows to fit the preprocessor (got {0})")]
    TooFewRows(usize),
    #[error("feature arity mismatch: state has {expected}, row has {got}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Population standard deviation (the hourly grid is the full population).
fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Hourly event counts per location over the window's clock-hour grid.
fn hourly_counts(window: &Window) -> Vec<[f64; LOCATION_COUNT]> {
    let hours = window.resolution.hours() as usize;
    let mut counts = vec![[0.0f64; LOCATION_COUNT]; hours];
    for event in &window.activity {
        let offset = (event.timestamp - window.start).num_seconds();
        let hour = (offset / 3600) as usize;
        debug_assert!(hour < hours, "event outside window");
        counts[hour.min(hours - 1)][event.location.index()] += 1.0;
    }
    counts
}

/// 32 statistical activity features: per location, the sum, max, mean and
/// population std of its hourly counts. Empty windows yield all zeros.
pub fn statistical_activity_features(window: &Window) -> [f64; STATISTICAL_COUNT] {
    let counts = hourly_counts(window);
    let hours = counts.len();
    let mut out = [0.0f64; STATISTICAL_COUNT];
    for loc in 0..LOCATION_COUNT {
        let series: Vec<f64> = (0..hours).map(|h| counts[h][loc]).collect();
        let sum: f64 = series.iter().sum();
        let max = series.iter().cloned().fold(0.0f64, f64::max);
        let mean = if hours > 0 { sum / hours as f64 } else { 0.0 };
        let std = population_std(&series, mean);
        out[loc * 4] = sum;
        out[loc * 4 + 1] = max;
        out[loc * 4 + 2] = mean;
        out[loc * 4 + 3] = std;
    }
    out
}

/// The 8 contextual activity features.
///
/// Conventions for empty windows: entropy 0, dominance 0. The private/public
/// ratio uses add-one smoothing; private = {bathroom, bedroom}.
pub fn contextual_activity_features(window: &Window) -> [f64; CONTEXTUAL_COUNT] {
    let mut counts = [0usize; LOCATION_COUNT];
    for event in &window.activity {
        counts[event.location.index()] += 1;
    }
    let total: usize = counts.iter().sum();

    let unique = counts.iter().filter(|&&c| c > 0).count();
    let active_ratio = unique as f64 / LOCATION_COUNT as f64;

    let private: usize = Location::ALL
        .iter()
        .filter(|l| l.is_private())
        .map(|l| counts[l.index()])
        .sum();
    let public = total - private;
    let private_to_public = (private as f64 + 1.0) / (public as f64 + 1.0);

    let entropy = if total == 0 {
        0.0
    } else {
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total as f64;
                p * p.ln()
            })
            .sum::<f64>()
    };

    let dominance = if total == 0 {
        0.0
    } else {
        counts.iter().max().copied().unwrap_or(0) as f64 / total as f64
    };

    let sequence: Vec<Location> = window.activity.iter().map(|e| e.location).collect();
    let mut transitions = 0usize;
    let mut back_and_forth = 0usize;
    for i in 1..sequence.len() {
        if sequence[i] != sequence[i - 1] {
            transitions += 1;
        }
    }
    for i in 2..sequence.len() {
        if sequence[i] == sequence[i - 2] && sequence[i] != sequence[i - 1] {
            back_and_forth += 1;
        }
    }

    [
        total as f64,
        unique as f64,
        active_ratio,
        private_to_public,
        entropy,
        dominance,
        back_and_forth as f64,
        transitions as f64,
    ]
}

/// Per-measure mean of readings inside the window; measures with no readings
/// are flagged missing (value 0 placeholder until imputation).
pub fn physiology_features(window: &Window) -> ([f64; MEASURE_COUNT], [bool; MEASURE_COUNT]) {
    let mut sums = [0.0f64; MEASURE_COUNT];
    let mut counts = [0usize; MEASURE_COUNT];
    for reading in &window.physiology {
        sums[reading.measure.index()] += reading.value;
        counts[reading.measure.index()] += 1;
    }
    let mut values = [0.0f64; MEASURE_COUNT];
    let mut missing = [false; MEASURE_COUNT];
    for i in 0..MEASURE_COUNT {
        if counts[i] == 0 {
            missing[i] = true;
        } else {
            values[i] = sums[i] / counts[i] as f64;
        }
    }
    (values, missing)
}

/// Full feature vector for one window under the given context flags.
pub fn extract_features(window: &Window, flags: ContextFlags) -> FeatureVector {
    let mut values = Vec::with_capacity(flags.feature_count());
    let mut missing = Vec::with_capacity(flags.feature_count());

    let stats = statistical_activity_features(window);
    values.extend_from_slice(&stats);
    missing.extend(std::iter::repeat(false).take(STATISTICAL_COUNT));

    let ctx = contextual_activity_features(window);
    values.extend_from_slice(&ctx);
    missing.extend(std::iter::repeat(false).take(CONTEXTUAL_COUNT));

    let (phys, phys_missing) = physiology_features(window);
    values.extend_from_slice(&phys);
    missing.extend_from_slice(&phys_missing);

    if flags.day_quarter {
        values.push(f64::from(window.day_quarter));
        missing.push(false);
    }
    if flags.agitation_now {
        values.push(f64::from(u8::from(window.agitation_now)));
        missing.push(false);
    }
    FeatureVector { values, missing }
}

/// Feature rows for every window in the set, in window order.
pub fn extract_all(set: &WindowSet, flags: ContextFlags) -> Vec<FeatureVector> {
    use rayon::prelude::*;
    set.windows
        .par_iter()
        .map(|w| extract_features(w, flags))
        .collect()
}

/// Export the feature matrix and its missing mask side by side for audit.
pub fn write_feature_matrix_csv(
    rows: &[FeatureVector],
    flags: ContextFlags,
    features_path: &Path,
    mask_path: &Path,
) -> std::io::Result<()> {
    let names = feature_names(flags);
    let mut w = csv::Writer::from_path(features_path)?;
    w.write_record(&names)?;
    for row in rows {
        w.serialize(&row.values)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(mask_path)?;
    w.write_record(&names)?;
    for row in rows {
        w.serialize(row.missing.iter().map(|&m| u8::from(m)).collect::<Vec<_>>())?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ActivityEvent;
    use crate::windowing::Resolution;
    use chrono::NaiveDate;

    fn window_at(hour: u32) -> Window {
        Window {
            participant: "p1".into(),
            start: NaiveDate::from_ymd_opt(2019, 4, 1)
                .unwrap()
                .and_hms_opt(hour, 0, 0)
                .unwrap(),
            resolution: Resolution::H6,
            activity: Vec::new(),
            physiology: Vec::new(),
            label_next: Some(false),
            agitation_now: false,
            day_quarter: (hour / 6) as u8,
        }
    }

    fn add_events(window: &mut Window, spec: &[(u32, u32, Location)]) {
        for &(hour, minute, location) in spec {
            window.activity.push(ActivityEvent {
                location,
                timestamp: window.start
                    + chrono::Duration::seconds(i64::from(hour * 3600 + minute * 60)),
            });
        }
        window.activity.sort_by_key(|e| e.timestamp);
    }

    #[test]
    fn empty_window_all_stat_features_zero() {
        let window = window_at(6);
        let stats = statistical_activity_features(&window);
        assert!(stats.iter().all(|&v| v == 0.0));
        let ctx = contextual_activity_features(&window);
        assert_eq!(ctx[0], 0.0); // total-events
        assert_eq!(ctx[4], 0.0); // entropy
        assert_eq!(ctx[5], 0.0); // dominance (empty convention)
        assert!((ctx[3] - 1.0).abs() < 1e-12); // (0+1)/(0+1)
    }

    #[test]
    fn constant_hourly_series() {
        let mut window = window_at(6);
        let events: Vec<(u32, u32, Location)> = (0..6)
            .flat_map(|h| [(h, 10, Location::Hallway), (h, 40, Location::Hallway)])
            .collect();
        add_events(&mut window, &events);
        let stats = statistical_activity_features(&window);
        let base = Location::Hallway.index() * 4;
        assert_eq!(stats[base], 12.0); // sum
        assert_eq!(stats[base + 1], 2.0); // max
        assert_eq!(stats[base + 2], 2.0); // mean
        assert_eq!(stats[base + 3], 0.0); // std
    }

    #[test]
    fn hand_computed_population_std() {
        // kitchen hourly counts [0,0,3,1,0,2]
        let mut window = window_at(12);
        let mut events = Vec::new();
        for m in [5, 15, 25] {
            events.push((2u32, m, Location::Kitchen));
        }
        events.push((3, 30, Location::Kitchen));
        events.push((5, 10, Location::Kitchen));
        events.push((5, 50, Location::Kitchen));
        add_events(&mut window, &events);
        let stats = statistical_activity_features(&window);
        let base = Location::Kitchen.index() * 4;
        assert_eq!(stats[base], 6.0);
        assert_eq!(stats[base + 1], 3.0);
        assert!((stats[base + 2] - 1.0).abs() < 1e-12);
        assert!((stats[base + 3] - (4.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!((stats[base + 3] - 1.1547).abs() < 1e-4);
    }

    #[test]
    fn all_bedroom_contextual() {
        let mut window = window_at(0);
        add_events(
            &mut window,
            &[
                (0, 1, Location::Bedroom),
                (1, 2, Location::Bedroom),
                (3, 3, Location::Bedroom),
            ],
        );
        let ctx = contextual_activity_features(&window);
        assert_eq!(ctx[0], 3.0);
        assert_eq!(ctx[1], 1.0);
        assert!((ctx[2] - 0.125).abs() < 1e-12);
        assert_eq!(ctx[4], 0.0); // entropy
        assert_eq!(ctx[5], 1.0); // dominance
    }

    #[test]
    fn transitions_and_back_and_forth() {
        let mut window = window_at(0);
        add_events(
            &mut window,
            &[
                (0, 1, Location::Kitchen),
                (0, 2, Location::Hallway),
                (0, 3, Location::Kitchen),
            ],
        );
        let ctx = contextual_activity_features(&window);
        assert_eq!(ctx[7], 2.0); // num-transitions
        assert_eq!(ctx[6], 1.0); // back-and-forth
    }

    #[test]
    fn two_location_split_hand_case() {
        let mut window = window_at(0);
        add_events(
            &mut window,
            &[
                (0, 1, Location::Kitchen),
                (0, 2, Location::Kitchen),
                (1, 1, Location::Lounge),
                (1, 2, Location::Lounge),
            ],
        );
        let ctx = contextual_activity_features(&window);
        assert!((ctx[4] - 2.0f64.ln()).abs() < 1e-12);
        assert!((ctx[5] - 0.5).abs() < 1e-12);
        assert!((ctx[3] - 0.2).abs() < 1e-12); // (0+1)/(4+1)
    }

    #[test]
    fn physiology_mean_and_missing() {
        let mut window = window_at(6);
        for v in [70.0, 74.0] {
            window.physiology.push(crate::ingest::PhysiologyReading {
                measure: Measure::HeartRate,
                value: v,
                timestamp: window.start + chrono::Duration::minutes(30),
            });
        }
        let (values, missing) = physiology_features(&window);
        let hr = Measure::HeartRate.index();
        assert_eq!(values[hr], 72.0);
        assert!(!missing[hr]);
        assert!(missing[Measure::BodyWeight.index()]);
    }

    #[test]
    fn feature_counts_and_names() {
        assert_eq!(feature_names(ContextFlags::NONE).len(), 48);
        assert_eq!(feature_names(ContextFlags::BOTH).len(), 50);
        let only_dq = ContextFlags {
            day_quarter: true,
            agitation_now: false,
        };
        assert_eq!(feature_names(only_dq).len(), 49);

        let names = feature_names(ContextFlags::BOTH);
        assert_eq!(names[0], "back-door-count-sum");
        assert_eq!(
            names[Location::Hallway.index() * 4 + 3],
            "hallway-count-std"
        );
        assert_eq!(names[32], "total-events");
        assert_eq!(names[40], "body-temperature");
        assert_eq!(names[48], "day-quarter");
        assert_eq!(names[49], "agitation-now");

        let mut window = window_at(12);
        window.agitation_now = true;
        let fv = extract_features(&window, ContextFlags::BOTH);
        assert_eq!(fv.len(), 50);
        assert_eq!(fv.values[48], 2.0);
        assert_eq!(fv.values[49], 1.0);
    }

    #[test]
    fn entropy_bound_attained_iff_uniform() {
        let mut window = window_at(0);
        let uniform: Vec<(u32, u32, Location)> = Location::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| (0u32, i as u32, l))
            .collect();
        add_events(&mut window, &uniform);
        let ctx = contextual_activity_features(&window);
        assert!((ctx[4] - 8.0f64.ln()).abs() < 1e-12);

        let mut skewed = window_at(0);
        let mut events = uniform.clone();
        events.push((1, 0, Location::Kitchen));
        add_events(&mut skewed, &events);
        let ctx = contextual_activity_features(&skewed);
        assert!(ctx[4] < 8.0f64.ln());
    }
}
