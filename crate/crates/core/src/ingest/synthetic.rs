//! Synthetic cohort generator with the same schema as the public dataset.
//!
//! Per participant, locations follow a first-order Markov transition process
//! with diurnal intensity, physiology is baseline + circadian term + noise,
//! and agitation episodes are placed with the observed day-quarter weights.
//!
//! Each episode is preceded by a planted two-window pattern:
//! the window immediately before the episode carries a hallway/kitchen burst
//! (elevated transitions, back-and-forth count, hallway-count variability, and
//! heart rate), and the window before that carries a private-area prelude.
//! Identical bursts are also planted as decoys with no prelude and no episode,
//! so one window alone cannot fully separate the classes but two can.
//! All planted material scales with `precursor_strength`; at 0 nothing is
//! planted. Planted positions are recorded in a manifest for oracle tests.

use super::{
    ActivityEvent, CohortStore, IngestError, LabelEvent, LabelKind, Location, Measure,
    PhysiologyReading,
};
use chrono::{Days, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Episodes per participant-day in the public dataset (135 over 2,803 days).
pub const DEFAULT_AGITATION_RATE: f64 = 135.0 / 2803.0;

/// Day-quarter placement weights for agitation episodes.
pub const QUARTER_WEIGHTS: [f64; 4] = [0.0, 0.0815, 0.5852, 0.3333];

/// Decoy bursts occur at this multiple of the episode rate. The decoy mass
/// bounds how well any single-window model can rank, so multi-window models
/// have measurable headroom.
const DECOY_RATE_FACTOR: f64 = 10.0;

/// Diffuse hallway traffic occurs at this multiple of the episode rate.
const DIFFUSE_RATE_FACTOR: f64 = 5.0;

const BASE_DATE: (i32, u32, u32) = (2019, 4, 1);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub participants: usize,
    pub days: u32,
    pub seed: u64,
    /// Expected agitation episodes per participant-day.
    pub agitation_rate: f64,
    /// Scale of the planted pre-episode signal; 0 disables planting.
    pub precursor_strength: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            participants: 20,
            days: 60,
            seed: 7,
            agitation_rate: DEFAULT_AGITATION_RATE,
            precursor_strength: 1.0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), IngestError> {
        if self.participants < 1 {
            return Err(IngestError::InvalidSpec("participants must be >= 1".into()));
        }
        if self.days < 1 {
            return Err(IngestError::InvalidSpec("days must be >= 1".into()));
        }
        if !self.agitation_rate.is_finite() || self.agitation_rate < 0.0 {
            return Err(IngestError::InvalidSpec(
                "agitation_rate must be finite and >= 0".into(),
            ));
        }
        if !self.precursor_strength.is_finite() || self.precursor_strength < 0.0 {
            return Err(IngestError::InvalidSpec(
                "precursor_strength must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Where something was planted, at 6-hour window granularity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedWindow {
    pub participant: String,
    pub window_start: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEpisode {
    pub participant: String,
    pub timestamp: NaiveDateTime,
}

/// Ground truth of everything the generator planted; the oracle for tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub spec: SyntheticSpec,
    pub episodes: Vec<PlantedEpisode>,
    /// Bursts in the window immediately before each episode.
    pub precursor_windows: Vec<PlantedWindow>,
    /// Private-area preludes two windows before each episode.
    pub prelude_windows: Vec<PlantedWindow>,
    /// Bursts with no episode following.
    pub decoy_windows: Vec<PlantedWindow>,
    /// Evenly spread hallway traffic with no episode following; decorrelates
    /// plain counts from the label so concentration carries the signal.
    #[serde(default)]
    pub diffuse_windows: Vec<PlantedWindow>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: CohortStore,
    pub manifest: SyntheticManifest,
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(BASE_DATE.0, BASE_DATE.1, BASE_DATE.2).unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let l = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Hourly activity intensity multiplier over the day.
fn diurnal(hour: u32) -> f64 {
    match hour {
        0..=5 => 0.15,
        6..=11 => 1.3,
        12..=17 => 1.0,
        _ => 0.75,
    }
}

struct MarkovChain {
    /// Row-normalized transition probabilities.
    rows: [[f64; 8]; 8],
    state: Location,
}

impl MarkovChain {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        use Location::*;
        let mut weights = [[1.0f64; 8]; 8];
        for i in 0..8 {
            weights[i][i] += 4.0; // dwell
        }
        let hub = Hallway.index();
        for i in 0..8 {
            weights[i][hub] += 3.0;
            weights[hub][i] += 2.0;
        }
        let pairs = [
            (Kitchen, FridgeDoor, 3.0),
            (Kitchen, Lounge, 2.0),
            (Bathroom, Bedroom, 2.0),
            (Kitchen, BackDoor, 1.0),
            (Hallway, FrontDoor, 1.5),
        ];
        for (a, b, w) in pairs {
            weights[a.index()][b.index()] += w;
            weights[b.index()][a.index()] += w;
        }
        // per-participant jitter
        let mut rows = [[0.0f64; 8]; 8];
        for i in 0..8 {
            let mut total = 0.0;
            for j in 0..8 {
                rows[i][j] = weights[i][j] * rng.gen_range(0.6..1.5);
                total += rows[i][j];
            }
            for j in 0..8 {
                rows[i][j] /= total;
            }
        }
        Self {
            rows,
            state: Lounge,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Location {
        let row = &self.rows[self.state.index()];
        let mut u: f64 = rng.gen();
        for (j, p) in row.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                self.state = Location::ALL[j];
                return self.state;
            }
        }
        self.state = Location::Lounge;
        self.state
    }
}

struct MeasureProfile {
    measure: Measure,
    mean: f64,
    participant_sd: f64,
    circadian_amp: f64,
    noise_sd: f64,
}

const MEASURE_PROFILES: [MeasureProfile; 8] = [
    MeasureProfile {
        measure: Measure::BodyTemperature,
        mean: 36.8,
        participant_sd: 0.15,
        circadian_amp: 0.3,
        noise_sd: 0.1,
    },
    MeasureProfile {
        measure: Measure::BodyWeight,
        mean: 72.0,
        participant_sd: 9.0,
        circadian_amp: 0.1,
        noise_sd: 0.3,
    },
    MeasureProfile {
        measure: Measure::DiastolicBp,
        mean: 76.0,
        participant_sd: 6.0,
        circadian_amp: 2.0,
        noise_sd: 3.0,
    },
    MeasureProfile {
        measure: Measure::SystolicBp,
        mean: 124.0,
        participant_sd: 9.0,
        circadian_amp: 3.0,
        noise_sd: 5.0,
    },
    MeasureProfile {
        measure: Measure::HeartRate,
        mean: 72.0,
        participant_sd: 5.0,
        circadian_amp: 3.0,
        noise_sd: 3.0,
    },
    MeasureProfile {
        measure: Measure::MuscleMass,
        mean: 26.0,
        participant_sd: 4.0,
        circadian_amp: 0.0,
        noise_sd: 0.4,
    },
    MeasureProfile {
        measure: Measure::TotalBodyWater,
        mean: 45.0,
        participant_sd: 5.0,
        circadian_amp: 0.2,
        noise_sd: 0.5,
    },
    MeasureProfile {
        measure: Measure::SkinTemperature,
        mean: 33.5,
        participant_sd: 0.4,
        circadian_amp: 0.5,
        noise_sd: 0.3,
    },
];

/// 6-hour window key: (day index, quarter).
type WindowKey = (u32, u8);

fn window_start(day: u32, quarter: u8) -> NaiveDateTime {
    base_date()
        .checked_add_days(Days::new(u64::from(day)))
        .unwrap()
        .and_hms_opt(u32::from(quarter) * 6, 0, 0)
        .unwrap()
}

fn prev_window(key: WindowKey) -> Option<WindowKey> {
    match key {
        (0, 0) => None,
        (d, 0) => Some((d - 1, 3)),
        (d, q) => Some((d, q - 1)),
    }
}

/// Generate a deterministic synthetic cohort. Participant `i` draws from its
/// own RNG stream, so cohorts with more participants extend smaller ones.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort, IngestError> {
    spec.validate()?;
    let mut cohort = CohortStore::default();
    let mut manifest = SyntheticManifest {
        spec: spec.clone(),
        episodes: Vec::new(),
        precursor_windows: Vec::new(),
        prelude_windows: Vec::new(),
        decoy_windows: Vec::new(),
        diffuse_windows: Vec::new(),
    };

    for p in 0..spec.participants {
        let id = format!("sp{:03}", p);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(p as u64 + 1);
        generate_participant(spec, &id, &mut rng, &mut cohort, &mut manifest);
    }

    cohort.finalize();
    manifest
        .episodes
        .sort_by(|a, b| (&a.participant, a.timestamp).cmp(&(&b.participant, b.timestamp)));
    for list in [
        &mut manifest.precursor_windows,
        &mut manifest.prelude_windows,
        &mut manifest.decoy_windows,
        &mut manifest.diffuse_windows,
    ] {
        list.sort();
    }
    Ok(SyntheticCohort { cohort, manifest })
}

fn generate_participant(
    spec: &SyntheticSpec,
    id: &str,
    rng: &mut ChaCha8Rng,
    cohort: &mut CohortStore,
    manifest: &mut SyntheticManifest,
) {
    let strength = spec.precursor_strength;
    let activity_scale: f64 = rng.gen_range(0.7..1.4);
    let mut chain = MarkovChain::new(rng);
    let baselines: Vec<f64> = MEASURE_PROFILES
        .iter()
        .map(|mp| mp.mean + mp.participant_sd * gaussian(rng))
        .collect();
    let phase: f64 = rng.gen_range(0.0..24.0);

    // --- episode placement (days >= 1 so both pattern windows exist) ---
    let mut episodes: Vec<(WindowKey, NaiveDateTime)> = Vec::new();
    for day in 1..spec.days {
        for quarter in 1..4u8 {
            let p = (spec.agitation_rate * QUARTER_WEIGHTS[quarter as usize]).min(1.0);
            if rng.gen::<f64>() < p {
                let sec = rng.gen_range(0..(6 * 3600));
                let ts = window_start(day, quarter) + chrono::Duration::seconds(i64::from(sec));
                episodes.push(((day, quarter), ts));
            }
        }
    }

    let mut episode_windows: Vec<WindowKey> = episodes.iter().map(|(w, _)| *w).collect();
    episode_windows.sort_unstable();
    let mut precursors: Vec<WindowKey> = Vec::new();
    let mut preludes: Vec<WindowKey> = Vec::new();
    for (w, _) in &episodes {
        let pre = prev_window(*w).expect("episodes start on day 1");
        precursors.push(pre);
        if let Some(pp) = prev_window(pre) {
            preludes.push(pp);
        }
    }

    // --- decoy placement: same burst, no prelude, no episode after ---
    let mut decoys: Vec<WindowKey> = Vec::new();
    let mut diffuse: Vec<WindowKey> = Vec::new();
    if strength > 0.0 {
        for day in 0..spec.days {
            for quarter in 0..4u8 {
                // decoys mimic the quarter distribution of true precursors
                let next_q = (quarter + 1) % 4;
                let weight = QUARTER_WEIGHTS[next_q as usize];
                let key = (day, quarter);
                let next = if quarter == 3 {
                    (day + 1, 0)
                } else {
                    (day, quarter + 1)
                };
                let clashes = episode_windows.binary_search(&next).is_ok()
                    || episode_windows.binary_search(&key).is_ok()
                    || precursors.contains(&key)
                    || preludes.contains(&key)
                    || next.0 >= spec.days;
                let p_burst = (DECOY_RATE_FACTOR * spec.agitation_rate * weight).min(1.0);
                if rng.gen::<f64>() < p_burst && !clashes {
                    decoys.push(key);
                }
                let p_diffuse = (DIFFUSE_RATE_FACTOR * spec.agitation_rate * weight).min(1.0);
                if rng.gen::<f64>() < p_diffuse && !clashes && !decoys.contains(&key) {
                    diffuse.push(key);
                }
            }
        }
    }

    // --- base activity: Markov chain with diurnal Poisson intensity ---
    let mut activity: Vec<ActivityEvent> = Vec::new();
    for day in 0..spec.days {
        let date = base_date()
            .checked_add_days(Days::new(u64::from(day)))
            .unwrap();
        for hour in 0..24u32 {
            let lambda = 6.0 * activity_scale * diurnal(hour);
            let count = poisson(rng, lambda);
            let mut seconds: Vec<u32> = (0..count).map(|_| rng.gen_range(0..3600)).collect();
            seconds.sort_unstable();
            for s in seconds {
                let location = chain.step(rng);
                let timestamp = date.and_hms_opt(hour, s / 60, s % 60).unwrap();
                activity.push(ActivityEvent {
                    location,
                    timestamp,
                });
            }
        }
    }

    // --- base physiology: two slots per day per measure ---
    let mut physiology: Vec<PhysiologyReading> = Vec::new();
    for day in 0..spec.days {
        let date = base_date()
            .checked_add_days(Days::new(u64::from(day)))
            .unwrap();
        for (mi, mp) in MEASURE_PROFILES.iter().enumerate() {
            for slot_hour in [8u32, 19u32] {
                if rng.gen::<f64>() > 0.85 {
                    continue;
                }
                let hour = slot_hour.saturating_add_signed(rng.gen_range(-1i32..=1));
                let minute = rng.gen_range(0..60);
                let circadian = mp.circadian_amp
                    * (std::f64::consts::TAU * (f64::from(hour) - phase) / 24.0).sin();
                let value = baselines[mi] + circadian + mp.noise_sd * gaussian(rng);
                physiology.push(PhysiologyReading {
                    measure: mp.measure,
                    value,
                    timestamp: date.and_hms_opt(hour.min(23), minute, 0).unwrap(),
                });
            }
        }
    }

    // --- planted bursts, preludes and diffuse traffic ---
    if strength > 0.0 {
        for key in precursors.iter().chain(decoys.iter()) {
            plant_burst(
                rng,
                *key,
                strength,
                &baselines,
                &mut activity,
                &mut physiology,
            );
        }
        for key in &preludes {
            plant_prelude(rng, *key, strength, &mut activity);
        }
        for key in &diffuse {
            plant_diffuse(rng, *key, strength, &mut activity);
        }
    }

    // --- store ---
    let data = cohort.entry(id);
    data.activity.append(&mut activity);
    data.physiology.append(&mut physiology);
    for (_, ts) in &episodes {
        data.labels.push(LabelEvent {
            kind: LabelKind::Agitation,
            timestamp: *ts,
        });
    }

    for (w, ts) in &episodes {
        manifest.episodes.push(PlantedEpisode {
            participant: id.to_string(),
            timestamp: *ts,
        });
        let pre = prev_window(*w).unwrap();
        manifest.precursor_windows.push(PlantedWindow {
            participant: id.to_string(),
            window_start: window_start(pre.0, pre.1),
        });
        if let Some(pp) = prev_window(pre) {
            manifest.prelude_windows.push(PlantedWindow {
                participant: id.to_string(),
                window_start: window_start(pp.0, pp.1),
            });
        }
    }
    for key in &decoys {
        manifest.decoy_windows.push(PlantedWindow {
            participant: id.to_string(),
            window_start: window_start(key.0, key.1),
        });
    }
    for key in &diffuse {
        manifest.diffuse_windows.push(PlantedWindow {
            participant: id.to_string(),
            window_start: window_start(key.0, key.1),
        });
    }
}

/// Hallway-centred pacing burst concentrated in a single hour: raises
/// hallway hourly-count variability, num-transitions and back-and-forth
/// count, plus two elevated heart-rate readings. Alternation partners are
/// busy rooms only, so the partner bump vanishes into baseline traffic.
fn plant_burst(
    rng: &mut ChaCha8Rng,
    key: WindowKey,
    strength: f64,
    baselines: &[f64],
    activity: &mut Vec<ActivityEvent>,
    physiology: &mut Vec<PhysiologyReading>,
) {
    const PARTNERS: [Location; 2] = [Location::Kitchen, Location::Lounge];
    let start = window_start(key.0, key.1);
    let pairs = (strength * 7.0).round() as usize;
    let extra_hallway = (strength * 8.0).round() as usize;
    let burst_hour = rng.gen_range(0..6u32);
    let base_sec = rng.gen_range(0..600u32);

    let mut t = start + chrono::Duration::seconds(i64::from(burst_hour * 3600 + base_sec));
    for i in 0..pairs * 2 {
        let location = if i % 2 == 0 {
            Location::Hallway
        } else {
            PARTNERS[(i / 2) % PARTNERS.len()]
        };
        activity.push(ActivityEvent {
            location,
            timestamp: t,
        });
        t += chrono::Duration::seconds(i64::from(rng.gen_range(20..60u32)));
    }
    for _ in 0..extra_hallway {
        activity.push(ActivityEvent {
            location: Location::Hallway,
            timestamp: t,
        });
        t += chrono::Duration::seconds(i64::from(rng.gen_range(15..50u32)));
    }

    let hr_base = baselines[Measure::HeartRate.index()];
    for _ in 0..2 {
        let sec = rng.gen_range(0..(6 * 3600 - 1)) as i64;
        physiology.push(PhysiologyReading {
            measure: Measure::HeartRate,
            value: hr_base + 12.0 * strength + 2.0 * gaussian(rng),
            timestamp: start + chrono::Duration::seconds(sec),
        });
    }
}

/// The same hallway mass as a burst but spread evenly over the window's
/// hours, with no transitions pattern and no heart-rate elevation.
fn plant_diffuse(
    rng: &mut ChaCha8Rng,
    key: WindowKey,
    strength: f64,
    activity: &mut Vec<ActivityEvent>,
) {
    let start = window_start(key.0, key.1);
    let per_hour = (strength * 2.5).round() as usize;
    for hour in 0..6u32 {
        for _ in 0..per_hour {
            let sec = rng.gen_range(0..3600u32);
            activity.push(ActivityEvent {
                location: Location::Hallway,
                timestamp: start + chrono::Duration::seconds(i64::from(hour * 3600 + sec)),
            });
        }
    }
}

/// Private-area prelude: bathroom/bedroom alternation two windows ahead of
/// the episode. Only visible to multi-window models.
fn plant_prelude(
    rng: &mut ChaCha8Rng,
    key: WindowKey,
    strength: f64,
    activity: &mut Vec<ActivityEvent>,
) {
    let start = window_start(key.0, key.1);
    let pairs = (strength * 8.0).round() as usize;
    let hour = rng.gen_range(0..6u32);
    let base_sec = rng.gen_range(0..1800u32);
    let mut t = start + chrono::Duration::seconds(i64::from(hour * 3600 + base_sec));
    for i in 0..pairs * 2 {
        let location = if i % 2 == 0 {
            Location::Bathroom
        } else {
            Location::Bedroom
        };
        activity.push(ActivityEvent {
            location,
            timestamp: t,
        });
        t += chrono::Duration::seconds(i64::from(rng.gen_range(25..80u32)));
    }
}

/// Write the three CSVs plus `manifest.json` into `dir`.
pub fn write_synthetic(cohort: &SyntheticCohort, dir: &Path) -> Result<(), IngestError> {
    super::write_cohort_csv(&cohort.cohort, dir)?;
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&cohort.manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|source| IngestError::Io {
        file: path.display().to_string(),
        source,
    })
}
