//! Cross-validation split plans: stratified 5-fold and
//! leave-one-participant-out.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const STRATIFIED_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    Stratified5Fold,
    Lopo,
}

impl SplitScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitScheme::Stratified5Fold => "stratified-5-fold",
            SplitScheme::Lopo => "lopo",
        }
    }
}

/// What the splitter needs to know about one sample.
#[derive(Debug, Clone)]
pub struct SampleMeta {
    pub participant: String,
    pub label: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fold {
    pub tag: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("need at least 2 samples to split (got {0})")]
    TooFewSamples(usize),
    #[error("stratified 5-fold needs at least 5 positives (got {0})")]
    TooFewPositives(usize),
}

/// Build a split plan. Stratified folds are assigned at sample level unless
/// `group_by_participant` keeps each participant's samples in one fold.
pub fn make_splits(
    samples: &[SampleMeta],
    scheme: SplitScheme,
    seed: u64,
    group_by_participant: bool,
) -> Result<SplitPlan, SplitError> {
    if samples.len() < 2 {
        return Err(SplitError::TooFewSamples(samples.len()));
    }
    let folds = match scheme {
        SplitScheme::Stratified5Fold => {
            if group_by_participant {
                grouped_stratified(samples, seed)?
            } else {
                sample_stratified(samples, seed)?
            }
        }
        SplitScheme::Lopo => lopo(samples),
    };
    Ok(SplitPlan {
        scheme,
        seed,
        folds,
    })
}

fn complement(test: &[usize], n: usize) -> Vec<usize> {
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    (0..n).filter(|&i| !in_test[i]).collect()
}

fn sample_stratified(samples: &[SampleMeta], seed: u64) -> Result<Vec<Fold>, SplitError> {
    let mut pos: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label).collect();
    let mut neg: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].label).collect();
    if pos.len() < STRATIFIED_FOLDS {
        return Err(SplitError::TooFewPositives(pos.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); STRATIFIED_FOLDS];
    for (i, idx) in pos.iter().enumerate() {
        tests[i % STRATIFIED_FOLDS].push(*idx);
    }
    for (i, idx) in neg.iter().enumerate() {
        tests[i % STRATIFIED_FOLDS].push(*idx);
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(k, mut test)| {
            test.sort_unstable();
            Fold {
                tag: format!("fold-{k}"),
                train: complement(&test, samples.len()),
                test,
            }
        })
        .collect())
}

/// Whole participants per fold, greedily balancing positive counts.
fn grouped_stratified(samples: &[SampleMeta], seed: u64) -> Result<Vec<Fold>, SplitError> {
    let total_pos = samples.iter().filter(|s| s.label).count();
    if total_pos < STRATIFIED_FOLDS {
        return Err(SplitError::TooFewPositives(total_pos));
    }
    let mut by_participant: BTreeMap<&str, (Vec<usize>, usize)> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let entry = by_participant.entry(s.participant.as_str()).or_default();
        entry.0.push(i);
        entry.1 += usize::from(s.label);
    }
    let mut groups: Vec<(&str, Vec<usize>, usize)> = by_participant
        .into_iter()
        .map(|(p, (idx, pos))| (p, idx, pos))
        .collect();
    // seed only breaks ties among equally loaded folds
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    groups.sort_by(|a, b| (b.2, b.1.len()).cmp(&(a.2, a.1.len())));

    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); STRATIFIED_FOLDS];
    let mut pos_load = [0usize; STRATIFIED_FOLDS];
    let mut size_load = [0usize; STRATIFIED_FOLDS];
    for (_, idx, pos) in groups {
        let target = (0..STRATIFIED_FOLDS)
            .min_by_key(|&k| (pos_load[k], size_load[k]))
            .unwrap();
        pos_load[target] += pos;
        size_load[target] += idx.len();
        tests[target].extend(idx);
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(k, mut test)| {
            test.sort_unstable();
            Fold {
                tag: format!("fold-{k}"),
                train: complement(&test, samples.len()),
                test,
            }
        })
        .collect())
}

fn lopo(samples: &[SampleMeta]) -> Vec<Fold> {
    let mut by_participant: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_participant
            .entry(s.participant.as_str())
            .or_default()
            .push(i);
    }
    by_participant
        .into_iter()
        .map(|(participant, test)| Fold {
            tag: participant.to_string(),
            train: complement(&test, samples.len()),
            test,
        })
        .collect()
}
