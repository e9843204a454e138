//! Experiment orchestration: per fold, fit the preprocessor on training rows,
//! apply the imbalance strategy to the training fold only, fit, score the
//! test fold, and pool out-of-fold scores into one report per model x scheme.

use super::metrics::{auc_pr, auc_roc, MetricsError};
use super::splits::{make_splits, SampleMeta, SplitError, SplitScheme};
use crate::config::{ExperimentPlan, Formulation, Imbalance, ModelEntry};
use crate::features::{
    apply_preprocessor, extract_all, feature_names, fit_preprocessor, FeatureError, FeatureVector,
    PreprocessorState,
};
use crate::ingest::CohortStore;
use crate::models::anomaly::{fit_anomaly, AnomalySpec};
use crate::models::sequence::KernelBank;
use crate::models::tabular::{fit_classifier, smote_oversample, ClassifierSpec, FittedClassifier};
use crate::models::ModelError;
use crate::windowing::{build_windows, make_sequences, WindowSet};
use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

pub const CLASSIFIER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("split error: {0}")]
    Split(#[from] SplitError),
    #[error("feature error: {0}")]
    Feature(#[from] FeatureError),
    #[error("model {model} failed on fold {fold}: {source}")]
    Model {
        model: String,
        fold: String,
        #[source]
        source: ModelError,
    },
    #[error("metric error: {0}")]
    Metrics(#[from] MetricsError),
    #[error("no supervised samples at this resolution")]
    NoSamples,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub tag: String,
    pub train_size: usize,
    pub test_size: usize,
    pub test_positives: usize,
    /// Per-fold ranking metrics are undefined when a test fold is
    /// single-class (common under LOPO); pooled metrics never are.
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub smote_duplication_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PooledMetrics {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub code_version: String,
    pub config_hash: Option<String>,
    /// Feature names that were missing in every training row of some fold.
    pub all_missing_features: Vec<String>,
}

/// One model evaluated under one CV scheme.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub version: u32,
    pub model: String,
    pub model_spec: serde_json::Value,
    pub scheme: SplitScheme,
    pub formulation: String,
    pub resolution_hours: u32,
    pub sequence_length: usize,
    pub context_day_quarter: bool,
    pub context_agitation_now: bool,
    pub imbalance: String,
    pub seed: u64,
    pub samples: usize,
    pub positives: usize,
    /// Windows excluded because no next window exists inside the span.
    pub excluded_no_next: usize,
    pub folds: Vec<FoldMetrics>,
    pub pooled: PooledMetrics,
    pub provenance: Provenance,
}

/// Report plus the pooled out-of-fold scores for plot/score exports.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Participant and last-window start per sample, for score exports.
    pub sample_participant: Vec<String>,
    pub sample_start: Vec<NaiveDateTime>,
}

struct SampleTable {
    metas: Vec<SampleMeta>,
    labels: Vec<bool>,
    /// Window indices backing each sample (length = sequence_length).
    windows_of: Vec<Vec<usize>>,
    participants: Vec<String>,
    starts: Vec<NaiveDateTime>,
}

fn build_samples(set: &WindowSet, plan: &ExperimentPlan) -> SampleTable {
    let n = match plan.formulation {
        Formulation::SequenceBinary => plan.sequence_length,
        _ => 1,
    };
    let sequences = make_sequences(set, n);
    let mut metas = Vec::with_capacity(sequences.len());
    let mut labels = Vec::with_capacity(sequences.len());
    let mut windows_of = Vec::with_capacity(sequences.len());
    let mut participants = Vec::with_capacity(sequences.len());
    let mut starts = Vec::with_capacity(sequences.len());
    for s in sequences {
        let last = *s.window_indices.last().unwrap();
        metas.push(SampleMeta {
            participant: s.participant.clone(),
            label: s.label,
        });
        labels.push(s.label);
        participants.push(s.participant);
        starts.push(set.windows[last].start);
        windows_of.push(s.window_indices);
    }
    SampleTable {
        metas,
        labels,
        windows_of,
        participants,
        starts,
    }
}

struct FoldOutcome {
    tag: String,
    train_size: usize,
    test_size: usize,
    /// (sample index, score, flagged) per test sample.
    scored: Vec<(usize, f64, bool)>,
    smote_fallback: bool,
    all_missing: Vec<usize>,
}

/// Run one experiment plan over a cohort: one report per model per scheme,
/// in config order. Deterministic given plan + cohort.
pub fn run_experiment(
    cohort: &CohortStore,
    plan: &ExperimentPlan,
    config_hash: Option<String>,
) -> Result<Vec<RunOutcome>, EvalError> {
    let set = build_windows(cohort, plan.resolution);
    let rows = extract_all(&set, plan.context);
    let samples = build_samples(&set, plan);
    if samples.metas.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let positives = samples.labels.iter().filter(|&&l| l).count();

    let mut outcomes = Vec::new();
    for entry in &plan.models {
        // the kernel bank is data-independent; one bank serves all folds
        let bank = match entry {
            ModelEntry::Sequence { rocket, .. } => Some(KernelBank::new(
                *rocket,
                plan.sequence_length,
                plan.context.feature_count(),
            )),
            _ => None,
        };
        for &scheme in &plan.splits {
            let split = make_splits(
                &samples.metas,
                scheme,
                plan.seed,
                plan.group_folds_by_participant,
            )?;
            let fold_outcomes: Vec<Result<FoldOutcome, EvalError>> = split
                .folds
                .par_iter()
                .map(|fold| run_fold(entry, plan, &rows, &samples, fold, bank.as_ref()))
                .collect();

            let mut folds = Vec::new();
            let mut scores = vec![f64::NAN; samples.metas.len()];
            let mut flags = vec![false; samples.metas.len()];
            let mut seen = vec![false; samples.metas.len()];
            let mut all_missing: Vec<usize> = Vec::new();
            for outcome in fold_outcomes {
                let outcome = outcome?;
                let mut test_labels = Vec::with_capacity(outcome.scored.len());
                let mut test_scores = Vec::with_capacity(outcome.scored.len());
                for &(idx, score, flag) in &outcome.scored {
                    assert!(!seen[idx], "out-of-fold discipline violated");
                    seen[idx] = true;
                    scores[idx] = score;
                    flags[idx] = flag;
                    test_labels.push(samples.labels[idx]);
                    test_scores.push(score);
                }
                all_missing.extend(&outcome.all_missing);
                let fold_positive = test_labels.iter().filter(|&&l| l).count();
                let single_class = fold_positive == 0 || fold_positive == test_labels.len();
                let (sens, spec) = if single_class {
                    (None, None)
                } else {
                    let (tp, fn_, tn, fp) = confusion(&outcome.scored, &samples.labels);
                    (
                        Some(tp as f64 / (tp + fn_) as f64),
                        Some(tn as f64 / (tn + fp) as f64),
                    )
                };
                folds.push(FoldMetrics {
                    tag: outcome.tag,
                    train_size: outcome.train_size,
                    test_size: outcome.test_size,
                    test_positives: fold_positive,
                    auc_roc: if single_class {
                        None
                    } else {
                        Some(auc_roc(&test_scores, &test_labels)?)
                    },
                    auc_pr: if fold_positive == 0 {
                        None
                    } else {
                        Some(auc_pr(&test_scores, &test_labels)?)
                    },
                    sensitivity: sens,
                    specificity: spec,
                    smote_duplication_fallback: outcome.smote_fallback,
                });
            }
            assert!(seen.iter().all(|&s| s), "every sample scored exactly once");

            // pooled (micro) metrics over concatenated out-of-fold scores
            let pooled_auc_roc = auc_roc(&scores, &samples.labels)?;
            let pooled_auc_pr = auc_pr(&scores, &samples.labels)?;
            let mut tp = 0usize;
            let mut fn_ = 0usize;
            let mut tn = 0usize;
            let mut fp = 0usize;
            for i in 0..samples.labels.len() {
                match (samples.labels[i], flags[i]) {
                    (true, true) => tp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => tn += 1,
                    (false, true) => fp += 1,
                }
            }
            all_missing.sort_unstable();
            all_missing.dedup();
            let names = feature_names(plan.context);

            let report = EvalReport {
                version: 1,
                model: entry.label(),
                model_spec: serde_json::to_value(entry).expect("model spec serializes"),
                scheme,
                formulation: plan.formulation.as_str().to_string(),
                resolution_hours: plan.resolution.hours(),
                sequence_length: plan.sequence_length,
                context_day_quarter: plan.context.day_quarter,
                context_agitation_now: plan.context.agitation_now,
                imbalance: plan.imbalance.as_str().to_string(),
                seed: plan.seed,
                samples: samples.metas.len(),
                positives,
                excluded_no_next: set.excluded_no_next,
                folds,
                pooled: PooledMetrics {
                    auc_roc: pooled_auc_roc,
                    auc_pr: pooled_auc_pr,
                    sensitivity: tp as f64 / (tp + fn_).max(1) as f64,
                    specificity: tn as f64 / (tn + fp).max(1) as f64,
                },
                provenance: Provenance {
                    code_version: env!("CARGO_PKG_VERSION").to_string(),
                    config_hash: config_hash.clone(),
                    all_missing_features: all_missing.iter().map(|&j| names[j].clone()).collect(),
                },
            };
            outcomes.push(RunOutcome {
                report,
                scores: scores.clone(),
                labels: samples.labels.clone(),
                sample_participant: samples.participants.clone(),
                sample_start: samples.starts.clone(),
            });
        }
    }
    Ok(outcomes)
}

fn confusion(scored: &[(usize, f64, bool)], labels: &[bool]) -> (usize, usize, usize, usize) {
    let mut tp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    let mut fp = 0;
    for &(idx, _, flag) in scored {
        match (labels[idx], flag) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    (tp, fn_, tn, fp)
}

fn model_err(entry: &ModelEntry, fold: &str) -> impl Fn(ModelError) -> EvalError {
    let model = entry.label();
    let fold = fold.to_string();
    move |source| EvalError::Model {
        model: model.clone(),
        fold: fold.clone(),
        source,
    }
}

fn run_fold(
    entry: &ModelEntry,
    plan: &ExperimentPlan,
    rows: &[FeatureVector],
    samples: &SampleTable,
    fold: &super::splits::Fold,
    bank: Option<&KernelBank>,
) -> Result<FoldOutcome, EvalError> {
    // deterministic per-fold seed for SMOTE draws
    let fold_seed = plan
        .seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(fold.tag.bytes().map(u64::from).sum::<u64>());

    match entry {
        ModelEntry::Tabular(spec) => run_tabular_fold(spec, plan, rows, samples, fold, fold_seed),
        ModelEntry::Anomaly(spec) => run_anomaly_fold(spec, entry, plan, rows, samples, fold),
        ModelEntry::Sequence { head, .. } => run_sequence_fold(
            bank.expect("bank built"),
            head,
            entry,
            plan,
            rows,
            samples,
            fold,
        ),
    }
}

/// Train-fold feature rows -> preprocessor -> imbalance -> fit -> score test.
fn run_tabular_fold(
    spec: &ClassifierSpec,
    plan: &ExperimentPlan,
    rows: &[FeatureVector],
    samples: &SampleTable,
    fold: &super::splits::Fold,
    fold_seed: u64,
) -> Result<FoldOutcome, EvalError> {
    let entry = ModelEntry::Tabular(spec.clone());
    let window_of = |sample: usize| samples.windows_of[sample][0];

    let train_rows: Vec<FeatureVector> = fold
        .train
        .iter()
        .map(|&i| rows[window_of(i)].clone())
        .collect();
    let state = fit_preprocessor(&train_rows)?;
    let mut x_train = apply_preprocessor(&state, &train_rows)?;
    let test_rows: Vec<FeatureVector> = fold
        .test
        .iter()
        .map(|&i| rows[window_of(i)].clone())
        .collect();
    let x_test = apply_preprocessor(&state, &test_rows)?;

    let mut y_train: Vec<bool> = fold.train.iter().map(|&i| samples.labels[i]).collect();
    let mut smote_fallback = false;
    if let Imbalance::Smote { k } = plan.imbalance {
        let out = smote_oversample(&x_train, &y_train, k, fold_seed)
            .map_err(model_err(&entry, &fold.tag))?;
        smote_fallback = out.duplication_fallback;
        x_train = out.rows;
        y_train = out.labels;
    }

    let model =
        fit_classifier(spec, &x_train, &y_train, None).map_err(model_err(&entry, &fold.tag))?;
    let scores = model
        .predict_proba(&x_test)
        .map_err(model_err(&entry, &fold.tag))?;

    Ok(FoldOutcome {
        tag: fold.tag.clone(),
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        scored: fold
            .test
            .iter()
            .zip(&scores)
            .map(|(&i, &s)| (i, s, s > CLASSIFIER_THRESHOLD))
            .collect(),
        smote_fallback,
        all_missing: state.all_missing,
    })
}

/// Anomaly models fit exclusively on the normal subset of the training fold;
/// the preprocessor follows the same discipline.
fn run_anomaly_fold(
    spec: &AnomalySpec,
    entry: &ModelEntry,
    _plan: &ExperimentPlan,
    rows: &[FeatureVector],
    samples: &SampleTable,
    fold: &super::splits::Fold,
) -> Result<FoldOutcome, EvalError> {
    let window_of = |sample: usize| samples.windows_of[sample][0];
    let normal_train: Vec<usize> = fold
        .train
        .iter()
        .copied()
        .filter(|&i| !samples.labels[i])
        .collect();
    debug_assert!(normal_train.iter().all(|&i| !samples.labels[i]));

    let train_rows: Vec<FeatureVector> = normal_train
        .iter()
        .map(|&i| rows[window_of(i)].clone())
        .collect();
    let state = fit_preprocessor(&train_rows)?;
    let x_train = apply_preprocessor(&state, &train_rows)?;
    let test_rows: Vec<FeatureVector> = fold
        .test
        .iter()
        .map(|&i| rows[window_of(i)].clone())
        .collect();
    let x_test = apply_preprocessor(&state, &test_rows)?;

    let model = fit_anomaly(spec, &x_train).map_err(model_err(entry, &fold.tag))?;
    let (scores, flags) = model
        .score_and_flag(&x_test)
        .map_err(model_err(entry, &fold.tag))?;

    Ok(FoldOutcome {
        tag: fold.tag.clone(),
        train_size: normal_train.len(),
        test_size: fold.test.len(),
        scored: fold
            .test
            .iter()
            .zip(scores.iter().zip(&flags))
            .map(|(&i, (&s, &f))| (i, s, f))
            .collect(),
        smote_fallback: false,
        all_missing: state.all_missing,
    })
}

/// Preprocess window rows on the training windows, build n-step series, fit
/// the kernel head on transformed training samples, score test samples.
fn run_sequence_fold(
    bank: &KernelBank,
    head: &ClassifierSpec,
    entry: &ModelEntry,
    plan: &ExperimentPlan,
    rows: &[FeatureVector],
    samples: &SampleTable,
    fold: &super::splits::Fold,
) -> Result<FoldOutcome, EvalError> {
    // preprocessor fits on the union of training samples' windows
    let mut train_windows: Vec<usize> = fold
        .train
        .iter()
        .flat_map(|&i| samples.windows_of[i].iter().copied())
        .collect();
    train_windows.sort_unstable();
    train_windows.dedup();
    let train_rows: Vec<FeatureVector> = train_windows.iter().map(|&w| rows[w].clone()).collect();
    let state = fit_preprocessor(&train_rows)?;

    let series_for = |sample_indices: &[usize]| -> Result<Vec<Vec<Vec<f64>>>, EvalError> {
        let mut out = Vec::with_capacity(sample_indices.len());
        for &i in sample_indices {
            let fvs: Vec<FeatureVector> = samples.windows_of[i]
                .iter()
                .map(|&w| rows[w].clone())
                .collect();
            out.push(apply_preprocessor(&state, &fvs)?);
        }
        Ok(out)
    };

    let train_series = series_for(&fold.train)?;
    let y_train: Vec<bool> = fold.train.iter().map(|&i| samples.labels[i]).collect();
    let mut x_train = bank
        .transform_batch(&train_series)
        .map_err(model_err(entry, &fold.tag))?;

    let mut y_fit = y_train;
    let mut smote_fallback = false;
    if let Imbalance::Smote { k } = plan.imbalance {
        let fold_seed = plan
            .seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(fold.tag.bytes().map(u64::from).sum::<u64>());
        let out = smote_oversample(&x_train, &y_fit, k, fold_seed)
            .map_err(model_err(entry, &fold.tag))?;
        smote_fallback = out.duplication_fallback;
        x_train = out.rows;
        y_fit = out.labels;
    }
    let model =
        fit_classifier(head, &x_train, &y_fit, None).map_err(model_err(entry, &fold.tag))?;

    let test_series = series_for(&fold.test)?;
    let x_test = bank
        .transform_batch(&test_series)
        .map_err(model_err(entry, &fold.tag))?;
    let scores = model
        .predict_proba(&x_test)
        .map_err(model_err(entry, &fold.tag))?;

    Ok(FoldOutcome {
        tag: fold.tag.clone(),
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        scored: fold
            .test
            .iter()
            .zip(&scores)
            .map(|(&i, &s)| (i, s, s > CLASSIFIER_THRESHOLD))
            .collect(),
        smote_fallback,
        all_missing: state.all_missing,
    })
}

/// Artifact bundling everything `explain` needs to score new windows.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub model: String,
    pub resolution_hours: u32,
    pub context_day_quarter: bool,
    pub context_agitation_now: bool,
    pub feature_names: Vec<String>,
    pub preprocessor: PreprocessorState,
    pub classifier: FittedClassifier,
}

/// Fit one tabular model on the full sample set (no CV) for audit and
/// attribution; sequence and anomaly entries have no tabular artifact.
pub fn fit_full_artifact(
    cohort: &CohortStore,
    plan: &ExperimentPlan,
    spec: &ClassifierSpec,
) -> Result<ModelArtifact, EvalError> {
    let set = build_windows(cohort, plan.resolution);
    let rows = extract_all(&set, plan.context);
    let labeled = set.labeled_indices();
    if labeled.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let entry = ModelEntry::Tabular(spec.clone());
    let feature_rows: Vec<FeatureVector> = labeled.iter().map(|&i| rows[i].clone()).collect();
    let labels: Vec<bool> = labeled
        .iter()
        .map(|&i| set.windows[i].label_next.unwrap())
        .collect();
    let state = fit_preprocessor(&feature_rows)?;
    let mut x = apply_preprocessor(&state, &feature_rows)?;
    let mut y = labels;
    if let Imbalance::Smote { k } = plan.imbalance {
        let out = smote_oversample(&x, &y, k, plan.seed).map_err(model_err(&entry, "full"))?;
        x = out.rows;
        y = out.labels;
    }
    let classifier = fit_classifier(spec, &x, &y, None).map_err(model_err(&entry, "full"))?;
    Ok(ModelArtifact {
        version: 1,
        model: spec.kind.name().to_string(),
        resolution_hours: plan.resolution.hours(),
        context_day_quarter: plan.context.day_quarter,
        context_agitation_now: plan.context.agitation_now,
        feature_names: feature_names(plan.context),
        preprocessor: state,
        classifier,
    })
}

// ---------------------------------------------------------------------------
// report writing
// ---------------------------------------------------------------------------

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.model.replace('+', "-"), self.scheme.as_str())
    }
}

/// Flat per-fold CSV across a set of reports.
pub fn write_folds_csv(reports: &[&EvalReport], path: &Path) -> Result<(), EvalError> {
    let io_err = |source: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(std::io::Error::other(e)))?;
    w.write_record([
        "model",
        "scheme",
        "fold",
        "train_size",
        "test_size",
        "test_positives",
        "auc_roc",
        "auc_pr",
        "sensitivity",
        "specificity",
    ])
    .map_err(|e| io_err(std::io::Error::other(e)))?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.model.as_str(),
                r.scheme.as_str(),
                f.tag.as_str(),
                &f.train_size.to_string(),
                &f.test_size.to_string(),
                &f.test_positives.to_string(),
                &fmt(f.auc_roc),
                &fmt(f.auc_pr),
                &fmt(f.sensitivity),
                &fmt(f.specificity),
            ])
            .map_err(|e| io_err(std::io::Error::other(e)))?;
        }
    }
    w.flush().map_err(io_err)
}

/// ROC and PR curve points of the pooled scores, for external plotting.
pub fn write_plot_data_csv(outcome: &RunOutcome, path: &Path) -> Result<(), EvalError> {
    let io_err = |source: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(std::io::Error::other(e)))?;
    w.write_record(["curve", "x", "y"])
        .map_err(|e| io_err(std::io::Error::other(e)))?;
    for (x, y) in super::metrics::roc_curve_points(&outcome.scores, &outcome.labels) {
        w.write_record(["roc", &format!("{x:.6}"), &format!("{y:.6}")])
            .map_err(|e| io_err(std::io::Error::other(e)))?;
    }
    for (x, y) in super::metrics::pr_curve_points(&outcome.scores, &outcome.labels) {
        w.write_record(["pr", &format!("{x:.6}"), &format!("{y:.6}")])
            .map_err(|e| io_err(std::io::Error::other(e)))?;
    }
    w.flush().map_err(io_err)
}

/// Pooled out-of-fold scores with window identity, for threshold analysis.
pub fn write_scores_csv(outcome: &RunOutcome, path: &Path) -> Result<(), EvalError> {
    let io_err = |source: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(std::io::Error::other(e)))?;
    w.write_record(["participant", "window_start", "label", "score"])
        .map_err(|e| io_err(std::io::Error::other(e)))?;
    for i in 0..outcome.scores.len() {
        w.write_record([
            outcome.sample_participant[i].as_str(),
            &outcome.sample_start[i]
                .format("%Y-%m-%d %H:%M:%S")
                .to_string(),
            &u8::from(outcome.labels[i]).to_string(),
            &format!("{:.9}", outcome.scores[i]),
        ])
        .map_err(|e| io_err(std::io::Error::other(e)))?;
    }
    w.flush().map_err(io_err)
}
