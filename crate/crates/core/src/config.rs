//! Declarative run configuration: a strict TOML file describing the data
//! source, the experiment axes, the model list, and outputs. Unknown keys
//! are errors; validation happens before any computation.

use crate::eval::SplitScheme;
use crate::features::ContextFlags;
use crate::ingest::synthetic::SyntheticSpec;
use crate::models::anomaly::AnomalySpec;
use crate::models::sequence::RocketParams;
use crate::models::tabular::{ClassifierKind, ClassifierSpec};
use crate::models::GbdtParams;
use crate::windowing::Resolution;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

/// Raw, schema-checked shape of the TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub models: Vec<ModelSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub activity: PathBuf,
    pub physiology: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub sleep: Option<PathBuf>,
    /// Optional schema-map TOML overriding the default column names.
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub resolution_hours: u32,
    pub formulation: String,
    #[serde(default = "default_sequence_length")]
    pub sequence_length: usize,
    #[serde(default)]
    pub context_day_quarter: bool,
    #[serde(default)]
    pub context_agitation_now: bool,
    #[serde(default = "default_imbalance")]
    pub imbalance: String,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    pub splits: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub group_folds_by_participant: bool,
    #[serde(default = "default_rocket_kernels")]
    pub rocket_kernels: usize,
    /// Worker cap for parallel folds/models; 0 means all cores.
    #[serde(default)]
    pub workers: usize,
}

fn default_sequence_length() -> usize {
    1
}
fn default_imbalance() -> String {
    "none".into()
}
fn default_smote_k() -> usize {
    5
}
fn default_rocket_kernels() -> usize {
    1000
}

/// One model entry; only the keys applicable to `kind` may be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    // logistic
    pub l2: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    // gaussian-nb
    pub var_floor: Option<f64>,
    // gbdt
    pub rounds: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub leaves: Option<usize>,
    pub bins: Option<usize>,
    pub lambda: Option<f64>,
    pub min_leaf: Option<usize>,
    pub min_hessian: Option<f64>,
    // rocket
    pub head: Option<String>,
    // isolation forest
    pub trees: Option<usize>,
    pub subsample: Option<usize>,
    // lof
    pub k: Option<usize>,
    // one-class kernel
    pub nu: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub save_artifacts: bool,
    #[serde(default)]
    pub write_plot_data: bool,
    #[serde(default)]
    pub write_scores: bool,
    #[serde(default)]
    pub write_windows: bool,
    #[serde(default)]
    pub write_features: bool,
}

// ---------------------------------------------------------------------------
// validated plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    TabularBinary,
    SequenceBinary,
    Anomaly,
}

impl Formulation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::TabularBinary => "tabular-binary",
            Formulation::SequenceBinary => "sequence-binary",
            Formulation::Anomaly => "anomaly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Imbalance {
    None,
    ClassWeights,
    Smote { k: usize },
}

impl Imbalance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Imbalance::None => "none",
            Imbalance::ClassWeights => "class-weights",
            Imbalance::Smote { .. } => "smote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelEntry {
    Tabular(ClassifierSpec),
    Sequence {
        rocket: RocketParams,
        head: ClassifierSpec,
    },
    Anomaly(AnomalySpec),
}

impl ModelEntry {
    pub fn label(&self) -> String {
        match self {
            ModelEntry::Tabular(spec) => spec.kind.name().to_string(),
            ModelEntry::Sequence { head, .. } => format!("rocket+{}", head.kind.name()),
            ModelEntry::Anomaly(spec) => spec.name().to_string(),
        }
    }
}

/// A fully validated experiment description, ready to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub resolution: Resolution,
    pub formulation: Formulation,
    pub sequence_length: usize,
    pub context: ContextFlags,
    pub imbalance: Imbalance,
    pub splits: Vec<SplitScheme>,
    pub seed: u64,
    pub group_folds_by_participant: bool,
    pub models: Vec<ModelEntry>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Full validation; returns the typed plan without touching any data.
    pub fn validate(&self) -> Result<ExperimentPlan, ConfigError> {
        match (&self.data, &self.synthetic) {
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "config must provide either [data] or [synthetic]".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "config must provide only one of [data] and [synthetic]".into(),
                ))
            }
            _ => {}
        }
        if let Some(synth) = &self.synthetic {
            if synth.participants < 1 || synth.days < 1 {
                return Err(ConfigError::Invalid(
                    "[synthetic] participants and days must be >= 1".into(),
                ));
            }
        }

        let exp = &self.experiment;
        let resolution = Resolution::from_hours(exp.resolution_hours)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let formulation = match exp.formulation.as_str() {
            "tabular-binary" => Formulation::TabularBinary,
            "sequence-binary" => Formulation::SequenceBinary,
            "anomaly" => Formulation::Anomaly,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "formulation must be one of tabular-binary, sequence-binary, anomaly (got {other:?})"
                )))
            }
        };

        if exp.sequence_length < 1 {
            return Err(ConfigError::Invalid("sequence_length must be >= 1".into()));
        }
        if formulation != Formulation::SequenceBinary && exp.sequence_length != 1 {
            return Err(ConfigError::Invalid(format!(
                "sequence_length {} only applies to the sequence-binary formulation",
                exp.sequence_length
            )));
        }

        let imbalance = parse_imbalance(&exp.imbalance, exp.smote_k)?;
        if formulation == Formulation::Anomaly && imbalance != Imbalance::None {
            return Err(ConfigError::Invalid(
                "imbalance strategies apply to classifiers; use imbalance = \"none\" with the anomaly formulation".into(),
            ));
        }

        if exp.splits.is_empty() {
            return Err(ConfigError::Invalid("splits must not be empty".into()));
        }
        let mut splits = Vec::new();
        for s in &exp.splits {
            splits.push(match s.as_str() {
                "stratified-5-fold" => SplitScheme::Stratified5Fold,
                "lopo" => SplitScheme::Lopo,
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "split must be stratified-5-fold or lopo (got {other:?})"
                    )))
                }
            });
        }

        if self.models.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one [[models]] entry is required".into(),
            ));
        }
        let class_weighting = imbalance == Imbalance::ClassWeights;
        let mut models = Vec::new();
        for m in &self.models {
            models.push(build_model(m, formulation, class_weighting, exp)?);
        }

        Ok(ExperimentPlan {
            resolution,
            formulation,
            sequence_length: exp.sequence_length,
            context: ContextFlags {
                day_quarter: exp.context_day_quarter,
                agitation_now: exp.context_agitation_now,
            },
            imbalance,
            splits,
            seed: exp.seed,
            group_folds_by_participant: exp.group_folds_by_participant,
            models,
        })
    }
}

fn parse_imbalance(raw: &str, smote_k: usize) -> Result<Imbalance, ConfigError> {
    let tokens: Vec<&str> = raw
        .split(['+', ','])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    let mut weights = false;
    let mut smote = false;
    for t in &tokens {
        match *t {
            "none" => {}
            "class-weights" => weights = true,
            "smote" => smote = true,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "imbalance must be one of none, class-weights, smote (got {other:?})"
                )))
            }
        }
    }
    if weights && smote {
        return Err(ConfigError::Invalid(
            "smote and class-weights are mutually exclusive imbalance remedies; pick one".into(),
        ));
    }
    Ok(if weights {
        Imbalance::ClassWeights
    } else if smote {
        if smote_k == 0 {
            return Err(ConfigError::Invalid("smote_k must be >= 1".into()));
        }
        Imbalance::Smote { k: smote_k }
    } else {
        Imbalance::None
    })
}

fn reject_irrelevant(m: &ModelSection, allowed: &[&str]) -> Result<(), ConfigError> {
    let set = |name: &str, present: bool| -> Option<&'static str> {
        if present && !allowed.contains(&name) {
            Some(Box::leak(name.to_string().into_boxed_str()))
        } else {
            None
        }
    };
    let offenders: Vec<&str> = [
        set("l2", m.l2.is_some()),
        set("max_iter", m.max_iter.is_some()),
        set("tol", m.tol.is_some()),
        set("var_floor", m.var_floor.is_some()),
        set("rounds", m.rounds.is_some()),
        set("learning_rate", m.learning_rate.is_some()),
        set("max_depth", m.max_depth.is_some()),
        set("leaves", m.leaves.is_some()),
        set("bins", m.bins.is_some()),
        set("lambda", m.lambda.is_some()),
        set("min_leaf", m.min_leaf.is_some()),
        set("min_hessian", m.min_hessian.is_some()),
        set("head", m.head.is_some()),
        set("trees", m.trees.is_some()),
        set("subsample", m.subsample.is_some()),
        set("k", m.k.is_some()),
        set("nu", m.nu.is_some()),
        set("gamma", m.gamma.is_some()),
    ]
    .into_iter()
    .flatten()
    .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!(
            "model kind {:?} does not accept: {}",
            m.kind,
            offenders.join(", ")
        )))
    }
}

fn classifier_kind_from(m: &ModelSection) -> Result<ClassifierKind, ConfigError> {
    Ok(match m.kind.as_str() {
        "logistic" => {
            reject_irrelevant(m, &["l2", "max_iter", "tol"])?;
            let mut k = ClassifierKind::logistic();
            if let ClassifierKind::Logistic { l2, max_iter, tol } = &mut k {
                if let Some(v) = m.l2 {
                    *l2 = v;
                }
                if let Some(v) = m.max_iter {
                    *max_iter = v;
                }
                if let Some(v) = m.tol {
                    *tol = v;
                }
            }
            k
        }
        "gaussian-nb" => {
            reject_irrelevant(m, &["var_floor"])?;
            ClassifierKind::GaussianNb {
                var_floor: m.var_floor.unwrap_or(1e-9),
            }
        }
        "gbdt-exact" => {
            reject_irrelevant(
                m,
                &[
                    "rounds",
                    "learning_rate",
                    "max_depth",
                    "lambda",
                    "min_leaf",
                    "min_hessian",
                ],
            )?;
            let mut p = GbdtParams::exact_defaults();
            apply_gbdt_overrides(&mut p, m);
            ClassifierKind::GbdtExact(p)
        }
        "gbdt-hist" => {
            reject_irrelevant(
                m,
                &[
                    "rounds",
                    "learning_rate",
                    "leaves",
                    "bins",
                    "lambda",
                    "min_leaf",
                    "min_hessian",
                ],
            )?;
            let mut p = GbdtParams::hist_defaults();
            apply_gbdt_overrides(&mut p, m);
            ClassifierKind::GbdtHist(p)
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown classifier kind {other:?}"
            )))
        }
    })
}

fn apply_gbdt_overrides(p: &mut GbdtParams, m: &ModelSection) {
    if let Some(v) = m.rounds {
        p.rounds = v;
    }
    if let Some(v) = m.learning_rate {
        p.learning_rate = v;
    }
    if let Some(v) = m.max_depth {
        p.max_depth = v;
    }
    if let Some(v) = m.leaves {
        p.max_leaves = v;
    }
    if let Some(v) = m.bins {
        p.bins = v;
    }
    if let Some(v) = m.lambda {
        p.lambda = v;
    }
    if let Some(v) = m.min_leaf {
        p.min_leaf = v;
    }
    if let Some(v) = m.min_hessian {
        p.min_hessian = v;
    }
}

fn build_model(
    m: &ModelSection,
    formulation: Formulation,
    class_weighting: bool,
    exp: &ExperimentSection,
) -> Result<ModelEntry, ConfigError> {
    match formulation {
        Formulation::TabularBinary => {
            let kind = classifier_kind_from(m)?;
            Ok(ModelEntry::Tabular(ClassifierSpec {
                kind,
                class_weighting,
                seed: exp.seed,
            }))
        }
        Formulation::SequenceBinary => {
            if m.kind != "rocket" {
                return Err(ConfigError::Invalid(format!(
                    "sequence-binary models must have kind \"rocket\" (got {:?})",
                    m.kind
                )));
            }
            let head_name = m.head.clone().unwrap_or_else(|| "gbdt-exact".into());
            let head_kind = match head_name.as_str() {
                "gbdt-exact" => ClassifierKind::gbdt_exact(),
                "logistic" => ClassifierKind::logistic(),
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "rocket head must be gbdt-exact or logistic (got {other:?})"
                    )))
                }
            };
            reject_irrelevant(m, &["head"])?;
            Ok(ModelEntry::Sequence {
                rocket: RocketParams {
                    kernels: exp.rocket_kernels,
                    seed: exp.seed,
                },
                head: ClassifierSpec {
                    kind: head_kind,
                    class_weighting,
                    seed: exp.seed,
                },
            })
        }
        Formulation::Anomaly => Ok(ModelEntry::Anomaly(match m.kind.as_str() {
            "isolation-forest" => {
                reject_irrelevant(m, &["trees", "subsample"])?;
                AnomalySpec::IsolationForest {
                    trees: m.trees.unwrap_or(100),
                    subsample: m.subsample.unwrap_or(256),
                    seed: exp.seed,
                }
            }
            "local-outlier-factor" => {
                reject_irrelevant(m, &["k"])?;
                AnomalySpec::LocalOutlierFactor {
                    k: m.k.unwrap_or(20),
                }
            }
            "one-class-kernel" => {
                reject_irrelevant(m, &["nu", "gamma", "tol", "max_iter"])?;
                AnomalySpec::OneClassKernel {
                    nu: m.nu.unwrap_or(0.1),
                    gamma: m.gamma,
                    tol: m.tol.unwrap_or(1e-4),
                    max_iter: m.max_iter.unwrap_or(0),
                }
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "anomaly models must be isolation-forest, local-outlier-factor or one-class-kernel (got {other:?})"
                )))
            }
        })),
    }
}
