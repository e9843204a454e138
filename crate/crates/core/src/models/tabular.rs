//! Supervised probabilistic classifiers for single-window tabular samples,
//! plus the class-weighting and SMOTE imbalance remedies.

use super::gbdt::{fit_gbdt, GbdtModel, GbdtParams, GbdtVariant};
use super::{euclidean_sq, sigmoid, validate_rows, ModelError, Scorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logistic {
        l2: f64,
        max_iter: usize,
        tol: f64,
    },
    GaussianNb {
        /// Variance floor as a fraction of the largest feature variance.
        var_floor: f64,
    },
    GbdtExact(GbdtParams),
    GbdtHist(GbdtParams),
}

impl ClassifierKind {
    pub fn logistic() -> Self {
        ClassifierKind::Logistic {
            l2: 1.0,
            max_iter: 1000,
            tol: 1e-6,
        }
    }

    pub fn gaussian_nb() -> Self {
        ClassifierKind::GaussianNb { var_floor: 1e-9 }
    }

    pub fn gbdt_exact() -> Self {
        ClassifierKind::GbdtExact(GbdtParams::exact_defaults())
    }

    pub fn gbdt_hist() -> Self {
        ClassifierKind::GbdtHist(GbdtParams::hist_defaults())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Logistic { .. } => "logistic",
            ClassifierKind::GaussianNb { .. } => "gaussian-nb",
            ClassifierKind::GbdtExact(_) => "gbdt-exact",
            ClassifierKind::GbdtHist(_) => "gbdt-hist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub class_weighting: bool,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            class_weighting: false,
            seed: 0,
        }
    }

    pub fn weighted(kind: ClassifierKind) -> Self {
        Self {
            kind,
            class_weighting: true,
            seed: 0,
        }
    }
}

/// Per-class weights making the weighted class masses equal:
/// `w_c = N / (2 * N_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub fn for_label(&self, label: bool) -> f64 {
        if label {
            self.positive
        } else {
            self.negative
        }
    }
}

pub fn class_weights(labels: &[bool]) -> Result<ClassWeights, ModelError> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ModelError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        negative: n / (2.0 * negatives as f64),
        positive: n / (2.0 * positives as f64),
    })
}

/// Result of SMOTE oversampling; training-fold only.
#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// True when the minority class had < 2 rows and synthesis fell back to
    /// duplication.
    pub duplication_fallback: bool,
}

/// Raise the minority class to the majority count with synthetic rows
/// interpolated toward one of the k nearest minority neighbours:
/// `x + lambda * (x_nn - x)`, `lambda ~ U(0,1)`.
pub fn smote_oversample(
    rows: &[Vec<f64>],
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<SmoteOutput, ModelError> {
    assert_eq!(rows.len(), labels.len());
    if k == 0 {
        return Err(ModelError::InvalidHyperparameter(
            "smote neighbour count must be >= 1".into(),
        ));
    }
    validate_rows(rows)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ModelError::SingleClass);
    }
    let minority_label = positives < negatives;
    let minority: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == minority_label)
        .collect();
    let needed = positives.abs_diff(negatives);

    let mut out_rows = rows.to_vec();
    let mut out_labels = labels.to_vec();
    if needed == 0 {
        return Ok(SmoteOutput {
            rows: out_rows,
            labels: out_labels,
            duplication_fallback: false,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if minority.len() < 2 {
        // no neighbours to interpolate toward
        let src = minority[0];
        for _ in 0..needed {
            out_rows.push(rows[src].clone());
            out_labels.push(minority_label);
        }
        return Ok(SmoteOutput {
            rows: out_rows,
            labels: out_labels,
            duplication_fallback: true,
        });
    }

    // k nearest minority neighbours of each minority row (excluding itself)
    let k_eff = k.min(minority.len() - 1);
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (euclidean_sq(&rows[i], &rows[j]), j))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            dists.into_iter().take(k_eff).map(|(_, j)| j).collect()
        })
        .collect();

    for s in 0..needed {
        let m = s % minority.len();
        let parent = minority[m];
        let nn = neighbours[m][rng.gen_range(0..k_eff)];
        let lambda: f64 = rng.gen();
        let synthetic: Vec<f64> = rows[parent]
            .iter()
            .zip(&rows[nn])
            .map(|(&a, &b)| a + lambda * (b - a))
            .collect();
        out_rows.push(synthetic);
        out_labels.push(minority_label);
    }
    Ok(SmoteOutput {
        rows: out_rows,
        labels: out_labels,
        duplication_fallback: false,
    })
}

// ---------------------------------------------------------------------------
// logistic regression
// ---------------------------------------------------------------------------

/// L2-regularized weighted logistic regression fitted by full-batch gradient
/// descent with backtracking line search; deterministic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn fit_logistic(
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    l2: f64,
    max_iter: usize,
    tol: f64,
) -> LogisticModel {
    let n = rows.len();
    let d = rows[0].len();
    let total_w: f64 = weights.iter().sum();

    let mut coef = vec![0.0f64; d];
    let mut intercept = 0.0f64;

    let loss_and_grad = |coef: &[f64], intercept: f64| -> (f64, Vec<f64>, f64) {
        let mut loss = 0.0f64;
        let mut grad = vec![0.0f64; d];
        let mut grad_b = 0.0f64;
        for i in 0..n {
            let z = intercept + rows[i].iter().zip(coef).map(|(x, w)| x * w).sum::<f64>();
            let y = f64::from(u8::from(labels[i]));
            // numerically safe log-loss: log(1+e^z) - y z
            let log1pe = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            loss += weights[i] * (log1pe - y * z);
            let err = weights[i] * (sigmoid(z) - y);
            for (gj, xj) in grad.iter_mut().zip(&rows[i]) {
                *gj += err * xj;
            }
            grad_b += err;
        }
        loss /= total_w;
        grad_b /= total_w;
        let mut reg = 0.0;
        for (gj, wj) in grad.iter_mut().zip(coef) {
            *gj = *gj / total_w + l2 * wj;
            reg += wj * wj;
        }
        loss += 0.5 * l2 * reg;
        (loss, grad, grad_b)
    };

    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0usize;
    for it in 0..max_iter {
        iterations = it + 1;
        let (loss, grad, grad_b) = loss_and_grad(&coef, intercept);
        let grad_norm = (grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if grad_norm <= tol {
            converged = true;
            iterations = it;
            break;
        }
        // Armijo backtracking
        let mut t = step;
        loop {
            let trial_coef: Vec<f64> = coef.iter().zip(&grad).map(|(w, g)| w - t * g).collect();
            let trial_b = intercept - t * grad_b;
            let (trial_loss, _, _) = loss_and_grad(&trial_coef, trial_b);
            if trial_loss <= loss - 1e-4 * t * grad_norm * grad_norm || t < 1e-12 {
                coef = trial_coef;
                intercept = trial_b;
                break;
            }
            t *= 0.5;
        }
        step = (t * 2.0).min(1e4);
    }

    LogisticModel {
        coefficients: coef,
        intercept,
        converged,
        iterations,
    }
}

impl LogisticModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, w)| x * w)
                .sum::<f64>();
        sigmoid(z)
    }
}

// ---------------------------------------------------------------------------
// gaussian naive bayes
// ---------------------------------------------------------------------------

/// Per-class Gaussian likelihoods; the class-weighted variant uses uniform
/// priors, which implements the same imbalance correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub log_prior: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

fn fit_gaussian_nb(
    rows: &[Vec<f64>],
    labels: &[bool],
    uniform_priors: bool,
    var_floor: f64,
) -> GaussianNbModel {
    let d = rows[0].len();
    let mut means = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut variances = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut counts = [0usize; 2];

    for (row, &label) in rows.iter().zip(labels) {
        let c = usize::from(label);
        counts[c] += 1;
        for j in 0..d {
            means[c][j] += row[j];
        }
    }
    for c in 0..2 {
        for j in 0..d {
            means[c][j] /= counts[c] as f64;
        }
    }
    for (row, &label) in rows.iter().zip(labels) {
        let c = usize::from(label);
        for j in 0..d {
            let delta = row[j] - means[c][j];
            variances[c][j] += delta * delta;
        }
    }
    let mut max_var = 0.0f64;
    for c in 0..2 {
        for j in 0..d {
            variances[c][j] /= counts[c] as f64;
            max_var = max_var.max(variances[c][j]);
        }
    }
    let floor = (var_floor * max_var).max(1e-300);
    for c in 0..2 {
        for v in &mut variances[c] {
            *v = v.max(floor);
        }
    }

    let n = rows.len() as f64;
    let log_prior = if uniform_priors {
        [0.5f64.ln(), 0.5f64.ln()]
    } else {
        [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()]
    };
    GaussianNbModel {
        log_prior,
        means,
        variances,
    }
}

impl GaussianNbModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut log_like = [self.log_prior[0], self.log_prior[1]];
        for c in 0..2 {
            for (j, &x) in row.iter().enumerate() {
                let var = self.variances[c][j];
                let delta = x - self.means[c][j];
                log_like[c] += -0.5 * ((std::f64::consts::TAU * var).ln() + delta * delta / var);
            }
        }
        // softmax over the two log scores
        let m = log_like[0].max(log_like[1]);
        let e0 = (log_like[0] - m).exp();
        let e1 = (log_like[1] - m).exp();
        e1 / (e0 + e1)
    }
}

// ---------------------------------------------------------------------------
// unified fitted classifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum FittedParams {
    Logistic(LogisticModel),
    GaussianNb(GaussianNbModel),
    Gbdt(GbdtModel),
}

/// A fitted classifier together with its spec, serializable as a versioned
/// artifact for audit and attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedClassifier {
    pub version: u32,
    pub spec: ClassifierSpec,
    pub n_features: usize,
    pub params: FittedParams,
}

pub const ARTIFACT_VERSION: u32 = 1;

/// Fit a classifier. `sample_weights` multiply any class weights implied by
/// `spec.class_weighting`.
pub fn fit_classifier(
    spec: &ClassifierSpec,
    rows: &[Vec<f64>],
    labels: &[bool],
    sample_weights: Option<&[f64]>,
) -> Result<FittedClassifier, ModelError> {
    if rows.len() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let n_features = validate_rows(rows)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }

    let mut weights: Vec<f64> = match sample_weights {
        Some(w) => {
            assert_eq!(w.len(), rows.len());
            w.to_vec()
        }
        None => vec![1.0; rows.len()],
    };
    if spec.class_weighting {
        let cw = class_weights(labels)?;
        for (w, &l) in weights.iter_mut().zip(labels) {
            *w *= cw.for_label(l);
        }
    }

    let params = match &spec.kind {
        ClassifierKind::Logistic { l2, max_iter, tol } => {
            FittedParams::Logistic(fit_logistic(rows, labels, &weights, *l2, *max_iter, *tol))
        }
        ClassifierKind::GaussianNb { var_floor } => {
            // NB has no per-sample weight formulation; weighting acts
            // through uniform priors
            FittedParams::GaussianNb(fit_gaussian_nb(
                rows,
                labels,
                spec.class_weighting,
                *var_floor,
            ))
        }
        ClassifierKind::GbdtExact(p) => {
            FittedParams::Gbdt(fit_gbdt(GbdtVariant::Exact, p, rows, labels, &weights)?)
        }
        ClassifierKind::GbdtHist(p) => {
            FittedParams::Gbdt(fit_gbdt(GbdtVariant::Hist, p, rows, labels, &weights)?)
        }
    };

    Ok(FittedClassifier {
        version: ARTIFACT_VERSION,
        spec: spec.clone(),
        n_features,
        params,
    })
}

impl FittedClassifier {
    /// Probability of the positive class per row.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        for row in rows {
            if row.len() != self.n_features {
                return Err(ModelError::ArityMismatch {
                    expected: self.n_features,
                    got: row.len(),
                });
            }
        }
        Ok(match &self.params {
            FittedParams::Logistic(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
            FittedParams::GaussianNb(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
            FittedParams::Gbdt(m) => m.predict_proba(rows),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

impl Scorer for FittedClassifier {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.predict_proba(rows).expect("arity checked by caller")
    }
}
