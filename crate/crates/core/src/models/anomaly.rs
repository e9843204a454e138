//! Anomaly predictors trained only on normal windows. All three kinds share
//! one orientation: higher score = more anomalous. The reporting threshold is
//! the 95th percentile of training scores.

use super::{euclidean_sq, validate_rows, ModelError, Scorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD_PERCENTILE: f64 = 95.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AnomalySpec {
    IsolationForest {
        trees: usize,
        subsample: usize,
        seed: u64,
    },
    LocalOutlierFactor {
        k: usize,
    },
    OneClassKernel {
        nu: f64,
        /// RBF bandwidth; `None` means 1 / feature count.
        gamma: Option<f64>,
        tol: f64,
        max_iter: usize,
    },
}

impl AnomalySpec {
    pub fn isolation_forest() -> Self {
        AnomalySpec::IsolationForest {
            trees: 100,
            subsample: 256,
            seed: 0,
        }
    }

    pub fn local_outlier_factor() -> Self {
        AnomalySpec::LocalOutlierFactor { k: 20 }
    }

    pub fn one_class_kernel() -> Self {
        AnomalySpec::OneClassKernel {
            nu: 0.1,
            gamma: None,
            tol: 1e-4,
            max_iter: 0, // 0 = automatic cap from training size
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnomalySpec::IsolationForest { .. } => "isolation-forest",
            AnomalySpec::LocalOutlierFactor { .. } => "local-outlier-factor",
            AnomalySpec::OneClassKernel { .. } => "one-class-kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnomalyParams {
    IsolationForest(IsolationForestModel),
    LocalOutlierFactor(LofModel),
    OneClassKernel(OneClassModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyModel {
    pub spec: AnomalySpec,
    pub n_features: usize,
    /// 95th percentile of training scores; predictions flag score > threshold.
    pub threshold: f64,
    pub params: AnomalyParams,
}

/// Fit any anomaly model on normal rows only (the caller enforces the
/// no-positive-rows discipline and is tested for it).
pub fn fit_anomaly(spec: &AnomalySpec, rows: &[Vec<f64>]) -> Result<AnomalyModel, ModelError> {
    if rows.len() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let n_features = validate_rows(rows)?;
    let params = match spec {
        AnomalySpec::IsolationForest {
            trees,
            subsample,
            seed,
        } => AnomalyParams::IsolationForest(fit_iforest(rows, *trees, *subsample, *seed)?),
        AnomalySpec::LocalOutlierFactor { k } => {
            AnomalyParams::LocalOutlierFactor(fit_lof(rows, *k)?)
        }
        AnomalySpec::OneClassKernel {
            nu,
            gamma,
            tol,
            max_iter,
        } => {
            let gamma = gamma.unwrap_or(1.0 / n_features as f64);
            AnomalyParams::OneClassKernel(fit_one_class(rows, *nu, gamma, *tol, *max_iter)?)
        }
    };
    let mut model = AnomalyModel {
        spec: spec.clone(),
        n_features,
        threshold: 0.0,
        params,
    };
    let train_scores = model.scores(rows)?;
    model.threshold = percentile(&train_scores, DEFAULT_THRESHOLD_PERCENTILE);
    Ok(model)
}

impl AnomalyModel {
    /// Higher = more anomalous, for every model kind.
    pub fn scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        for row in rows {
            if row.len() != self.n_features {
                return Err(ModelError::ArityMismatch {
                    expected: self.n_features,
                    got: row.len(),
                });
            }
        }
        Ok(match &self.params {
            AnomalyParams::IsolationForest(m) => rows.iter().map(|r| m.score(r)).collect(),
            AnomalyParams::LocalOutlierFactor(m) => rows.iter().map(|r| m.score(r)).collect(),
            AnomalyParams::OneClassKernel(m) => rows.iter().map(|r| m.score(r)).collect(),
        })
    }

    /// Scores plus thresholded flags at the training 95th percentile.
    pub fn score_and_flag(&self, rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<bool>), ModelError> {
        let scores = self.scores(rows)?;
        let flags = scores.iter().map(|&s| s > self.threshold).collect();
        Ok((scores, flags))
    }
}

impl Scorer for AnomalyModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.scores(rows).expect("arity checked by caller")
    }
}

/// Linear-interpolation percentile of unsorted values.
fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

// ---------------------------------------------------------------------------
// isolation forest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum IsoNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    nodes: Vec<IsoNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    trees: Vec<IsoTree>,
    /// Normalizer c(m) for the subsample size actually used.
    path_norm: f64,
}

/// Average unsuccessful-search path length in a BST of n points, with exact
/// harmonic numbers: c(n) = 2 H(n-1) - 2 (n-1)/n. c(1) = 0, c(2) = 1.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let h: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * h - 2.0 * (n as f64 - 1.0) / n as f64
}

fn fit_iforest(
    rows: &[Vec<f64>],
    trees: usize,
    subsample: usize,
    seed: u64,
) -> Result<IsolationForestModel, ModelError> {
    if trees == 0 || subsample < 2 {
        return Err(ModelError::InvalidHyperparameter(
            "isolation forest needs trees >= 1 and subsample >= 2".into(),
        ));
    }
    let m = subsample.min(rows.len());
    let depth_cap = (m as f64).log2().ceil() as usize;

    let built: Vec<IsoTree> = (0..trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            // subsample without replacement
            let mut pool: Vec<usize> = (0..rows.len()).collect();
            for i in 0..m {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            let sample: Vec<usize> = pool[..m].to_vec();
            let mut nodes = Vec::new();
            build_iso_node(rows, &sample, 0, depth_cap, &mut rng, &mut nodes);
            IsoTree { nodes }
        })
        .collect();

    Ok(IsolationForestModel {
        trees: built,
        path_norm: average_path_length(m),
    })
}

fn build_iso_node(
    rows: &[Vec<f64>],
    members: &[usize],
    depth: usize,
    depth_cap: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<IsoNode>,
) -> usize {
    let id = nodes.len();
    if members.len() <= 1 || depth >= depth_cap {
        nodes.push(IsoNode::Leaf {
            size: members.len(),
        });
        return id;
    }
    let d = rows[0].len();
    // pick a split feature with spread; give up after d attempts
    let mut chosen = None;
    for _ in 0..d.max(1) {
        let f = rng.gen_range(0..d);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in members {
            lo = lo.min(rows[i][f]);
            hi = hi.max(rows[i][f]);
        }
        if hi > lo {
            chosen = Some((f, rng.gen_range(lo..hi)));
            break;
        }
    }
    let Some((feature, threshold)) = chosen else {
        nodes.push(IsoNode::Leaf {
            size: members.len(),
        });
        return id;
    };

    nodes.push(IsoNode::Leaf { size: 0 }); // placeholder
    let left_members: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| rows[i][feature] < threshold)
        .collect();
    let right_members: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| rows[i][feature] >= threshold)
        .collect();
    let left = build_iso_node(rows, &left_members, depth + 1, depth_cap, rng, nodes);
    let right = build_iso_node(rows, &right_members, depth + 1, depth_cap, rng, nodes);
    nodes[id] = IsoNode::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

impl IsolationForestModel {
    fn path_length(&self, tree: &IsoTree, row: &[f64]) -> f64 {
        let mut depth = 0.0f64;
        let mut id = 0usize;
        loop {
            match &tree.nodes[id] {
                IsoNode::Leaf { size } => {
                    return depth + average_path_length(*size);
                }
                IsoNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    depth += 1.0;
                    id = if row[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// 2^(-E[path length] / c(m)); in (0, 1), higher = more anomalous.
    pub fn score(&self, row: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| self.path_length(t, row)).sum();
        let mean = total / self.trees.len() as f64;
        2.0f64.powf(-mean / self.path_norm)
    }
}

// ---------------------------------------------------------------------------
// local outlier factor (novelty mode)
// ---------------------------------------------------------------------------

const LOF_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    k: usize,
    train: Vec<Vec<f64>>,
    /// Distance to the k-th neighbour per training row.
    k_distance: Vec<f64>,
    /// Local reachability density per training row.
    lrd: Vec<f64>,
}

fn knn(train: &[Vec<f64>], query: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut dists: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, row)| (euclidean_sq(query, row).sqrt(), i))
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    dists.truncate(k);
    dists
}

fn fit_lof(rows: &[Vec<f64>], k: usize) -> Result<LofModel, ModelError> {
    if k == 0 || k >= rows.len() {
        return Err(ModelError::KTooLarge {
            k,
            rows: rows.len(),
        });
    }
    let train = rows.to_vec();
    let neighbours: Vec<Vec<(f64, usize)>> = {
        use rayon::prelude::*;
        (0..train.len())
            .into_par_iter()
            .map(|i| knn(&train, &train[i], k, Some(i)))
            .collect()
    };
    let k_distance: Vec<f64> = neighbours
        .iter()
        .map(|nn| nn.last().map_or(0.0, |(d, _)| *d))
        .collect();
    let lrd: Vec<f64> = neighbours
        .iter()
        .map(|nn| {
            let reach: f64 =
                nn.iter().map(|&(d, j)| d.max(k_distance[j])).sum::<f64>() / nn.len() as f64;
            1.0 / (reach + LOF_EPS)
        })
        .collect();
    Ok(LofModel {
        k,
        train,
        k_distance,
        lrd,
    })
}

impl LofModel {
    /// LOF of an unseen point against the training density; ~1 inside
    /// homogeneous regions, larger outside.
    pub fn score(&self, row: &[f64]) -> f64 {
        let nn = knn(&self.train, row, self.k, None);
        let reach: f64 = nn
            .iter()
            .map(|&(d, j)| d.max(self.k_distance[j]))
            .sum::<f64>()
            / nn.len() as f64;
        let lrd_query = 1.0 / (reach + LOF_EPS);
        let neighbour_lrd: f64 =
            nn.iter().map(|&(_, j)| self.lrd[j]).sum::<f64>() / nn.len() as f64;
        neighbour_lrd / lrd_query
    }
}

// ---------------------------------------------------------------------------
// one-class kernel (RBF) via pairwise coordinate updates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassModel {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    /// Support vectors with their dual coefficients.
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

fn rbf_row(rows: &[Vec<f64>], i: usize, gamma: f64, out: &mut [f64]) {
    let xi = &rows[i];
    for (j, row) in rows.iter().enumerate() {
        out[j] = (-gamma * euclidean_sq(xi, row)).exp();
    }
}

/// Solve min 1/2 a'Qa s.t. 0 <= a_i <= 1/(nu m), sum a = 1, by repeatedly
/// moving mass between the maximal violating pair.
fn fit_one_class(
    rows: &[Vec<f64>],
    nu: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OneClassModel, ModelError> {
    if !(0.0 < nu && nu <= 1.0) {
        return Err(ModelError::InvalidHyperparameter(
            "nu must be in (0, 1]".into(),
        ));
    }
    let m = rows.len();
    let c = 1.0 / (nu * m as f64);
    let cap = if max_iter == 0 {
        (100 * m).max(20_000)
    } else {
        max_iter
    };

    // LIBSVM-style initialization: the first floor(nu*m) coefficients at the
    // cap, the remainder fraction on the next
    let mut alpha = vec![0.0f64; m];
    let full = (nu * m as f64).floor() as usize;
    let mut mass = 1.0f64;
    for a in alpha.iter_mut().take(full.min(m)) {
        *a = c;
        mass -= c;
    }
    if full < m && mass > 0.0 {
        alpha[full] = mass;
    }

    // grad = Q alpha
    let mut grad = vec![0.0f64; m];
    let mut krow = vec![0.0f64; m];
    for i in 0..m {
        if alpha[i] > 0.0 {
            rbf_row(rows, i, gamma, &mut krow);
            for j in 0..m {
                grad[j] += alpha[i] * krow[j];
            }
        }
    }

    let bound_eps = c * 1e-12;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut krow_up = vec![0.0f64; m];
    let mut krow_low = vec![0.0f64; m];
    for it in 0..cap {
        iterations = it;
        // i_up: smallest gradient among coefficients that can grow
        // i_low: largest gradient among coefficients that can shrink
        let mut i_up = usize::MAX;
        let mut i_low = usize::MAX;
        for i in 0..m {
            if alpha[i] < c - bound_eps && (i_up == usize::MAX || grad[i] < grad[i_up]) {
                i_up = i;
            }
            if alpha[i] > bound_eps && (i_low == usize::MAX || grad[i] > grad[i_low]) {
                i_low = i;
            }
        }
        if i_up == usize::MAX || i_low == usize::MAX {
            converged = true;
            break;
        }
        let violation = grad[i_low] - grad[i_up];
        if violation <= tol {
            converged = true;
            break;
        }

        rbf_row(rows, i_up, gamma, &mut krow_up);
        rbf_row(rows, i_low, gamma, &mut krow_low);
        let curvature = (krow_up[i_up] + krow_low[i_low] - 2.0 * krow_up[i_low]).max(1e-12);
        let delta = (violation / curvature)
            .min(c - alpha[i_up])
            .min(alpha[i_low]);
        alpha[i_up] += delta;
        alpha[i_low] -= delta;
        for j in 0..m {
            grad[j] += delta * (krow_up[j] - krow_low[j]);
        }
    }
    if !converged {
        return Err(ModelError::SolverNonConvergence {
            iterations: cap,
            tolerance: tol,
        });
    }

    // rho from free support vectors, else the midpoint of the bounds
    let free: Vec<f64> = (0..m)
        .filter(|&i| alpha[i] > bound_eps && alpha[i] < c - bound_eps)
        .map(|i| grad[i])
        .collect();
    let rho = if free.is_empty() {
        let ub = (0..m)
            .filter(|&i| alpha[i] < c - bound_eps)
            .map(|i| grad[i])
            .fold(f64::INFINITY, f64::min);
        let lb = (0..m)
            .filter(|&i| alpha[i] > bound_eps)
            .map(|i| grad[i])
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (ub + lb)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    let mut support = Vec::new();
    let mut support_alpha = Vec::new();
    for i in 0..m {
        if alpha[i] > bound_eps {
            support.push(rows[i].clone());
            support_alpha.push(alpha[i]);
        }
    }
    Ok(OneClassModel {
        gamma,
        nu,
        rho,
        support,
        alpha: support_alpha,
        iterations,
    })
}

impl OneClassModel {
    /// rho minus the kernel expansion; positive outside the learned region.
    pub fn score(&self, row: &[f64]) -> f64 {
        let expansion: f64 = self
            .support
            .iter()
            .zip(&self.alpha)
            .map(|(sv, &a)| a * (-self.gamma * euclidean_sq(sv, row)).exp())
            .sum();
        self.rho - expansion
    }
}
