//! Gradient-boosted decision trees on weighted logistic gradients/hessians,
//! in two flavours: exact split search with depth-wise growth, and
//! histogram-based split search with leaf-wise growth.
//!
//! Both are fully deterministic: no subsampling, stable tie-breaks (lower
//! feature index, then lower threshold/bin, then older leaf).

use super::{sigmoid, ModelError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbdtVariant {
    Exact,
    Hist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    /// L2 regularization on leaf values.
    pub lambda: f64,
    pub min_leaf: usize,
    pub min_hessian: f64,
    /// Depth limit for the exact variant.
    pub max_depth: usize,
    /// Leaf budget for the histogram variant.
    pub max_leaves: usize,
    pub bins: usize,
}

impl GbdtParams {
    pub fn exact_defaults() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            min_leaf: 1,
            min_hessian: 0.0,
            max_depth: 3,
            max_leaves: 0,
            bins: 0,
        }
    }

    pub fn hist_defaults() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            lambda: 0.0,
            min_leaf: 20,
            min_hessian: 1e-3,
            max_depth: 0,
            max_leaves: 31,
            bins: 255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: usize,
    /// Rows with value <= threshold go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub leaf_value: f64,
    pub is_leaf: bool,
}

impl TreeNode {
    fn leaf(value: f64) -> Self {
        Self {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
            leaf_value: value,
            is_leaf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while !node.is_leaf {
            node = if row[node.feature] <= node.threshold {
                &self.nodes[node.left]
            } else {
                &self.nodes[node.right]
            };
        }
        node.leaf_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub variant: GbdtVariant,
    pub params: GbdtParams,
    pub n_features: usize,
    /// Initial log-odds from the weighted positive rate.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    /// Raw additive score before the logistic link.
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.params.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| sigmoid(self.decision(r))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    /// Raw threshold for exact; bin index for hist.
    threshold: f64,
    bin: usize,
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

/// Prefer higher gain; ties go to the lower feature index, then threshold.
fn better(a: &Option<SplitCandidate>, b: &Option<SplitCandidate>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => {
            (
                x.gain,
                std::cmp::Reverse(x.feature),
                std::cmp::Reverse(x.bin),
            ) > (
                y.gain,
                std::cmp::Reverse(y.feature),
                std::cmp::Reverse(y.bin),
            )
        }
        (Some(_), None) => true,
        _ => false,
    }
}

const MIN_GAIN: f64 = 1e-12;

pub fn fit_gbdt(
    variant: GbdtVariant,
    params: &GbdtParams,
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
) -> Result<GbdtModel, ModelError> {
    let n = rows.len();
    assert_eq!(labels.len(), n);
    assert_eq!(weights.len(), n);
    if n < 2 {
        return Err(ModelError::TooFewRows { needed: 2, got: n });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass);
    }
    let n_features = super::validate_rows(rows)?;

    // column-major copy for cache-friendly scans
    let columns: Vec<Vec<f64>> = (0..n_features)
        .map(|f| rows.iter().map(|r| r[f]).collect())
        .collect();

    let total_w: f64 = weights.iter().sum();
    let pos_w: f64 = weights
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(w, _)| w)
        .sum();
    let p0 = (pos_w / total_w).clamp(1e-12, 1.0 - 1e-12);
    let base_score = (p0 / (1.0 - p0)).ln();

    let builder: Box<dyn TreeBuilder> = match variant {
        GbdtVariant::Exact => Box::new(ExactBuilder::new(&columns, params)),
        GbdtVariant::Hist => Box::new(HistBuilder::new(&columns, params)),
    };

    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            let y = f64::from(u8::from(labels[i]));
            grad[i] = weights[i] * (p - y);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let (tree, contributions) = builder.build(&grad, &hess);
        for i in 0..n {
            scores[i] += params.learning_rate * contributions[i];
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        variant,
        params: params.clone(),
        n_features,
        base_score,
        trees,
    })
}

trait TreeBuilder {
    /// Build one tree on the current gradients; returns the tree and each
    /// training row's leaf value.
    fn build(&self, grad: &[f64], hess: &[f64]) -> (Tree, Vec<f64>);
}

// ---------------------------------------------------------------------------
// exact split search, depth-wise growth
// ---------------------------------------------------------------------------

struct ExactBuilder<'a> {
    columns: &'a [Vec<f64>],
    params: &'a GbdtParams,
    /// Row indices sorted by value, one list per feature, computed once.
    sorted: Vec<Vec<u32>>,
}

impl<'a> ExactBuilder<'a> {
    fn new(columns: &'a [Vec<f64>], params: &'a GbdtParams) -> Self {
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| {
                    col[a as usize]
                        .partial_cmp(&col[b as usize])
                        .expect("finite features")
                });
                idx
            })
            .collect();
        Self {
            columns,
            params,
            sorted,
        }
    }

    /// Best split per active node for one feature, scanning rows in sorted
    /// order with a running prefix per node.
    fn feature_candidates(
        &self,
        feature: usize,
        node_of_row: &[u32],
        active: &[u32],
        node_stats: &[(f64, f64, usize)],
        grad: &[f64],
        hess: &[f64],
    ) -> Vec<Option<SplitCandidate>> {
        let params = self.params;
        let col = &self.columns[feature];
        let slot: Vec<i32> = {
            let mut s = vec![-1i32; node_stats.len()];
            for (k, &node) in active.iter().enumerate() {
                s[node as usize] = k as i32;
            }
            s
        };
        let mut run_g = vec![0.0f64; active.len()];
        let mut run_h = vec![0.0f64; active.len()];
        let mut run_c = vec![0usize; active.len()];
        let mut prev_val = vec![f64::NAN; active.len()];
        let mut best: Vec<Option<SplitCandidate>> = vec![None; active.len()];

        for &row in &self.sorted[feature] {
            let node = node_of_row[row as usize];
            let k = slot[node as usize];
            if k < 0 {
                continue;
            }
            let k = k as usize;
            let value = col[row as usize];
            let (tg, th, tc) = node_stats[active[k] as usize];
            // candidate boundary between the previous distinct value and this one
            if run_c[k] > 0 && value > prev_val[k] {
                let gl = run_g[k];
                let hl = run_h[k];
                let cl = run_c[k];
                let gr = tg - gl;
                let hr = th - hl;
                let cr = tc - cl;
                if cl >= params.min_leaf
                    && cr >= params.min_leaf
                    && hl >= params.min_hessian
                    && hr >= params.min_hessian
                {
                    let gain = split_gain(gl, hl, gr, hr, params.lambda);
                    let cand = Some(SplitCandidate {
                        gain,
                        feature,
                        threshold: 0.5 * (prev_val[k] + value),
                        bin: 0,
                    });
                    if gain > MIN_GAIN && better(&cand, &best[k]) {
                        best[k] = cand;
                    }
                }
            }
            run_g[k] += grad[row as usize];
            run_h[k] += hess[row as usize];
            run_c[k] += 1;
            prev_val[k] = value;
        }
        best
    }
}

impl TreeBuilder for ExactBuilder<'_> {
    fn build(&self, grad: &[f64], hess: &[f64]) -> (Tree, Vec<f64>) {
        let params = self.params;
        let n = grad.len();
        let mut nodes: Vec<TreeNode> = vec![TreeNode::leaf(0.0)];
        let mut node_of_row: Vec<u32> = vec![0; n];
        // (sum g, sum h, count) per node id
        let mut node_stats: Vec<(f64, f64, usize)> =
            vec![(grad.iter().sum(), hess.iter().sum(), n)];
        let mut active: Vec<u32> = vec![0];

        for _depth in 0..params.max_depth {
            if active.is_empty() {
                break;
            }
            // best candidate per active node across features
            let per_feature: Vec<Vec<Option<SplitCandidate>>> = (0..self.columns.len())
                .into_par_iter()
                .map(|f| self.feature_candidates(f, &node_of_row, &active, &node_stats, grad, hess))
                .collect();
            let mut best: Vec<Option<SplitCandidate>> = vec![None; active.len()];
            for cands in &per_feature {
                for (k, cand) in cands.iter().enumerate() {
                    if better(cand, &best[k]) {
                        best[k] = *cand;
                    }
                }
            }

            let mut next_active = Vec::new();
            for (k, cand) in best.iter().enumerate() {
                let Some(cand) = cand else { continue };
                let node_id = active[k] as usize;
                let left_id = nodes.len();
                let right_id = nodes.len() + 1;
                nodes.push(TreeNode::leaf(0.0));
                nodes.push(TreeNode::leaf(0.0));
                nodes[node_id] = TreeNode {
                    feature: cand.feature,
                    threshold: cand.threshold,
                    left: left_id,
                    right: right_id,
                    leaf_value: 0.0,
                    is_leaf: false,
                };
                let col = &self.columns[cand.feature];
                let mut l_stats = (0.0f64, 0.0f64, 0usize);
                for row in 0..n {
                    if node_of_row[row] == node_id as u32 {
                        if col[row] <= cand.threshold {
                            node_of_row[row] = left_id as u32;
                            l_stats.0 += grad[row];
                            l_stats.1 += hess[row];
                            l_stats.2 += 1;
                        } else {
                            node_of_row[row] = right_id as u32;
                        }
                    }
                }
                let total = node_stats[node_id];
                node_stats.push(l_stats);
                node_stats.push((
                    total.0 - l_stats.0,
                    total.1 - l_stats.1,
                    total.2 - l_stats.2,
                ));
                next_active.push(left_id as u32);
                next_active.push(right_id as u32);
            }
            active = next_active;
        }

        for (id, node) in nodes.iter_mut().enumerate() {
            if node.is_leaf {
                let (g, h, _) = node_stats[id];
                node.leaf_value = -g / (h + params.lambda);
            }
        }
        let contributions: Vec<f64> = node_of_row
            .iter()
            .map(|&node| nodes[node as usize].leaf_value)
            .collect();
        (Tree { nodes }, contributions)
    }
}

// ---------------------------------------------------------------------------
// histogram split search, leaf-wise growth
// ---------------------------------------------------------------------------

struct HistBuilder<'a> {
    columns: &'a [Vec<f64>],
    params: &'a GbdtParams,
    /// Per feature: bin id per row, and the raw-value upper edge per bin.
    binned: Vec<Vec<u16>>,
    edges: Vec<Vec<f64>>,
}

impl<'a> HistBuilder<'a> {
    fn new(columns: &'a [Vec<f64>], params: &'a GbdtParams) -> Self {
        let per_feature: Vec<(Vec<u16>, Vec<f64>)> = columns
            .iter()
            .map(|col| Self::bin_feature(col, params.bins))
            .collect();
        let (binned, edges) = per_feature.into_iter().unzip();
        Self {
            columns,
            params,
            binned,
            edges,
        }
    }

    /// Quantile binning of training values into at most `bins` bins.
    /// Edges are midpoints between adjacent distinct values so thresholds
    /// carry over to raw feature space.
    fn bin_feature(col: &[f64], bins: usize) -> (Vec<u16>, Vec<f64>) {
        let n = col.len();
        let mut sorted: Vec<f64> = col.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        // distinct values with counts
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for &v in &sorted {
            match distinct.last_mut() {
                Some((val, c)) if *val == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut edges = Vec::new();
        if distinct.len() > 1 {
            let target = (n as f64 / bins as f64).max(1.0);
            let mut acc = 0usize;
            let mut since_edge = 0usize;
            for w in distinct.windows(2) {
                acc += w[0].1;
                since_edge += w[0].1;
                let remaining_bins = bins.saturating_sub(edges.len() + 1);
                let remaining_rows = n - acc;
                if since_edge as f64 >= target || remaining_bins == 0 || remaining_rows == 0 {
                    // never exceed the bin budget
                    if edges.len() + 1 < bins {
                        edges.push(0.5 * (w[0].0 + w[1].0));
                        since_edge = 0;
                    }
                }
            }
        }
        let bin_of = |v: f64| -> u16 {
            // first edge >= v: partition_point on edges < v
            edges.partition_point(|&e| e < v) as u16
        };
        let binned = col.iter().map(|&v| bin_of(v)).collect();
        (binned, edges)
    }

    fn leaf_histogram(
        &self,
        rows: &[u32],
        grad: &[f64],
        hess: &[f64],
    ) -> Vec<Vec<(f64, f64, u32)>> {
        (0..self.columns.len())
            .into_par_iter()
            .map(|f| {
                let nbins = self.edges[f].len() + 1;
                let mut hist = vec![(0.0f64, 0.0f64, 0u32); nbins];
                let binned = &self.binned[f];
                for &row in rows {
                    let b = binned[row as usize] as usize;
                    let cell = &mut hist[b];
                    cell.0 += grad[row as usize];
                    cell.1 += hess[row as usize];
                    cell.2 += 1;
                }
                hist
            })
            .collect()
    }

    fn best_split(
        &self,
        hist: &[Vec<(f64, f64, u32)>],
        total: (f64, f64, usize),
    ) -> Option<SplitCandidate> {
        let params = self.params;
        let best = (0..hist.len())
            .into_par_iter()
            .map(|f| {
                let mut best: Option<SplitCandidate> = None;
                let bins = &hist[f];
                let mut gl = 0.0f64;
                let mut hl = 0.0f64;
                let mut cl = 0usize;
                for b in 0..bins.len().saturating_sub(1) {
                    gl += bins[b].0;
                    hl += bins[b].1;
                    cl += bins[b].2 as usize;
                    if cl == 0 {
                        continue;
                    }
                    let cr = total.2 - cl;
                    if cr == 0 {
                        break;
                    }
                    let gr = total.0 - gl;
                    let hr = total.1 - hl;
                    if cl < params.min_leaf
                        || cr < params.min_leaf
                        || hl < params.min_hessian
                        || hr < params.min_hessian
                    {
                        continue;
                    }
                    let gain = split_gain(gl, hl, gr, hr, params.lambda);
                    let cand = Some(SplitCandidate {
                        gain,
                        feature: f,
                        threshold: self.edges[f][b],
                        bin: b,
                    });
                    if gain > MIN_GAIN && better(&cand, &best) {
                        best = cand;
                    }
                }
                best
            })
            .reduce(|| None, |a, b| if better(&a, &b) { a } else { b });
        best
    }
}

struct HistLeaf {
    node_id: usize,
    rows: Vec<u32>,
    stats: (f64, f64, usize),
    candidate: Option<SplitCandidate>,
}

impl TreeBuilder for HistBuilder<'_> {
    fn build(&self, grad: &[f64], hess: &[f64]) -> (Tree, Vec<f64>) {
        let params = self.params;
        let n = grad.len();
        let mut nodes: Vec<TreeNode> = vec![TreeNode::leaf(0.0)];

        let root_rows: Vec<u32> = (0..n as u32).collect();
        let root_stats = (grad.iter().sum(), hess.iter().sum(), n);
        let root_hist = self.leaf_histogram(&root_rows, grad, hess);
        let root_cand = self.best_split(&root_hist, root_stats);
        let mut leaves = vec![HistLeaf {
            node_id: 0,
            rows: root_rows,
            stats: root_stats,
            candidate: root_cand,
        }];

        while leaves.len() < params.max_leaves {
            // oldest leaf wins ties for determinism
            let Some(pick) = (0..leaves.len())
                .filter(|&i| leaves[i].candidate.is_some())
                .max_by(|&a, &b| {
                    let ga = leaves[a].candidate.unwrap().gain;
                    let gb = leaves[b].candidate.unwrap().gain;
                    ga.partial_cmp(&gb).unwrap().then(b.cmp(&a))
                })
            else {
                break;
            };
            let leaf = leaves.swap_remove(pick);
            let cand = leaf.candidate.unwrap();

            let left_id = nodes.len();
            let right_id = nodes.len() + 1;
            nodes.push(TreeNode::leaf(0.0));
            nodes.push(TreeNode::leaf(0.0));
            nodes[leaf.node_id] = TreeNode {
                feature: cand.feature,
                threshold: cand.threshold,
                left: left_id,
                right: right_id,
                leaf_value: 0.0,
                is_leaf: false,
            };

            let binned = &self.binned[cand.feature];
            let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
            let mut lstats = (0.0f64, 0.0f64, 0usize);
            for &row in &leaf.rows {
                if (binned[row as usize] as usize) <= cand.bin {
                    lstats.0 += grad[row as usize];
                    lstats.1 += hess[row as usize];
                    lstats.2 += 1;
                    lrows.push(row);
                } else {
                    rrows.push(row);
                }
            }
            let rstats = (
                leaf.stats.0 - lstats.0,
                leaf.stats.1 - lstats.1,
                leaf.stats.2 - lstats.2,
            );

            for (node_id, rows, stats) in [(left_id, lrows, lstats), (right_id, rrows, rstats)] {
                let hist = self.leaf_histogram(&rows, grad, hess);
                let candidate = self.best_split(&hist, stats);
                leaves.push(HistLeaf {
                    node_id,
                    rows,
                    stats,
                    candidate,
                });
            }
        }

        let mut contributions = vec![0.0f64; n];
        for leaf in &leaves {
            let value = -leaf.stats.0 / (leaf.stats.1 + params.lambda);
            nodes[leaf.node_id].leaf_value = value;
            for &row in &leaf.rows {
                contributions[row as usize] = value;
            }
        }
        (Tree { nodes }, contributions)
    }
}
