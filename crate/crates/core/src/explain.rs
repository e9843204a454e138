//! Model-agnostic attribution: permutation importance (AUC drop under
//! per-feature shuffling) and Monte-Carlo Shapley values with antithetic
//! permutation pairs, plus a summary ranking for plotting.

use crate::eval::{auc_roc, MetricsError};
use crate::models::Scorer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("metric error: {0}")]
    Metrics(#[from] MetricsError),
    #[error("background must be non-empty")]
    EmptyBackground,
    #[error("summary ranking needs at least {needed} explained instances (got {got})")]
    TooFewInstances { needed: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Mean and std of the AUC-ROC drop when one feature's column is shuffled.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureDrop {
    pub feature: usize,
    pub mean_drop: f64,
    pub std_drop: f64,
}

/// For each feature, shuffle its column within the given rows, re-score, and
/// record baseline AUC minus shuffled AUC, averaged over `repeats`.
pub fn permutation_importance(
    model: &dyn Scorer,
    rows: &[Vec<f64>],
    labels: &[bool],
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureDrop>, ExplainError> {
    let baseline = auc_roc(&model.score_rows(rows), labels)?;
    let d = rows.first().map_or(0, Vec::len);

    use rayon::prelude::*;
    let drops: Vec<Result<FeatureDrop, ExplainError>> = (0..d)
        .into_par_iter()
        .map(|feature| {
            let mut values = vec![0.0f64; repeats];
            for (r, slot) in values.iter_mut().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((feature as u64) << 20 | r as u64);
                let mut shuffled = rows.to_vec();
                // Fisher-Yates over the single column
                for i in (1..shuffled.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    let tmp = shuffled[i][feature];
                    shuffled[i][feature] = shuffled[j][feature];
                    shuffled[j][feature] = tmp;
                }
                let auc = auc_roc(&model.score_rows(&shuffled), labels)?;
                *slot = baseline - auc;
            }
            let mean = values.iter().sum::<f64>() / repeats as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / repeats as f64;
            Ok(FeatureDrop {
                feature,
                mean_drop: mean,
                std_drop: var.sqrt(),
            })
        })
        .collect();
    drops.into_iter().collect()
}

/// One explained instance: signed attribution per feature plus bookkeeping
/// for the local-accuracy check.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceAttribution {
    pub attributions: Vec<f64>,
    pub values: Vec<f64>,
    pub prediction: f64,
    /// Mean prediction over the background rows the estimator actually used.
    pub base_value: f64,
}

/// Monte-Carlo Shapley estimate for one instance.
///
/// Permutations are drawn in antithetic pairs (each sampled order followed by
/// its reverse) for variance reduction. Permutation `p` marginalizes against
/// background row `p % background.len()`; when the permutation count is a
/// multiple of the background size, background coverage is exactly uniform.
/// By telescoping, attributions sum to `prediction - base_value` up to float
/// error.
pub fn shapley_sampling(
    model: &dyn Scorer,
    instance: &[f64],
    background: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> Result<InstanceAttribution, ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    let d = instance.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let permutations = permutations.max(2);

    let mut order: Vec<usize> = (0..d).collect();
    let mut attributions = vec![0.0f64; d];
    let mut base_sum = 0.0f64;
    let mut prediction = 0.0f64;

    // batch all rows for one permutation into a single scoring call
    for p in 0..permutations {
        if p % 2 == 0 {
            // fresh random order
            for i in (1..d).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
        } else {
            order.reverse(); // antithetic partner
        }
        let z = &background[p % background.len()];

        let mut current = z.clone();
        let mut batch = Vec::with_capacity(d + 1);
        batch.push(current.clone());
        for &f in &order {
            current[f] = instance[f];
            batch.push(current.clone());
        }
        let outputs = model.score_rows(&batch);
        base_sum += outputs[0];
        prediction = *outputs.last().unwrap();
        for (step, &f) in order.iter().enumerate() {
            attributions[f] += outputs[step + 1] - outputs[step];
        }
    }

    let scale = 1.0 / permutations as f64;
    for a in &mut attributions {
        *a *= scale;
    }
    Ok(InstanceAttribution {
        attributions,
        values: instance.to_vec(),
        prediction,
        base_value: base_sum * scale,
    })
}

/// One row of the summary ranking.
#[derive(Debug, Clone, Serialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub feature: usize,
    pub name: String,
    pub mean_abs_attribution: f64,
    /// Pearson correlation between feature value and signed attribution;
    /// positive means high values push predictions up.
    pub value_direction_correlation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributionReport {
    pub ranking: Vec<RankedFeature>,
    pub instances: Vec<InstanceAttribution>,
    pub permutation_drops: Option<Vec<FeatureDrop>>,
    /// Largest |sum(attributions) - (prediction - base)| over instances.
    pub max_local_accuracy_error: f64,
    pub background_size: usize,
    pub permutations: usize,
    pub seed: u64,
}

pub const MIN_SUMMARY_INSTANCES: usize = 30;

/// Rank features by mean |attribution| over explained instances. Ties fall
/// back to canonical feature order.
pub fn summary_rank(
    instances: &[InstanceAttribution],
    names: &[String],
    top_m: usize,
) -> Result<Vec<RankedFeature>, ExplainError> {
    if instances.len() < MIN_SUMMARY_INSTANCES {
        return Err(ExplainError::TooFewInstances {
            needed: MIN_SUMMARY_INSTANCES,
            got: instances.len(),
        });
    }
    let d = names.len();
    let n = instances.len() as f64;
    let mut mean_abs = vec![0.0f64; d];
    for inst in instances {
        for (j, &a) in inst.attributions.iter().enumerate() {
            mean_abs[j] += a.abs();
        }
    }
    for m in &mut mean_abs {
        *m /= n;
    }

    let correlation = |j: usize| -> f64 {
        let mean_v = instances.iter().map(|i| i.values[j]).sum::<f64>() / n;
        let mean_a = instances.iter().map(|i| i.attributions[j]).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_v = 0.0;
        let mut var_a = 0.0;
        for inst in instances {
            let dv = inst.values[j] - mean_v;
            let da = inst.attributions[j] - mean_a;
            cov += dv * da;
            var_v += dv * dv;
            var_a += da * da;
        }
        if var_v <= 0.0 || var_a <= 0.0 {
            0.0
        } else {
            cov / (var_v.sqrt() * var_a.sqrt())
        }
    };

    let mut order: Vec<usize> = (0..d).collect();
    // stable sort: equal attributions keep canonical feature order
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .expect("finite attributions")
    });
    Ok(order
        .into_iter()
        .take(top_m)
        .enumerate()
        .map(|(rank, feature)| RankedFeature {
            rank: rank + 1,
            feature,
            name: names[feature].clone(),
            mean_abs_attribution: mean_abs[feature],
            value_direction_correlation: correlation(feature),
        })
        .collect())
}

/// Explain a batch of instances and assemble the full report.
pub fn build_attribution_report(
    model: &dyn Scorer,
    instances: &[Vec<f64>],
    background: &[Vec<f64>],
    names: &[String],
    top_m: usize,
    permutations: usize,
    seed: u64,
    permutation_drops: Option<Vec<FeatureDrop>>,
) -> Result<AttributionReport, ExplainError> {
    use rayon::prelude::*;
    let explained: Vec<Result<InstanceAttribution, ExplainError>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            shapley_sampling(
                model,
                inst,
                background,
                permutations,
                seed.wrapping_add(i as u64),
            )
        })
        .collect();
    let explained: Vec<InstanceAttribution> = explained.into_iter().collect::<Result<_, _>>()?;

    let max_err = explained
        .iter()
        .map(|e| {
            let total: f64 = e.attributions.iter().sum();
            (total - (e.prediction - e.base_value)).abs()
        })
        .fold(0.0f64, f64::max);
    let ranking = summary_rank(&explained, names, top_m)?;
    Ok(AttributionReport {
        ranking,
        instances: explained,
        permutation_drops,
        max_local_accuracy_error: max_err,
        background_size: background.len(),
        permutations,
        seed,
    })
}

impl AttributionReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Summary-plot CSV: feature, rank, mean |attribution|, value-direction
    /// correlation.
    pub fn write_summary_csv(&self, path: &Path) -> Result<(), ExplainError> {
        let io_err = |source: std::io::Error| ExplainError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(std::io::Error::other(e)))?;
        w.write_record([
            "rank",
            "feature",
            "mean_abs_attribution",
            "value_direction_correlation",
        ])
        .map_err(|e| io_err(std::io::Error::other(e)))?;
        for r in &self.ranking {
            w.write_record([
                r.rank.to_string(),
                r.name.clone(),
                format!("{:.9}", r.mean_abs_attribution),
                format!("{:.6}", r.value_direction_correlation),
            ])
            .map_err(|e| io_err(std::io::Error::other(e)))?;
        }
        w.flush().map_err(io_err)
    }
}
