//! Leakage-safe preprocessing: impute with training means, standardize,
//! then min-max scale, all statistics fitted on training rows only.

use super::{FeatureError, FeatureVector};
use serde::{Deserialize, Serialize};

/// Training statistics for the impute -> standardize -> min-max pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorState {
    pub impute_mean: Vec<f64>,
    pub standardize_mean: Vec<f64>,
    /// Population std of imputed training values; 1 for constant features.
    pub standardize_std: Vec<f64>,
    pub norm_min: Vec<f64>,
    pub norm_max: Vec<f64>,
    /// Features missing in every training row (imputed as 0).
    pub all_missing: Vec<usize>,
}

impl PreprocessorState {
    pub fn arity(&self) -> usize {
        self.impute_mean.len()
    }
}

/// Fit imputation, standardization and normalization statistics on training
/// rows. Features missing in every training row impute to 0 and are flagged.
pub fn fit_preprocessor(train: &[FeatureVector]) -> Result<PreprocessorState, FeatureError> {
    if train.len() < 2 {
        return Err(FeatureError::TooFewRows(train.len()));
    }
    let arity = train[0].len();
    for row in train {
        if row.len() != arity {
            return Err(FeatureError::ArityMismatch {
                expected: arity,
                got: row.len(),
            });
        }
    }

    let mut impute_mean = vec![0.0f64; arity];
    let mut all_missing = Vec::new();
    for j in 0..arity {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in train {
            if !row.missing[j] {
                sum += row.values[j];
                count += 1;
            }
        }
        if count == 0 {
            impute_mean[j] = 0.0;
            all_missing.push(j);
        } else {
            impute_mean[j] = sum / count as f64;
        }
    }

    let imputed = |row: &FeatureVector, j: usize| {
        if row.missing[j] {
            impute_mean[j]
        } else {
            row.values[j]
        }
    };

    let n = train.len() as f64;
    let mut standardize_mean = vec![0.0f64; arity];
    let mut standardize_std = vec![1.0f64; arity];
    for j in 0..arity {
        let mean = train.iter().map(|r| imputed(r, j)).sum::<f64>() / n;
        let var = train
            .iter()
            .map(|r| {
                let d = imputed(r, j) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        standardize_mean[j] = mean;
        let std = var.sqrt();
        standardize_std[j] = if std > 0.0 { std } else { 1.0 };
    }

    let mut norm_min = vec![f64::INFINITY; arity];
    let mut norm_max = vec![f64::NEG_INFINITY; arity];
    for row in train {
        for j in 0..arity {
            let z = (imputed(row, j) - standardize_mean[j]) / standardize_std[j];
            norm_min[j] = norm_min[j].min(z);
            norm_max[j] = norm_max[j].max(z);
        }
    }

    Ok(PreprocessorState {
        impute_mean,
        standardize_mean,
        standardize_std,
        norm_min,
        norm_max,
        all_missing,
    })
}

/// Impute, standardize and min-max scale rows using training statistics only.
/// Test values outside the training range fall outside [0, 1]; no clipping.
pub fn apply_preprocessor(
    state: &PreprocessorState,
    rows: &[FeatureVector],
) -> Result<Vec<Vec<f64>>, FeatureError> {
    let arity = state.arity();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != arity {
            return Err(FeatureError::ArityMismatch {
                expected: arity,
                got: row.len(),
            });
        }
        let mut transformed = Vec::with_capacity(arity);
        for j in 0..arity {
            let raw = if row.missing[j] {
                state.impute_mean[j]
            } else {
                row.values[j]
            };
            let z = (raw - state.standardize_mean[j]) / state.standardize_std[j];
            let range = state.norm_max[j] - state.norm_min[j];
            let denom = if range > 0.0 { range } else { 1.0 };
            transformed.push((z - state.norm_min[j]) / denom);
        }
        out.push(transformed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> FeatureVector {
        FeatureVector {
            values: values.to_vec(),
            missing: vec![false; values.len()],
        }
    }

    fn row_with_missing(values: &[f64], missing: &[bool]) -> FeatureVector {
        FeatureVector {
            values: values.to_vec(),
            missing: missing.to_vec(),
        }
    }

    #[test]
    fn hand_computed_single_feature() {
        let train = vec![row(&[1.0]), row(&[3.0])];
        let state = fit_preprocessor(&train).unwrap();
        assert_eq!(state.impute_mean, vec![2.0]);
        assert_eq!(state.standardize_mean, vec![2.0]);
        assert_eq!(state.standardize_std, vec![1.0]); // population std of {1,3}
        assert_eq!(state.norm_min, vec![-1.0]);
        assert_eq!(state.norm_max, vec![1.0]);

        let transformed = apply_preprocessor(&state, &train).unwrap();
        assert_eq!(transformed, vec![vec![0.0], vec![1.0]]);

        // standardized value 5 maps through {-1,1} -> {0,1} to 3, unclipped
        let test = vec![row(&[7.0])];
        let out = apply_preprocessor(&state, &test).unwrap();
        assert!((out[0][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_degenerate_guard() {
        let train = vec![row(&[5.0, 1.0]), row(&[5.0, 2.0]), row(&[5.0, 3.0])];
        let state = fit_preprocessor(&train).unwrap();
        assert_eq!(state.standardize_std[0], 1.0);
        let out = apply_preprocessor(&state, &train).unwrap();
        assert!(out.iter().all(|r| r[0] == out[0][0]));
    }

    #[test]
    fn training_rows_land_in_unit_interval() {
        let train: Vec<FeatureVector> = (0..10)
            .map(|i| row(&[i as f64, (i * i) as f64 - 3.0]))
            .collect();
        let state = fit_preprocessor(&train).unwrap();
        let out = apply_preprocessor(&state, &train).unwrap();
        for r in out {
            for v in r {
                assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn mean_row_standardizes_to_zero() {
        let train = vec![row(&[1.0, 10.0]), row(&[3.0, 30.0]), row(&[5.0, 20.0])];
        let state = fit_preprocessor(&train).unwrap();
        let mean_row = vec![row(&[3.0, 20.0])];
        let out = apply_preprocessor(&state, &mean_row).unwrap();
        // standardized 0 maps to -min/(max-min)
        for (j, v) in out[0].iter().enumerate() {
            let expected = -state.norm_min[j] / (state.norm_max[j] - state.norm_min[j]);
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn imputation_uses_nonmissing_mean() {
        let train = vec![
            row_with_missing(&[1.0, 0.0], &[false, true]),
            row_with_missing(&[3.0, 8.0], &[false, false]),
            row_with_missing(&[5.0, 4.0], &[false, false]),
        ];
        let state = fit_preprocessor(&train).unwrap();
        assert_eq!(state.impute_mean[1], 6.0);
        assert!(state.all_missing.is_empty());
    }

    #[test]
    fn all_missing_feature_flagged() {
        let train = vec![
            row_with_missing(&[1.0, 0.0], &[false, true]),
            row_with_missing(&[2.0, 0.0], &[false, true]),
        ];
        let state = fit_preprocessor(&train).unwrap();
        assert_eq!(state.all_missing, vec![1]);
        assert_eq!(state.impute_mean[1], 0.0);
    }

    #[test]
    fn row_order_stateless() {
        let train = vec![row(&[1.0]), row(&[4.0]), row(&[2.0])];
        let state = fit_preprocessor(&train).unwrap();
        let a = apply_preprocessor(&state, &[row(&[1.5]), row(&[3.5])]).unwrap();
        let b = apply_preprocessor(&state, &[row(&[3.5]), row(&[1.5])]).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(matches!(
            fit_preprocessor(&[row(&[1.0])]),
            Err(FeatureError::TooFewRows(1))
        ));
    }

    #[test]
    fn arity_mismatch_rejected() {
        let state = fit_preprocessor(&[row(&[1.0]), row(&[2.0])]).unwrap();
        assert!(matches!(
            apply_preprocessor(&state, &[row(&[1.0, 2.0])]),
            Err(FeatureError::ArityMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn state_independent_of_test_rows() {
        let train = vec![row(&[1.0, 2.0]), row(&[3.0, 1.0]), row(&[2.0, 5.0])];
        let state_a = fit_preprocessor(&train).unwrap();
        // "mutating" test rows cannot touch the state: refit on identical
        // training rows after constructing arbitrary test data
        let _test = vec![row(&[1e9, -1e9])];
        let state_b = fit_preprocessor(&train).unwrap();
        assert_eq!(state_a, state_b);
    }
}
