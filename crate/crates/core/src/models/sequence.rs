//! Sequence classification via random convolutional kernels: each kernel
//! convolves the channel-summed series (with random dilation and optional
//! padding) and emits two features, the proportion of positive outputs (PPV)
//! and the maximum output. A configurable classifier head fits the 2K
//! transformed features.

use super::tabular::{fit_classifier, ClassifierSpec, FittedClassifier};
use super::{ModelError, Scorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const KERNEL_LENGTH_CHOICES: [usize; 3] = [7, 9, 11];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocketParams {
    pub kernels: usize,
    pub seed: u64,
}

impl Default for RocketParams {
    fn default() -> Self {
        Self {
            kernels: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub length: usize,
    /// Mean-centred standard-normal draws.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: usize,
    /// Channels summed into the univariate series this kernel convolves.
    pub channels: Vec<usize>,
}

/// The full bank doubles as the draw log: serializing it reproduces the
/// transform bit for bit on any machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub params: RocketParams,
    pub series_len: usize,
    pub n_channels: usize,
    pub kernels: Vec<Kernel>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl KernelBank {
    /// Draw `params.kernels` kernels for series of shape
    /// `series_len x n_channels`. Kernel `k` uses its own RNG stream, so
    /// growing the bank appends kernels without changing earlier ones.
    pub fn new(params: RocketParams, series_len: usize, n_channels: usize) -> Self {
        assert!(series_len >= 1 && n_channels >= 1);
        let kernels = (0..params.kernels)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(k as u64);

                let choice = KERNEL_LENGTH_CHOICES[rng.gen_range(0..KERNEL_LENGTH_CHOICES.len())];
                let length = choice.min(series_len);

                let mut weights: Vec<f64> = (0..length).map(|_| normal(&mut rng)).collect();
                // mean-centring a single tap would zero it out entirely
                if length > 1 {
                    let mean = weights.iter().sum::<f64>() / length as f64;
                    for w in &mut weights {
                        *w -= mean;
                    }
                }

                let bias = rng.gen_range(-1.0..1.0);

                let dilation = if length > 1 && series_len > length {
                    let max_exp =
                        (((series_len - 1) as f64 / (length - 1) as f64).log2()).floor() as u32;
                    1usize << rng.gen_range(0..=max_exp)
                } else {
                    1
                };

                let padding = if rng.gen::<bool>() {
                    (length - 1) * dilation / 2
                } else {
                    0
                };

                let count = rng.gen_range(1..=n_channels);
                let mut channel_pool: Vec<usize> = (0..n_channels).collect();
                // partial Fisher-Yates
                for i in 0..count {
                    let j = rng.gen_range(i..n_channels);
                    channel_pool.swap(i, j);
                }
                let mut channels = channel_pool[..count].to_vec();
                channels.sort_unstable();

                Kernel {
                    length,
                    weights,
                    bias,
                    dilation,
                    padding,
                    channels,
                }
            })
            .collect();
        Self {
            params,
            series_len,
            n_channels,
            kernels,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.kernels.len() * 2
    }

    /// Transform one series (rows are time steps) into 2K features,
    /// `[ppv_0, max_0, ppv_1, max_1, ...]`.
    pub fn transform(&self, series: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if series.len() != self.series_len {
            return Err(ModelError::ArityMismatch {
                expected: self.series_len,
                got: series.len(),
            });
        }
        for step in series {
            if step.len() != self.n_channels {
                return Err(ModelError::ArityMismatch {
                    expected: self.n_channels,
                    got: step.len(),
                });
            }
        }

        let mut out = Vec::with_capacity(self.feature_count());
        let mut summed = vec![0.0f64; self.series_len];
        for kernel in &self.kernels {
            for (t, step) in series.iter().enumerate() {
                summed[t] = kernel.channels.iter().map(|&c| step[c]).sum();
            }
            let reach = (kernel.length - 1) * kernel.dilation;
            let out_len = self.series_len + 2 * kernel.padding - reach;
            debug_assert!(out_len >= 1);

            let mut positives = 0usize;
            let mut max = f64::NEG_INFINITY;
            for t in 0..out_len {
                let mut acc = kernel.bias;
                for (j, &w) in kernel.weights.iter().enumerate() {
                    let pos = t as isize - kernel.padding as isize + (j * kernel.dilation) as isize;
                    if pos >= 0 && (pos as usize) < self.series_len {
                        acc += w * summed[pos as usize];
                    }
                }
                if acc > 0.0 {
                    positives += 1;
                }
                if acc > max {
                    max = acc;
                }
            }
            out.push(positives as f64 / out_len as f64);
            out.push(max);
        }
        Ok(out)
    }

    /// Transform a batch of series in parallel, preserving order.
    pub fn transform_batch(&self, samples: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>, ModelError> {
        use rayon::prelude::*;
        samples
            .par_iter()
            .map(|s| self.transform(s))
            .collect::<Result<Vec<_>, _>>()
    }
}

/// Kernel transform plus a fitted classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel {
    pub bank: KernelBank,
    pub head: FittedClassifier,
}

/// Transform all samples and fit the head on the 2K kernel features.
pub fn fit_sequence_model(
    bank: KernelBank,
    head_spec: &ClassifierSpec,
    samples: &[Vec<Vec<f64>>],
    labels: &[bool],
) -> Result<SequenceModel, ModelError> {
    if samples.len() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            got: samples.len(),
        });
    }
    let transformed = bank.transform_batch(samples)?;
    let head = fit_classifier(head_spec, &transformed, labels, None)?;
    Ok(SequenceModel { bank, head })
}

impl SequenceModel {
    pub fn predict_proba(&self, samples: &[Vec<Vec<f64>>]) -> Result<Vec<f64>, ModelError> {
        let transformed = self.bank.transform_batch(samples)?;
        self.head.predict_proba(&transformed)
    }
}

impl Scorer for SequenceModel {
    fn n_features(&self) -> usize {
        self.bank.series_len * self.bank.n_channels
    }

    fn score_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        // flattened series rows (time-major) for attribution tooling
        let samples: Vec<Vec<Vec<f64>>> = rows
            .iter()
            .map(|row| {
                row.chunks(self.bank.n_channels)
                    .map(|c| c.to_vec())
                    .collect()
            })
            .collect();
        self.predict_proba(&samples)
            .expect("arity checked by caller")
    }
}
