//! Shared helpers for integration tests: an independent rank-sum test and
//! window bookkeeping against the generator manifest.

#![allow(dead_code)]

use agitbench_core::ingest::synthetic::SyntheticManifest;
use agitbench_core::windowing::{Window, WindowSet};
use std::collections::BTreeSet;

/// One-sided Mann-Whitney p-value (alternative: `a` stochastically greater
/// than `b`) via the normal approximation with tie correction.
pub fn rank_sum_p_greater(a: &[f64], b: &[f64]) -> f64 {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    assert!(n1 > 0.0 && n2 > 0.0);

    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite scores"));

    let n = all.len();
    let mut rank_sum_a = 0.0f64;
    let mut tie_term = 0.0f64;
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let count = (j - i + 1) as f64;
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_a += avg_rank;
            }
        }
        tie_term += count * count * count - count;
        i = j + 1;
    }

    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    // continuity-corrected z for the "greater" alternative
    let z = (u - mean - 0.5) / var.sqrt();
    1.0 - standard_normal_cdf(z)
}

/// Rank-sum statistic pieces for one stratum: (U - E[U], Var[U]).
fn rank_sum_moments(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return None;
    }
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite values"));
    let n = all.len();
    let mut rank_sum_a = 0.0f64;
    let mut tie_term = 0.0f64;
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let count = (j - i + 1) as f64;
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_a += avg_rank;
            }
        }
        tie_term += count * count * count - count;
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    Some((u - mean, var))
}

/// Stratified one-sided rank-sum (`a` greater), combining the centred U
/// statistics across strata; controls a confounder such as day quarter.
pub fn stratified_rank_sum_p_greater(strata: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut num = 0.0f64;
    let mut var = 0.0f64;
    for (a, b) in strata {
        if let Some((centred, v)) = rank_sum_moments(a, b) {
            num += centred;
            var += v;
        }
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = (num - 0.5) / var.sqrt();
    1.0 - standard_normal_cdf(z)
}

/// Abramowitz-Stegun 7.1.26 erf approximation, |error| < 1.5e-7.
pub fn standard_normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = sign * (1.0 - poly * (-x * x).exp());
    0.5 * (1.0 + erf)
}

/// Key identifying a window: (participant, start).
pub type WindowKey = (String, chrono::NaiveDateTime);

pub fn window_key(w: &Window) -> WindowKey {
    (w.participant.clone(), w.start)
}

/// Labeled-window indices of the set, tagged by manifest category.
pub struct PlantedIndex {
    pub precursor: BTreeSet<usize>,
    pub prelude: BTreeSet<usize>,
    pub decoy: BTreeSet<usize>,
    pub diffuse: BTreeSet<usize>,
    /// Labeled windows in none of the planted categories.
    pub normal: Vec<usize>,
}

pub fn index_planted(set: &WindowSet, manifest: &SyntheticManifest) -> PlantedIndex {
    let keyset =
        |list: &[agitbench_core::ingest::synthetic::PlantedWindow]| -> BTreeSet<WindowKey> {
            list.iter()
                .map(|p| (p.participant.clone(), p.window_start))
                .collect()
        };
    let precursor_keys = keyset(&manifest.precursor_windows);
    let prelude_keys = keyset(&manifest.prelude_windows);
    let decoy_keys = keyset(&manifest.decoy_windows);
    let diffuse_keys = keyset(&manifest.diffuse_windows);

    let mut out = PlantedIndex {
        precursor: BTreeSet::new(),
        prelude: BTreeSet::new(),
        decoy: BTreeSet::new(),
        diffuse: BTreeSet::new(),
        normal: Vec::new(),
    };
    for (i, w) in set.windows.iter().enumerate() {
        if w.label_next.is_none() {
            continue;
        }
        let key = window_key(w);
        let mut planted = false;
        if precursor_keys.contains(&key) {
            out.precursor.insert(i);
            planted = true;
        }
        if prelude_keys.contains(&key) {
            out.prelude.insert(i);
            planted = true;
        }
        if decoy_keys.contains(&key) {
            out.decoy.insert(i);
            planted = true;
        }
        if diffuse_keys.contains(&key) {
            out.diffuse.insert(i);
            planted = true;
        }
        if !planted {
            out.normal.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((standard_normal_cdf(1.96) - 0.975).abs() < 1e-3);
        assert!((standard_normal_cdf(-1.96) - 0.025).abs() < 1e-3);
    }

    #[test]
    fn rank_sum_detects_shift() {
        let a: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        assert!(rank_sum_p_greater(&a, &b) < 1e-6);
        // no shift: p should be moderate
        let p = rank_sum_p_greater(&b, &b);
        assert!(p > 0.4);
    }
}
