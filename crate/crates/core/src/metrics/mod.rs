//! Evaluation statistics: exact-mechanism precision, binary P/R/F1, Wilson and
//! bootstrap intervals, ROC-AUC, stepwise AP and relative FP reduction.
//!
//! Undefined metrics are errors, with one exception: a zero precision or
//! recall denominator yields 0 (and F1 = 0 when both are 0).

mod plot;
mod report;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plot::{pr_svg, roc_svg};
pub use report::{AggregateReport, EvalReport, MeanStd};

/// Default normal quantile for 95% intervals.
pub const Z_95: f64 = 1.96;

fn undefined(msg: impl Into<String>) -> Error {
    Error::UndefinedMetric(msg.into())
}

/// Fraction of `(predicted, true)` relation pairs that agree.
pub fn exact_mechanism_precision(pairs: &[(u32, u32)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(undefined("exact-mechanism precision over zero pairs"));
    }
    let hits = pairs.iter().filter(|(p, y)| p == y).count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn binary_prf(tp: usize, fp: usize, fn_: usize) -> Result<Prf> {
    if tp + fp + fn_ == 0 {
        return Err(undefined("binary P/R/F1 with all counts zero"));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        log::debug!("F1 set to 0: precision and recall are both 0");
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

/// Wilson score interval for a proportion `p_hat` observed over `n` trials.
pub fn wilson_ci(p_hat: f64, n: usize, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(undefined("Wilson interval with n = 0"));
    }
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(undefined(format!("proportion {p_hat} outside [0, 1]")));
    }
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p_hat + z2 / (2.0 * n);
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt();
    // The exact interval always contains p̂; clamp away rounding at p̂ ∈ {0, 1}.
    let low = ((center - half) / denom).clamp(0.0, p_hat);
    let high = ((center + half) / denom).clamp(p_hat, 1.0);
    Ok((low, high))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap (2.5 / 97.5) of an arbitrary statistic.
///
/// `statistic` receives resampled indices into a dataset of size `n`.
pub fn bootstrap_ci_with<F>(n: usize, iterations: usize, seed: u64, mut statistic: F) -> Result<(f64, f64)>
where
    F: FnMut(&[usize]) -> f64,
{
    if n == 0 {
        return Err(undefined("bootstrap over an empty sample"));
    }
    if iterations < 100 {
        return Err(Error::config(format!(
            "bootstrap needs at least 100 iterations, got {iterations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        stats.push(statistic(&idx));
    }
    stats.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&stats, 0.025), quantile_sorted(&stats, 0.975)))
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], iterations: usize, seed: u64) -> Result<(f64, f64)> {
    bootstrap_ci_with(values.len(), iterations, seed, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    })
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(undefined("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score; ties keep input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Groups of equal scores along a descending order, as `(start, end)` ranges.
fn tie_groups(scores: &[f64], order: &[usize]) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            groups.push((start, i));
            start = i;
        }
    }
    groups
}

/// Probability a random positive outscores a random negative, ties counting ½.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(undefined("ROC-AUC needs both classes"));
    }
    // Mann-Whitney U with midranks, ranks ascending from 1.
    let mut order = descending(scores);
    order.reverse();
    let mut rank_sum = 0.0;
    for (start, end) in tie_groups(scores, &order) {
        let midrank = (start + end + 1) as f64 / 2.0;
        let in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * in_group as f64;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Step-interpolated average precision: `Σ (R_i − R_{i−1}) P_i` over
/// distinct score thresholds, highest first. Tied scores form one threshold.
pub fn average_precision_stepwise(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_scored(scores, labels)?;
    if pos == 0 {
        return Err(undefined("average precision with no positives"));
    }
    let order = descending(scores);
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (start, end) in tie_groups(scores, &order) {
        let new_tp = order[start..end].iter().filter(|&&i| labels[i]).count();
        if new_tp > 0 {
            tp += new_tp;
            ap += (new_tp as f64 / pos as f64) * (tp as f64 / end as f64);
        }
    }
    Ok(ap)
}

/// Fraction of positives among the candidates: the AP of a random ranking.
pub fn prevalence(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(undefined("prevalence of an empty candidate set"));
    }
    Ok(labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64)
}

/// Share of the baseline's false positives removed at equal true positives:
/// `1 − (1/p_f − 1) / (1/p_b − 1)`.
pub fn relative_fp_reduction(p_fusion: f64, p_base: f64) -> Result<f64> {
    let valid = |p: f64| p > 0.0 && p <= 1.0;
    if !valid(p_fusion) || !valid(p_base) {
        return Err(undefined(format!(
            "precisions must lie in (0, 1], got {p_fusion} and {p_base}"
        )));
    }
    if p_base == 1.0 {
        return Err(undefined("baseline precision 1 leaves no false positives to reduce"));
    }
    Ok(1.0 - (1.0 / p_fusion - 1.0) / (1.0 / p_base - 1.0))
}

/// `(fpr, tpr)` points, one per distinct threshold, starting at `(0, 0)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_scored(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(undefined("ROC curve needs both classes"));
    }
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut pts = vec![(0.0, 0.0)];
    for (start, end) in tie_groups(scores, &order) {
        for &i in &order[start..end] {
            if labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// `(recall, precision)` points, one per distinct threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = check_scored(scores, labels)?;
    if pos == 0 {
        return Err(undefined("PR curve with no positives"));
    }
    let order = descending(scores);
    let mut tp = 0usize;
    let mut pts = Vec::new();
    for (start, end) in tie_groups(scores, &order) {
        tp += order[start..end].iter().filter(|&&i| labels[i]).count();
        pts.push((tp as f64 / pos as f64, tp as f64 / end as f64));
    }
    Ok(pts)
}

/// Mean and sample standard deviation (`n − 1`); the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(undefined("mean of no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

#[cfg(test)]
mod tests;
