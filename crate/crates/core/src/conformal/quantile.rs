//! Empirical and weighted quantiles used as conformal thresholds.

use crate::error::{invalid, Result};

/// `inf { q : |{s ≤ q}| / n ≥ 1 − α }` over the score values.
///
/// Returns `+∞` when `1 − α > 1` and `−∞` when `1 − α ≤ 0`.
pub fn get_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(invalid("quantile of an empty score set"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, alpha)
}

/// [`get_quantile`] on an already ascending slice.
pub fn sorted_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(invalid("quantile of an empty score set"));
    }
    if alpha.is_nan() {
        return Err(invalid("alpha is NaN"));
    }
    let level = 1.0 - alpha;
    if level > 1.0 {
        return Ok(f64::INFINITY);
    }
    if level <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = sorted.len();
    Ok(sorted[min_count(n, level) - 1])
}

/// Smallest `k ∈ 1..=n` with `k/n ≥ level`, for `level ∈ (0, 1]`.
fn min_count(n: usize, level: f64) -> usize {
    let mut k = ((level * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= level {
        k -= 1;
    }
    while (k as f64 / n as f64) < level && k < n {
        k += 1;
    }
    k
}

/// Split-conformal threshold: the quantile of the scores with a `+∞`
/// sentinel appended, i.e. the `⌈(n+1)(1−α)⌉`-th smallest score.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    let mut sorted = scores.to_vec();
    sorted.push(f64::INFINITY);
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, alpha)
}

/// Weighted `(1−α)`-quantile of `Σ w̃_i δ_{s_i} + w̃_{n+1} δ_{+∞}` with
/// `w̃_i = w_i / (Σ w_j + 1)` and `w̃_{n+1} = 1/(Σ w_j + 1)`.
pub fn weighted_quantile(scores: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(invalid(format!("{} scores but {} weights", scores.len(), weights.len())));
    }
    if alpha.is_nan() {
        return Err(invalid("alpha is NaN"));
    }
    let level = 1.0 - alpha;
    if level > 1.0 {
        return Ok(f64::INFINITY);
    }
    if level <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let denom = weights.iter().sum::<f64>() + 1.0;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cum = 0.0;
    for i in order {
        cum += weights[i];
        if weights[i] > 0.0 && cum / denom >= level {
            return Ok(scores[i]);
        }
    }
    Ok(f64::INFINITY)
}
