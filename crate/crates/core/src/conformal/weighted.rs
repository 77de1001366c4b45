//! Weighted conformal sets for non-exchangeable data.

use super::quantile::weighted_quantile;
use super::score::{ScoreSpec, TieBreak};
use super::set::{generate_prediction_set, CandidateGrid, PredictionSet};
use crate::error::{invalid, Result};
use crate::pqc::ShotMultiset;

/// Raw calibration weights `w_i ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    raw: Vec<f64>,
}

impl WeightVector {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if let Some(w) = raw.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(invalid(format!("weight {w} outside [0, 1]")));
        }
        Ok(Self { raw })
    }

    pub fn uniform(n: usize) -> Self {
        Self { raw: vec![1.0; n] }
    }

    /// `w_i = ρ^(n−i)` for `i = 1..=n`, favouring recent points.
    pub fn geometric(n: usize, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid(format!("decay {rho} outside [0, 1]")));
        }
        Ok(Self { raw: (0..n).map(|i| rho.powi((n - 1 - i) as i32)).collect() })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// `(w̃_1..w̃_n, w̃_{n+1})`.
    pub fn normalized(&self) -> (Vec<f64>, f64) {
        let denom = self.raw.iter().sum::<f64>() + 1.0;
        (self.raw.iter().map(|w| w / denom).collect(), 1.0 / denom)
    }
}

/// Weighted threshold over the calibration scores, then the usual set.
#[allow(clippy::too_many_arguments)]
pub fn weighted_prediction_set(
    calibration_scores: &[f64],
    weights: &WeightVector,
    x: f64,
    shots: &ShotMultiset,
    spec: &ScoreSpec,
    alpha: f64,
    grid: CandidateGrid,
    tiebreak: &TieBreak,
) -> Result<(f64, PredictionSet)> {
    if weights.len() != calibration_scores.len() {
        return Err(invalid(format!(
            "{} weights for {} calibration scores",
            weights.len(),
            calibration_scores.len()
        )));
    }
    let lambda = weighted_quantile(calibration_scores, weights.raw(), alpha)?;
    Ok((lambda, generate_prediction_set(x, lambda, shots, spec, grid, tiebreak)?))
}
