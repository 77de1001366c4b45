//! Gaussian kernel density estimation over shot values.

use crate::error::{invalid, Result};

pub const MIN_BANDWIDTH: f64 = 1e-4;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Sample standard deviation (n−1 denominator); zero for fewer than two samples.
pub fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(σ̂, IQR/1.34) · M^(−1/5)`.
///
/// When the IQR collapses to zero but σ̂ does not, σ̂ alone is used. The result
/// is floored at [`MIN_BANDWIDTH`], which is what degenerate samples get.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("bandwidth needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = sample_std(&sorted);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => 0.0,
    };
    let h = 0.9 * spread * (samples.len() as f64).powf(-0.2);
    Ok(h.max(MIN_BANDWIDTH))
}

/// Gaussian KDE with samples stored as distinct values and multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    values: Vec<f64>,
    counts: Vec<f64>,
    total: f64,
    bandwidth: f64,
}

impl Kde {
    pub fn new(samples: &[f64], bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("KDE needs at least one sample"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth {bandwidth} must be positive")));
        }
        let (values, counts) = compress(samples);
        Ok(Self { values, counts, total: samples.len() as f64, bandwidth })
    }

    pub fn with_silverman(samples: &[f64]) -> Result<Self> {
        Self::new(samples, silverman_bandwidth(samples)?)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `p̂(y) = (M h)⁻¹ Σ_m φ((y − ŷ_m)/h)`.
    pub fn density(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let mut acc = 0.0;
        for (v, c) in self.values.iter().zip(&self.counts) {
            let z = (y - v) / h;
            if z.abs() < 40.0 {
                acc += c * (-0.5 * z * z).exp();
            }
        }
        acc * INV_SQRT_2PI / (self.total * h)
    }
}

/// Sorted distinct values with their multiplicities.
pub(crate) fn compress(samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for v in sorted {
        match values.last() {
            Some(&last) if last == v => *counts.last_mut().unwrap() += 1.0,
            _ => {
                values.push(v);
                counts.push(1.0);
            }
        }
    }
    (values, counts)
}
