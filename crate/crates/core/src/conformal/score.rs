//! Nonconformity scores computed from a multiset of shot values.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kde::{compress, Kde};
use crate::error::{invalid, Error, Result};
use crate::pqc::ShotMultiset;

pub const DEFAULT_TIEBREAK_SIGMA: f64 = 1e-4;
pub const DEFAULT_HDR_POINTS: usize = 512;
pub const MIN_HDR_POINTS: usize = 64;
/// Padding of the automatic HDR grid, in bandwidths, beyond the sample range.
pub const HDR_PAD_BANDWIDTHS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// Distance to the sample mean.
    Euc,
    /// Distance to the k-th nearest shot.
    Knn,
    /// Negative kernel density.
    Kde,
    /// Mass of the density superlevel set above `y`.
    Hdr,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::Euc, ScoreKind::Knn, ScoreKind::Kde, ScoreKind::Hdr];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Euc => "euc",
            ScoreKind::Knn => "knn",
            ScoreKind::Kde => "kde",
            ScoreKind::Hdr => "hdr",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euc" | "euclidean" => Ok(ScoreKind::Euc),
            "knn" => Ok(ScoreKind::Knn),
            "kde" => Ok(ScoreKind::Kde),
            "hdr" => Ok(ScoreKind::Hdr),
            other => Err(Error::Config(format!("unknown score '{other}' (euc, knn, kde, hdr)"))),
        }
    }
}

/// Integration grid for the HDR score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HdrGrid {
    /// `points` nodes spanning the shot range padded by three bandwidths.
    Auto { points: usize },
    Fixed { lo: f64, hi: f64, points: usize },
}

impl HdrGrid {
    pub fn points(&self) -> usize {
        match *self {
            HdrGrid::Auto { points } | HdrGrid::Fixed { points, .. } => points,
        }
    }
}

impl Default for HdrGrid {
    fn default() -> Self {
        HdrGrid::Auto { points: DEFAULT_HDR_POINTS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSpec {
    pub kind: ScoreKind,
    /// Replaces `k = ⌈√M⌉`; clamped to `[1, M]`.
    pub k_override: Option<usize>,
    /// Replaces the Silverman bandwidth for KDE and HDR.
    pub bandwidth_override: Option<f64>,
    pub tiebreak_sigma: f64,
    pub hdr_grid: HdrGrid,
}

impl ScoreSpec {
    pub fn new(kind: ScoreKind) -> Self {
        Self {
            kind,
            k_override: None,
            bandwidth_override: None,
            tiebreak_sigma: DEFAULT_TIEBREAK_SIGMA,
            hdr_grid: HdrGrid::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tiebreak_sigma > 0.0) || !self.tiebreak_sigma.is_finite() {
            return Err(invalid(format!("tiebreak_sigma {} must be positive", self.tiebreak_sigma)));
        }
        if self.hdr_grid.points() < MIN_HDR_POINTS {
            return Err(invalid(format!("hdr grid needs at least {MIN_HDR_POINTS} points")));
        }
        if let HdrGrid::Fixed { lo, hi, .. } = self.hdr_grid {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("hdr grid bounds [{lo}, {hi}] are invalid")));
            }
        }
        if let Some(h) = self.bandwidth_override {
            if !(h > 0.0) || !h.is_finite() {
                return Err(invalid(format!("bandwidth {h} must be positive")));
            }
        }
        if self.k_override == Some(0) {
            return Err(invalid("k must be at least 1"));
        }
        Ok(())
    }
}

/// `⌈√M⌉`.
pub fn default_k(m: usize) -> usize {
    let mut k = (m as f64).sqrt().ceil() as usize;
    while k * k < m {
        k += 1;
    }
    while k > 1 && (k - 1) * (k - 1) >= m {
        k -= 1;
    }
    k.max(1)
}

/// A score whose data-dependent pieces (mean, KDE, HDR table) are computed
/// once per shot multiset. Raw values carry no tie-break noise.
#[derive(Debug, Clone)]
pub enum FittedScore {
    Euc { mean: f64 },
    Knn { values: Vec<f64>, counts: Vec<f64>, k: usize },
    Kde { kde: Kde },
    Hdr { kde: Kde, sorted_density: Vec<f64>, cum_mass: Vec<f64> },
}

impl FittedScore {
    pub fn fit(spec: &ScoreSpec, samples: &[f64]) -> Result<Self> {
        spec.validate()?;
        if samples.is_empty() {
            return Err(invalid("score needs a nonempty shot multiset"));
        }
        let kde = || match spec.bandwidth_override {
            Some(h) => Kde::new(samples, h),
            None => Kde::with_silverman(samples),
        };
        Ok(match spec.kind {
            ScoreKind::Euc => FittedScore::Euc { mean: samples.iter().sum::<f64>() / samples.len() as f64 },
            ScoreKind::Knn => {
                let k = spec.k_override.unwrap_or_else(|| default_k(samples.len())).clamp(1, samples.len());
                let (values, counts) = compress(samples);
                FittedScore::Knn { values, counts, k }
            }
            ScoreKind::Kde => FittedScore::Kde { kde: kde()? },
            ScoreKind::Hdr => {
                let kde = kde()?;
                let (lo, hi, n) = match spec.hdr_grid {
                    HdrGrid::Auto { points } => {
                        let pad = HDR_PAD_BANDWIDTHS * kde.bandwidth();
                        (kde.min_value() - pad, kde.max_value() + pad, points)
                    }
                    HdrGrid::Fixed { lo, hi, points } => (lo, hi, points),
                };
                let step = (hi - lo) / (n - 1) as f64;
                let mut sorted_density: Vec<f64> = (0..n).map(|j| kde.density(lo + j as f64 * step)).collect();
                sorted_density.sort_by(|a, b| b.total_cmp(a));
                let mut acc = 0.0;
                let cum_mass = sorted_density
                    .iter()
                    .map(|d| {
                        acc += d * step;
                        acc
                    })
                    .collect();
                FittedScore::Hdr { kde, sorted_density, cum_mass }
            }
        })
    }

    pub fn fit_shots(spec: &ScoreSpec, shots: &ShotMultiset) -> Result<Self> {
        Self::fit(spec, &shots.values())
    }

    pub fn raw(&self, y: f64) -> f64 {
        match self {
            FittedScore::Euc { mean } => (y - mean).abs(),
            FittedScore::Knn { values, counts, k } => kth_nearest_distance(values, counts, *k, y),
            FittedScore::Kde { kde } => -kde.density(y),
            FittedScore::Hdr { kde, sorted_density, cum_mass } => {
                let p = kde.density(y);
                let above = sorted_density.partition_point(|&d| d > p);
                if above == 0 {
                    0.0
                } else {
                    cum_mass[above - 1]
                }
            }
        }
    }
}

/// Distance from `y` to its k-th nearest value, counting multiplicities.
fn kth_nearest_distance(values: &[f64], counts: &[f64], k: usize, y: f64) -> f64 {
    let mut right = values.partition_point(|&v| v < y);
    let mut left = right;
    let mut seen = 0.0;
    let need = k as f64;
    loop {
        let dl = if left > 0 { y - values[left - 1] } else { f64::INFINITY };
        let dr = if right < values.len() { values[right] - y } else { f64::INFINITY };
        let (d, c) = if dl <= dr {
            left -= 1;
            (dl, counts[left])
        } else {
            let c = counts[right];
            right += 1;
            (dr, c)
        };
        seen += c;
        if seen >= need {
            return d;
        }
    }
}

/// Tie-break perturbation `σ·Z(y)` where `Z(y)` is a standard normal keyed by
/// the bit pattern of `y`. The same label always receives the same noise
/// within one stream, so a calibration score and the grid point it lands on
/// agree exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieBreak {
    pub seed: u64,
    pub sigma: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl TieBreak {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self { seed, sigma }
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Self {
        Self::new(rng.next_u64(), sigma)
    }

    pub fn noise(&self, y: f64) -> f64 {
        // -0.0 and 0.0 are the same label
        let bits = if y == 0.0 { 0 } else { y.to_bits() };
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(bits)));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.sigma * z
    }
}

/// Score of a single label with tie-break noise drawn from `rng`.
pub fn score<R: Rng + ?Sized>(spec: &ScoreSpec, _x: f64, y: f64, shots: &ShotMultiset, rng: &mut R) -> Result<f64> {
    let fitted = FittedScore::fit_shots(spec, shots)?;
    Ok(fitted.raw(y) + TieBreak::from_rng(rng, spec.tiebreak_sigma).noise(y))
}
