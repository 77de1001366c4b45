//! Candidate label grid and prediction sets over it.

use super::score::{FittedScore, ScoreSpec, TieBreak};
use crate::error::{invalid, Result};
use crate::pqc::ShotMultiset;

/// Uniform grid of candidate labels `lo + jΔ`, `j = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl CandidateGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = Self { lo, hi, points };
        g.validate()?;
        Ok(g)
    }

    /// 301 points over `[−1.5, 1.5]`, `Δ = 0.01`.
    pub fn standard() -> Self {
        Self { lo: -1.5, hi: 1.5, points: 301 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(invalid(format!("invalid candidate grid [{}, {}] with {} points", self.lo, self.hi, self.points)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn value(&self, j: usize) -> f64 {
        if j + 1 == self.points {
            self.hi
        } else {
            self.lo + j as f64 * self.spacing()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.value(j)).collect()
    }

    pub fn nearest_index(&self, y: f64) -> usize {
        let j = ((y - self.lo) / self.spacing()).round();
        j.clamp(0.0, (self.points - 1) as f64) as usize
    }

    /// Largest possible set size, `hi − lo + Δ`.
    pub fn full_size(&self) -> f64 {
        self.points as f64 * self.spacing()
    }
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub grid: CandidateGrid,
    pub mask: Vec<bool>,
}

impl PredictionSet {
    pub fn full(grid: CandidateGrid) -> Self {
        Self { grid, mask: vec![true; grid.points] }
    }

    pub fn empty(grid: CandidateGrid) -> Self {
        Self { grid, mask: vec![false; grid.points] }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `count · Δ`.
    pub fn size(&self) -> f64 {
        self.count() as f64 * self.grid.spacing()
    }

    /// Membership of the grid point nearest to `y`; `false` off the grid range.
    pub fn contains(&self, y: f64) -> bool {
        let half = 0.5 * self.grid.spacing();
        if y < self.grid.lo - half || y > self.grid.hi + half {
            return false;
        }
        self.mask[self.grid.nearest_index(y)]
    }

    /// Maximal runs of included grid points as `(first, last)` label pairs.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = None;
        for (j, &m) in self.mask.iter().enumerate() {
            match (m, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    out.push((self.grid.value(s), self.grid.value(j - 1)));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((self.grid.value(s), self.grid.hi));
        }
        out
    }

    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }
}

/// Per-candidate scores (raw plus tie-break) for one input.
pub fn candidate_scores(fitted: &FittedScore, tiebreak: &TieBreak, grid: &CandidateGrid) -> Vec<f64> {
    (0..grid.points)
        .map(|j| {
            let y = grid.value(j);
            fitted.raw(y) + tiebreak.noise(y)
        })
        .collect()
}

/// Threshold already-computed candidate scores.
pub fn set_from_scores(scores: &[f64], lambda: f64, grid: CandidateGrid) -> PredictionSet {
    PredictionSet { grid, mask: scores.iter().map(|&s| s <= lambda).collect() }
}

/// `{ y ∈ grid : score(x, y) ≤ λ }` with one tie-break stream for the call.
pub fn generate_prediction_set(
    _x: f64,
    lambda: f64,
    shots: &ShotMultiset,
    spec: &ScoreSpec,
    grid: CandidateGrid,
    tiebreak: &TieBreak,
) -> Result<PredictionSet> {
    grid.validate()?;
    if lambda == f64::INFINITY {
        return Ok(PredictionSet::full(grid));
    }
    if lambda == f64::NEG_INFINITY {
        return Ok(PredictionSet::empty(grid));
    }
    let fitted = FittedScore::fit_shots(spec, shots)?;
    Ok(set_from_scores(&candidate_scores(&fitted, tiebreak, &grid), lambda, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::ScoreKind;
    use crate::pqc::GridMap;

    fn zero_shots() -> ShotMultiset {
        ShotMultiset::from_values(0.0, &[0.0; 20], &GridMap::standard(5))
    }

    #[test]
    fn standard_grid() {
        let g = CandidateGrid::standard();
        assert!((g.spacing() - 0.01).abs() < 1e-15);
        assert_eq!(g.value(0), -1.5);
        assert_eq!(g.value(300), 1.5);
        assert!(g.value(150).abs() < 1e-12);
        assert_eq!(g.nearest_index(0.004), 150);
        assert_eq!(g.nearest_index(9.0), 300);
        assert!((g.full_size() - 3.01).abs() < 1e-12);
    }

    #[test]
    fn infinite_thresholds() {
        let tb = TieBreak::new(0, 1e-4);
        let spec = ScoreSpec::new(ScoreKind::Euc);
        let g = CandidateGrid::standard();
        let full = generate_prediction_set(0.0, f64::INFINITY, &zero_shots(), &spec, g, &tb).unwrap();
        assert!((full.size() - 3.01).abs() < 1e-12);
        let empty = generate_prediction_set(0.0, f64::NEG_INFINITY, &zero_shots(), &spec, g, &tb).unwrap();
        assert_eq!(empty.size(), 0.0);
        assert!(empty.intervals().is_empty());
    }

    #[test]
    fn euclidean_interval() {
        let tb = TieBreak::new(3, 1e-4);
        let spec = ScoreSpec::new(ScoreKind::Euc);
        let set = generate_prediction_set(0.0, 0.5, &zero_shots(), &spec, CandidateGrid::standard(), &tb).unwrap();
        let iv = set.intervals();
        assert_eq!(iv.len(), 1);
        // the endpoints ±0.5 sit on the threshold and are decided by the noise
        assert!((iv[0].0 + 0.5).abs() <= 0.0100001 && (iv[0].1 - 0.5).abs() <= 0.0100001, "{iv:?}");
        assert!(set.count() >= 99 && set.count() <= 101);
        assert!(set.contains(0.2) && !set.contains(0.7) && !set.contains(4.0));
    }

    #[test]
    fn nested_in_lambda() {
        let tb = TieBreak::new(5, 1e-4);
        let shots = ShotMultiset::from_values(0.0, &[-0.6, -0.5, 0.4, 0.55, 0.6], &GridMap::standard(5));
        for kind in ScoreKind::ALL {
            let spec = ScoreSpec::new(kind);
            let fitted = FittedScore::fit_shots(&spec, &shots).unwrap();
            let scores = candidate_scores(&fitted, &tb, &CandidateGrid::standard());
            let mut prev = PredictionSet::empty(CandidateGrid::standard());
            for i in 0..50 {
                let lambda = scores[i * 6];
                let set = set_from_scores(&scores, lambda, CandidateGrid::standard());
                let (small, big) = if prev.count() <= set.count() { (&prev, &set) } else { (&set, &prev) };
                assert!(small.is_subset_of(big));
                prev = set;
            }
        }
    }
}
