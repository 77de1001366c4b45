//! Online recalibration of the miscoverage level (AQCP).

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::quantile::sorted_quantile;
use super::score::{FittedScore, ScoreSpec, TieBreak};
use super::set::{candidate_scores, set_from_scores, CandidateGrid, PredictionSet};
use crate::error::{invalid, Result};
use crate::pqc::{sample_shots, PqcModel, ShotClock, ShotMultiset};
use crate::qsim::NoiseSchedule;

/// `(max{α₁, 1−α₁} + γ) / (Nγ)`.
pub fn coverage_bound(alpha1: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma {gamma} must be positive")));
    }
    if n == 0 {
        return Err(invalid("bound needs at least one step"));
    }
    Ok((alpha1.max(1.0 - alpha1) + gamma) / (n as f64 * gamma))
}

/// Calibration ledger plus the running miscoverage level.
#[derive(Debug, Clone, PartialEq)]
pub struct AqcpState {
    pub alpha_target: f64,
    pub alpha_t: f64,
    pub gamma: f64,
    ledger: VecDeque<f64>,
    sorted: Vec<f64>,
    pub err_history: Vec<bool>,
    pub t_index: usize,
    n_initial: usize,
    max_ledger: Option<usize>,
}

impl AqcpState {
    pub fn new(alpha_target: f64, gamma: f64, initial_scores: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_target) {
            return Err(invalid(format!("alpha {alpha_target} outside [0, 1]")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("gamma {gamma} must be finite and non-negative")));
        }
        if initial_scores.is_empty() {
            return Err(invalid("calibration set is empty"));
        }
        if initial_scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("NaN calibration score"));
        }
        let mut sorted = initial_scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            alpha_target,
            alpha_t: alpha_target,
            gamma,
            ledger: initial_scores.iter().copied().collect(),
            sorted,
            err_history: Vec::new(),
            t_index: 0,
            n_initial: initial_scores.len(),
            max_ledger: None,
        })
    }

    /// Keep only the most recent `cap` scores.
    pub fn with_max_ledger(mut self, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(invalid("ledger cap must be at least 1"));
        }
        self.max_ledger = Some(cap);
        self.trim();
        Ok(self)
    }

    pub fn n_initial(&self) -> usize {
        self.n_initial
    }

    /// Scores in insertion order.
    pub fn scores(&self) -> Vec<f64> {
        self.ledger.iter().copied().collect()
    }

    pub fn ledger_len(&self) -> usize {
        self.ledger.len()
    }

    pub fn threshold(&self) -> f64 {
        sorted_quantile(&self.sorted, self.alpha_t).expect("ledger is never empty")
    }

    /// Records the score of the revealed label: `err = [s > λ]`, then
    /// `α ← α + γ(α₁ − err)` and the score joins the ledger.
    pub fn observe(&mut self, score: f64) -> Result<(f64, bool)> {
        if score.is_nan() {
            return Err(invalid("NaN score"));
        }
        let lambda = self.threshold();
        let err = score > lambda;
        self.alpha_t += self.gamma * (self.alpha_target - if err { 1.0 } else { 0.0 });
        self.ledger.push_back(score);
        let pos = self.sorted.partition_point(|v| v.total_cmp(&score).is_lt());
        self.sorted.insert(pos, score);
        self.trim();
        self.err_history.push(err);
        self.t_index += 1;
        Ok((lambda, err))
    }

    fn trim(&mut self) {
        let Some(cap) = self.max_ledger else { return };
        while self.ledger.len() > cap {
            let old = self.ledger.pop_front().unwrap();
            let pos = self.sorted.partition_point(|v| v.total_cmp(&old).is_lt());
            self.sorted.remove(pos);
        }
    }

    pub fn average_error(&self) -> f64 {
        if self.err_history.is_empty() {
            return 0.0;
        }
        self.err_history.iter().filter(|&&e| e).count() as f64 / self.err_history.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0-based position in the test stream.
    pub step: usize,
    pub x: f64,
    pub y_true: f64,
    /// Level used to build this step's set.
    pub alpha_t: f64,
    pub lambda: f64,
    pub score: f64,
    pub err: bool,
    /// Whether the grid point nearest `y_true` is in the set.
    pub covered: bool,
    pub set_size: f64,
    /// Timestamp of the last shot for this input.
    pub shot_time: f64,
}

/// One step: build the set at the current level, score the true label,
/// update the state.
pub fn aqcp_step(
    state: &mut AqcpState,
    step: usize,
    x: f64,
    y_true: f64,
    shots: &ShotMultiset,
    spec: &ScoreSpec,
    grid: CandidateGrid,
    tiebreak: &TieBreak,
) -> Result<(PredictionSet, StepRecord)> {
    let fitted = FittedScore::fit_shots(spec, shots)?;
    let alpha_t = state.alpha_t;
    let lambda = state.threshold();
    let set = set_from_scores(&candidate_scores(&fitted, tiebreak, &grid), lambda, grid);
    let score = fitted.raw(y_true) + tiebreak.noise(y_true);
    let (_, err) = state.observe(score)?;
    let record = StepRecord {
        step,
        x,
        y_true,
        alpha_t,
        lambda,
        score,
        err,
        covered: set.contains(y_true),
        set_size: set.size(),
        shot_time: shots.records.last().map_or(0.0, |r| r.t),
    };
    Ok((set, record))
}

/// Supplies the shot multiset for the `index`-th input of a run
/// (calibration points first, then the test stream).
pub trait ShotSource {
    fn shots(&mut self, index: usize, x: f64) -> Result<ShotMultiset>;
}

/// Live sampling from the simulator on a shared device clock.
pub struct SimulatorSource<'a> {
    pub model: &'a PqcModel,
    pub schedule: &'a NoiseSchedule,
    pub shots_per_input: usize,
    pub clock: ShotClock,
    pub rng: ChaCha8Rng,
}

impl<'a> SimulatorSource<'a> {
    pub fn new(model: &'a PqcModel, schedule: &'a NoiseSchedule, shots_per_input: usize, clock: ShotClock, seed: u64) -> Self {
        Self { model, schedule, shots_per_input, clock, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ShotSource for SimulatorSource<'_> {
    fn shots(&mut self, _index: usize, x: f64) -> Result<ShotMultiset> {
        sample_shots(self.model, x, self.shots_per_input, self.schedule, &mut self.clock, &mut self.rng)
    }
}

/// Pre-recorded shots keyed by sample index.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    pub samples: BTreeMap<usize, ShotMultiset>,
}

impl ReplaySource {
    pub fn new(samples: BTreeMap<usize, ShotMultiset>) -> Self {
        Self { samples }
    }

    /// Records everything `source` produces for `xs` in order.
    pub fn record(source: &mut dyn ShotSource, xs: &[f64]) -> Result<Self> {
        let mut samples = BTreeMap::new();
        for (i, &x) in xs.iter().enumerate() {
            samples.insert(i, source.shots(i, x)?);
        }
        Ok(Self { samples })
    }
}

impl ShotSource for ReplaySource {
    fn shots(&mut self, index: usize, x: f64) -> Result<ShotMultiset> {
        let s = self.samples.get(&index).ok_or_else(|| invalid(format!("no shots recorded for sample {index}")))?;
        if s.x.to_bits() != x.to_bits() {
            return Err(invalid(format!("sample {index} was recorded at x={} not x={x}", s.x)));
        }
        Ok(s.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AqcpRun {
    pub calibration_scores: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub state: AqcpState,
}

impl AqcpRun {
    pub fn average_error(&self) -> f64 {
        self.state.average_error()
    }

    pub fn average_coverage(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.covered).count() as f64 / self.records.len() as f64
    }

    /// NaN when sets were not built.
    pub fn average_set_size(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.set_size).sum::<f64>() / self.records.len() as f64
    }

    /// `None` when γ = 0 or the stream is empty.
    pub fn bound(&self) -> Option<f64> {
        coverage_bound(self.state.alpha_target, self.state.gamma, self.records.len()).ok()
    }

    /// Deterministic average-error bound; vacuous when γ = 0.
    pub fn bound_satisfied(&self) -> bool {
        match self.bound() {
            Some(b) => (self.average_error() - self.state.alpha_target).abs() <= b,
            None => true,
        }
    }

    /// Every level used lies in `[−γ, 1+γ]`.
    pub fn alpha_bounded(&self) -> bool {
        let g = self.state.gamma;
        self.records.iter().all(|r| r.alpha_t >= -g - 1e-12 && r.alpha_t <= 1.0 + g + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AqcpConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub grid: CandidateGrid,
    /// Seeds the tie-break stream.
    pub seed: u64,
    pub max_ledger: Option<usize>,
    /// When false only the error bits are tracked: `covered = !err` and
    /// `set_size` is NaN.
    pub build_sets: bool,
}

impl AqcpConfig {
    pub fn new(alpha: f64, gamma: f64, seed: u64) -> Self {
        Self { alpha, gamma, grid: CandidateGrid::standard(), seed, max_ledger: None, build_sets: true }
    }
}

/// Calibrates on `calibration` (sample indices `0..n`) and then walks
/// `test` (indices `n..n+n′`).
pub fn run_aqcp(
    calibration: &[(f64, f64)],
    test: &[(f64, f64)],
    spec: &ScoreSpec,
    config: &AqcpConfig,
    source: &mut dyn ShotSource,
) -> Result<AqcpRun> {
    spec.validate()?;
    config.grid.validate()?;
    if calibration.is_empty() {
        return Err(invalid("calibration set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut calibration_scores = Vec::with_capacity(calibration.len());
    for (i, &(x, y)) in calibration.iter().enumerate() {
        let shots = source.shots(i, x)?;
        let tb = TieBreak::from_rng(&mut rng, spec.tiebreak_sigma);
        calibration_scores.push(FittedScore::fit_shots(spec, &shots)?.raw(y) + tb.noise(y));
    }
    let mut state = AqcpState::new(config.alpha, config.gamma, &calibration_scores)?;
    if let Some(cap) = config.max_ledger {
        state = state.with_max_ledger(cap)?;
    }
    let mut records = Vec::with_capacity(test.len());
    for (step, &(x, y)) in test.iter().enumerate() {
        let shots = source.shots(calibration.len() + step, x)?;
        let tb = TieBreak::from_rng(&mut rng, spec.tiebreak_sigma);
        let record = if config.build_sets {
            aqcp_step(&mut state, step, x, y, &shots, spec, config.grid, &tb)?.1
        } else {
            let alpha_t = state.alpha_t;
            let score = FittedScore::fit_shots(spec, &shots)?.raw(y) + tb.noise(y);
            let (lambda, err) = state.observe(score)?;
            StepRecord {
                step,
                x,
                y_true: y,
                alpha_t,
                lambda,
                score,
                err,
                covered: !err,
                set_size: f64::NAN,
                shot_time: shots.records.last().map_or(0.0, |r| r.t),
            }
        };
        records.push(record);
    }
    Ok(AqcpRun { calibration_scores, records, state })
}

/// Feeds a bare score stream through the update rule. Returns the levels
/// used at each step and the error bits.
pub fn run_on_scores(state: &mut AqcpState, scores: &[f64]) -> Result<Vec<(f64, bool)>> {
    scores
        .iter()
        .map(|&s| {
            let a = state.alpha_t;
            state.observe(s).map(|(_, e)| (a, e))
        })
        .collect()
}

/// Uniform draws in `[0, 1)` usable as an exchangeable score stream.
pub fn uniform_scores<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{get_quantile, ScoreKind};
    use crate::pqc::GridMap;

    #[test]
    fn bound_values() {
        let b = coverage_bound(0.1, 0.03, 9900).unwrap();
        assert!((b - 0.0031313).abs() < 1e-7, "{b}");
        let g = 0.07;
        assert!((coverage_bound(0.5, g, 40).unwrap() - (0.5 + g) / (40.0 * g)).abs() < 1e-15);
        let ratio = coverage_bound(0.2, 0.01, 100).unwrap() / coverage_bound(0.2, 0.01, 1000).unwrap();
        assert!((ratio - 10.0).abs() < 1e-12);
        assert!(coverage_bound(0.1, 0.0, 10).is_err());
        assert!(coverage_bound(0.1, 0.03, 0).is_err());
    }

    #[test]
    fn update_rule() {
        let mut s = AqcpState::new(0.1, 0.03, &[0.0, 1.0]).unwrap();
        // λ = 1 at α = 0.1, so 2.0 is an error
        s.observe(2.0).unwrap();
        assert!((s.alpha_t - 0.073).abs() < 1e-15);
        let mut s = AqcpState::new(0.1, 0.03, &[0.0, 1.0]).unwrap();
        s.observe(0.5).unwrap();
        assert!((s.alpha_t - 0.103).abs() < 1e-15);
        assert_eq!(s.ledger_len(), 3);
        assert_eq!(s.t_index, 1);
        assert_eq!(s.scores(), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn zero_gamma_keeps_level() {
        let mut s = AqcpState::new(0.2, 0.0, &[1.0, 2.0, 3.0]).unwrap();
        run_on_scores(&mut s, &[5.0, 0.1, 9.0, 9.0]).unwrap();
        assert_eq!(s.alpha_t, 0.2);
    }

    #[test]
    fn adversarial_stream_respects_bound() {
        let (alpha, gamma) = (0.1, 0.03);
        let mut s = AqcpState::new(alpha, gamma, &[0.0; 10]).unwrap();
        // every new score is larger than anything seen so far
        let scores: Vec<f64> = (1..=5000).map(|i| i as f64).collect();
        let levels = run_on_scores(&mut s, &scores).unwrap();
        for (n, _) in [(100, ()), (1000, ()), (5000, ())] {
            let avg = levels[..n].iter().filter(|l| l.1).count() as f64 / n as f64;
            assert!((avg - alpha).abs() <= coverage_bound(alpha, gamma, n).unwrap(), "n={n} avg={avg}");
        }
        assert!(levels.iter().all(|(a, _)| *a >= -gamma && *a <= 1.0 + gamma));
        assert!(levels.iter().any(|(a, _)| *a < 0.0));
    }

    #[test]
    fn ledger_cap() {
        let s = AqcpState::new(0.1, 0.03, &[5.0, 1.0, 3.0]).unwrap().with_max_ledger(2).unwrap();
        assert_eq!(s.scores(), vec![1.0, 3.0]);
        let mut s = s;
        s.observe(0.5).unwrap();
        assert_eq!(s.scores(), vec![3.0, 0.5]);
        assert_eq!(s.threshold(), 3.0);
    }

    struct Fixed(Vec<f64>);
    impl ShotSource for Fixed {
        fn shots(&mut self, _index: usize, x: f64) -> Result<ShotMultiset> {
            Ok(ShotMultiset::from_values(x, &self.0, &GridMap::standard(5)))
        }
    }

    #[test]
    fn empty_test_stream() {
        let cal = [(0.0, 0.1), (1.0, -0.2)];
        let cfg = AqcpConfig { alpha: 0.1, gamma: 0.03, grid: CandidateGrid::standard(), seed: 1, max_ledger: None, build_sets: true };
        let run = run_aqcp(&cal, &[], &ScoreSpec::new(ScoreKind::Euc), &cfg, &mut Fixed(vec![0.0, 0.2])).unwrap();
        assert!(run.records.is_empty());
        assert_eq!(run.state.scores(), run.calibration_scores);
        assert!(run.bound_satisfied());
    }

    #[test]
    fn zero_gamma_thresholds_match_growing_split() {
        let cal: Vec<(f64, f64)> = (0..20).map(|i| (0.0, -0.5 + 0.05 * i as f64)).collect();
        let test: Vec<(f64, f64)> = (0..60).map(|i| (0.0, ((i * 7) % 31) as f64 * 0.04 - 0.6)).collect();
        let cfg = AqcpConfig { alpha: 0.1, gamma: 0.0, grid: CandidateGrid::standard(), seed: 4, max_ledger: None, build_sets: true };
        let spec = ScoreSpec::new(ScoreKind::Knn);
        let run = run_aqcp(&cal, &test, &spec, &cfg, &mut Fixed(vec![-0.3, 0.0, 0.1, 0.4])).unwrap();
        let mut ledger = run.calibration_scores.clone();
        for r in &run.records {
            assert_eq!(r.lambda, get_quantile(&ledger, 0.1).unwrap());
            ledger.push(r.score);
        }
    }

    #[test]
    fn err_agrees_with_membership_on_grid() {
        let grid = CandidateGrid::standard();
        let cal: Vec<(f64, f64)> = (0..30).map(|i| (0.0, grid.value(100 + 3 * i))).collect();
        let test: Vec<(f64, f64)> = (0..200).map(|i| (0.0, grid.value((i * 13) % 301))).collect();
        for kind in ScoreKind::ALL {
            let cfg = AqcpConfig { alpha: 0.1, gamma: 0.03, grid, seed: 9, max_ledger: None, build_sets: true };
            let run = run_aqcp(&cal, &test, &ScoreSpec::new(kind), &cfg, &mut Fixed(vec![-0.4, -0.35, 0.3, 0.5])).unwrap();
            for r in &run.records {
                assert_eq!(r.err, !r.covered, "{kind} step {}", r.step);
            }
            assert!(run.alpha_bounded());
            assert!(run.bound_satisfied());
        }
    }

    #[test]
    fn replay_checks_x() {
        let mut src = Fixed(vec![0.1]);
        let mut rep = ReplaySource::record(&mut src, &[0.5, 0.25]).unwrap();
        assert!(rep.shots(1, 0.25).is_ok());
        assert!(rep.shots(1, 0.3).is_err());
        assert!(rep.shots(2, 0.25).is_err());
    }
}
