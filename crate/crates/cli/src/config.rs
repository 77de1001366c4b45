//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aqcp::conformal::{CandidateGrid, ScoreKind, ScoreSpec, HdrGrid};
use aqcp::pqc::{AnsatzConfig, Entangler, Optimizer, TrainOptions};
use aqcp::qsim::{ChannelFamily, NoiseSchedule, ParamFn};
use aqcp::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Which noise schedule drives the shot sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePreset {
    /// `noise_family`, `gate_noise` and `readout_flip` as given.
    Custom,
    /// Depolarising ramp 0.01 → 0.15 over the test stream plus two bursts.
    PinnedDrift,
}

impl NoisePreset {
    fn name(self) -> &'static str {
        match self {
            NoisePreset::Custom => "custom",
            NoisePreset::PinnedDrift => "pinned_drift",
        }
    }
}

/// Independent seed streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Shots = 4,
    Conformal = 5,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub scores: Vec<ScoreKind>,
    pub shots: usize,
    pub efficiency_shots: Vec<usize>,
    pub efficiency_n_test: usize,
    pub efficiency_gamma: f64,
    pub window: usize,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub num_qubits: usize,
    pub num_layers: usize,
    pub entangler: Entangler,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub tiebreak_sigma: f64,
    pub hdr_points: usize,
    pub noise: NoisePreset,
    pub noise_family: ChannelFamily,
    pub gate_noise: ParamFn,
    pub readout_flip: ParamFn,
    pub time_resolution: f64,
    pub shot_interval: f64,
    pub seconds_per_input: f64,
    /// 0 keeps every score.
    pub max_ledger: usize,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub shots_file: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            alpha: 0.1,
            gammas: vec![0.0, 0.03],
            scores: ScoreKind::ALL.to_vec(),
            shots: 100,
            efficiency_shots: vec![1, 2, 5, 10, 22, 46, 100, 215, 464, 1000],
            efficiency_n_test: 2000,
            efficiency_gamma: 0.03,
            window: 500,
            n_train: 1000,
            n_cal: 100,
            n_test: 9900,
            epochs: 30,
            learning_rate: 0.01,
            batch_size: 0,
            optimizer: Optimizer::GradientDescent,
            num_qubits: 5,
            num_layers: 5,
            entangler: Entangler::Linear,
            grid_lo: -1.5,
            grid_hi: 1.5,
            grid_points: 301,
            tiebreak_sigma: 1e-4,
            hdr_points: 512,
            noise: NoisePreset::Custom,
            noise_family: ChannelFamily::Depolarising,
            gate_noise: ParamFn::constant(0.0),
            readout_flip: ParamFn::constant(0.0),
            time_resolution: 0.0,
            shot_interval: 1e-3,
            seconds_per_input: 1.0,
            max_ledger: 0,
            model: None,
            data: None,
            shots_file: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let v = v.trim().trim_start_matches('[').trim_end_matches(']');
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| cfg_err(format!("{key}: cannot parse '{}'", v.trim())))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n as u64 + 1, message: format!("expected key = value, got '{line}'") })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse { line: n as u64 + 1, message: format!("duplicate key '{key}'") });
            }
            self.set(key, value).map_err(|e| Error::Parse { line: n as u64 + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let fam = |s: &str| s.trim().parse::<ParamFn>();
        match key {
            "seed" => self.seed = num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v.trim()),
            "alpha" => self.alpha = num(key, v)?,
            "gammas" => self.gammas = list(v, |s| num(key, s))?,
            "scores" => self.scores = list(v, |s| s.parse())?,
            "shots" => self.shots = num(key, v)?,
            "efficiency_shots" => self.efficiency_shots = list(v, |s| num(key, s))?,
            "efficiency_n_test" => self.efficiency_n_test = num(key, v)?,
            "efficiency_gamma" => self.efficiency_gamma = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "n_train" => self.n_train = num(key, v)?,
            "n_cal" => self.n_cal = num(key, v)?,
            "n_test" => self.n_test = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "optimizer" => {
                self.optimizer = match v.trim() {
                    "gd" => Optimizer::GradientDescent,
                    "adam" => Optimizer::Adam,
                    other => return Err(cfg_err(format!("optimizer: expected gd or adam, got '{other}'"))),
                }
            }
            "num_qubits" => self.num_qubits = num(key, v)?,
            "num_layers" => self.num_layers = num(key, v)?,
            "entangler" => self.entangler = v.trim().parse()?,
            "grid_lo" => self.grid_lo = num(key, v)?,
            "grid_hi" => self.grid_hi = num(key, v)?,
            "grid_points" => self.grid_points = num(key, v)?,
            "tiebreak_sigma" => self.tiebreak_sigma = num(key, v)?,
            "hdr_points" => self.hdr_points = num(key, v)?,
            "noise" => {
                self.noise = match v.trim() {
                    "custom" => NoisePreset::Custom,
                    "pinned_drift" => NoisePreset::PinnedDrift,
                    other => return Err(cfg_err(format!("noise: expected custom or pinned_drift, got '{other}'"))),
                }
            }
            "noise_family" => self.noise_family = v.trim().parse()?,
            "gate_noise" => self.gate_noise = fam(v)?,
            "readout_flip" => self.readout_flip = fam(v)?,
            "time_resolution" => self.time_resolution = num(key, v)?,
            "shot_interval" => self.shot_interval = num(key, v)?,
            "seconds_per_input" => self.seconds_per_input = num(key, v)?,
            "max_ledger" => self.max_ledger = num(key, v)?,
            "model" => self.model = opt_path(v),
            "data" => self.data = opt_path(v),
            "shots_file" => self.shots_file = opt_path(v),
            other => return Err(cfg_err(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Canonical text form; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("alpha", self.alpha.to_string()),
            ("gammas", show_list(&self.gammas)),
            ("scores", show_list(&self.scores)),
            ("shots", self.shots.to_string()),
            ("efficiency_shots", show_list(&self.efficiency_shots)),
            ("efficiency_n_test", self.efficiency_n_test.to_string()),
            ("efficiency_gamma", self.efficiency_gamma.to_string()),
            ("window", self.window.to_string()),
            ("n_train", self.n_train.to_string()),
            ("n_cal", self.n_cal.to_string()),
            ("n_test", self.n_test.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("optimizer", if self.optimizer == Optimizer::Adam { "adam" } else { "gd" }.to_string()),
            ("num_qubits", self.num_qubits.to_string()),
            ("num_layers", self.num_layers.to_string()),
            ("entangler", self.entangler.to_string()),
            ("grid_lo", self.grid_lo.to_string()),
            ("grid_hi", self.grid_hi.to_string()),
            ("grid_points", self.grid_points.to_string()),
            ("tiebreak_sigma", self.tiebreak_sigma.to_string()),
            ("hdr_points", self.hdr_points.to_string()),
            ("noise", self.noise.name().to_string()),
            ("noise_family", self.noise_family.to_string()),
            ("gate_noise", self.gate_noise.to_string()),
            ("readout_flip", self.readout_flip.to_string()),
            ("time_resolution", self.time_resolution.to_string()),
            ("shot_interval", self.shot_interval.to_string()),
            ("seconds_per_input", self.seconds_per_input.to_string()),
            ("max_ledger", self.max_ledger.to_string()),
            ("model", show_path(&self.model)),
            ("data", show_path(&self.data)),
            ("shots_file", show_path(&self.shots_file)),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical text, leaving
    /// out the output directory.
    pub fn hash(&self) -> String {
        let text: String = self.to_text().lines().filter(|l| !l.starts_with("out_dir ")).map(|l| format!("{l}\n")).collect();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Comment line placed at the top of every output file.
    pub fn header(&self) -> String {
        format!("# config_hash={} seed={}", self.hash(), self.seed)
    }

    pub fn derived_seed(&self, stream: SeedStream) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng.next_u64()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(cfg_err(msg)) };
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha must lie in (0, 1)")?;
        check(!self.gammas.is_empty(), "gammas must not be empty")?;
        check(self.gammas.iter().all(|g| g.is_finite() && *g >= 0.0), "gammas must be finite and non-negative")?;
        check(!self.scores.is_empty(), "scores must not be empty")?;
        check(self.shots >= 1, "shots must be at least 1")?;
        check(!self.efficiency_shots.is_empty() && self.efficiency_shots.iter().all(|&m| m >= 1), "efficiency_shots must be non-empty and at least 1")?;
        check(self.efficiency_gamma.is_finite() && self.efficiency_gamma >= 0.0, "efficiency_gamma must be non-negative")?;
        check(self.efficiency_n_test >= 1 && self.efficiency_n_test <= self.n_test, "efficiency_n_test must lie in [1, n_test]")?;
        check(self.window >= 1, "window must be at least 1")?;
        check(self.n_train >= 1 && self.n_cal >= 1 && self.n_test >= 1, "n_train, n_cal and n_test must be at least 1")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(self.learning_rate.is_finite() && self.learning_rate > 0.0, "learning_rate must be positive")?;
        check(self.tiebreak_sigma.is_finite() && self.tiebreak_sigma >= 0.0, "tiebreak_sigma must be non-negative")?;
        check(self.shot_interval.is_finite() && self.shot_interval > 0.0, "shot_interval must be positive")?;
        check(self.seconds_per_input.is_finite() && self.seconds_per_input > 0.0, "seconds_per_input must be positive")?;
        let most = self.efficiency_shots.iter().copied().chain([self.shots]).max().unwrap_or(1);
        check(
            most as f64 * self.shot_interval <= self.seconds_per_input * (1.0 + 1e-12),
            "the largest shot batch must fit in seconds_per_input",
        )?;
        self.ansatz().validate()?;
        self.grid().validate()?;
        for kind in &self.scores {
            self.score_spec(*kind).validate()?;
        }
        self.schedule()?;
        Ok(())
    }

    /// Input files named in the config must exist.
    pub fn check_inputs(&self) -> Result<()> {
        for p in [&self.data, &self.shots_file].into_iter().flatten() {
            if !p.is_file() {
                return Err(cfg_err(format!("input file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn ansatz(&self) -> AnsatzConfig {
        AnsatzConfig { num_qubits: self.num_qubits, num_layers: self.num_layers, entangler: self.entangler }
    }

    pub fn grid(&self) -> CandidateGrid {
        CandidateGrid { lo: self.grid_lo, hi: self.grid_hi, points: self.grid_points }
    }

    pub fn score_spec(&self, kind: ScoreKind) -> ScoreSpec {
        let mut spec = ScoreSpec::new(kind);
        spec.tiebreak_sigma = self.tiebreak_sigma;
        spec.hdr_grid = HdrGrid::Auto { points: self.hdr_points };
        spec
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            shuffle_seed: self.derived_seed(SeedStream::Shuffle),
            optimizer: self.optimizer,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join("model.json"))
    }

    /// Test stream length in seconds.
    pub fn stream_seconds(&self) -> f64 {
        self.n_test as f64 * self.seconds_per_input
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match self.noise {
            NoisePreset::Custom => {
                Ok(NoiseSchedule::new(self.noise_family, self.gate_noise.clone(), self.readout_flip.clone())?
                    .with_time_resolution(self.time_resolution))
            }
            NoisePreset::PinnedDrift => {
                let t = self.stream_seconds();
                let gate = ParamFn::Sum {
                    terms: vec![
                        ParamFn::LinearDrift { p0: 0.01, p1: 0.15, t_end: t },
                        ParamFn::Burst { p_base: 0.0, p_burst: 0.1, burst_times: vec![0.3 * t, 0.7 * t], burst_width: 0.03 * t },
                    ],
                };
                let resolution = if self.time_resolution > 0.0 { self.time_resolution } else { self.seconds_per_input };
                Ok(NoiseSchedule::new(ChannelFamily::Depolarising, gate, ParamFn::constant(0.01))?
                    .with_time_resolution(resolution))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("gammas = [0, 0.01, 0.03]\nscores = hdr, euc\ngate_noise = burst(0.01,0.3,[100;250],5)\nmodel = m.json").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_lines_report_position() {
        let mut cfg = ExperimentConfig::default();
        match cfg.apply_text("alpha = 0.1\n\nwindow 500") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(cfg.apply_text("colour = blue").is_err());
        assert!(ExperimentConfig::default().apply_text("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn range_checks() {
        for text in ["alpha = 1.5", "gammas = -0.1", "shots = 0", "efficiency_n_test = 20000", "grid_points = 1", "shots = 5000"] {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_text(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.alpha = 0.2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let c = ExperimentConfig { out_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn seed_streams_differ() {
        let cfg = ExperimentConfig::default();
        let s: Vec<u64> = [SeedStream::Data, SeedStream::Init, SeedStream::Shots].iter().map(|&k| cfg.derived_seed(k)).collect();
        assert!(s[0] != s[1] && s[1] != s[2]);
    }

    #[test]
    fn pinned_drift_spans_the_stream() {
        let cfg = ExperimentConfig { noise: NoisePreset::PinnedDrift, n_test: 1000, ..Default::default() };
        let s = cfg.schedule().unwrap();
        assert!((s.params_at(0.0).gate - 0.01).abs() < 1e-12);
        assert!((s.params_at(1000.0).gate - 0.15).abs() < 1e-12);
        assert!((s.params_at(305.5).gate - (0.01 + 0.14 * 0.305 + 0.1)).abs() < 1e-12);
        assert_eq!(s.params_at(500.0).readout_flip, 0.01);
    }
}
