//! The subcommands as library functions. Each `cmd_*` writes its files under
//! `out_dir` and returns a [`Report`].

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aqcp::conformal::{run_aqcp, AqcpConfig, AqcpRun, ScoreKind, ShotSource};
use aqcp::datagen::{generate, DatasetSplit};
use aqcp::oracle::optimal_set;
use aqcp::pqc::{read_shots, train, write_shots, PqcModel, ShotMultiset, TrainReport};
use aqcp::qsim::NoiseSchedule;
use aqcp::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SeedStream};
use crate::metrics::{metrics_rows, write_metrics, write_summary, CellSummary, MetricsRow};
use crate::source::{DistributionCache, SlotSource, Timing};

/// Files written and invariant checks that failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Dataset from `data` when given, otherwise drawn from the data seed.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    match &cfg.data {
        Some(path) => DatasetSplit::read_csv(File::open(path)?, cfg.seed),
        None => Ok(generate(cfg.derived_seed(SeedStream::Data), cfg.n_train, cfg.n_cal, cfg.n_test)),
    }
}

pub fn load_model(cfg: &ExperimentConfig) -> Result<PqcModel> {
    let path = cfg.model_path();
    if !path.is_file() {
        return Err(Error::Config(format!("model file not found: {} (run `aqcp train` first)", path.display())));
    }
    PqcModel::load(&path)
}

pub fn train_model(cfg: &ExperimentConfig, split: &DatasetSplit) -> Result<(PqcModel, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.derived_seed(SeedStream::Init));
    let init = PqcModel::init(cfg.ansatz(), &mut rng)?;
    train(&split.train, &init, &cfg.train_options())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Report> {
    let split = load_dataset(cfg)?;
    let (model, report) = train_model(cfg, &split)?;
    let model_path = cfg.model_path();
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(&model_path)?;
    let loss_path = cfg.out_dir.join("loss.csv");
    let mut w = create(&loss_path)?;
    writeln!(w, "{}", cfg.header())?;
    writeln!(w, "epoch,loss")?;
    for (e, loss) in report.loss_history.iter().enumerate() {
        writeln!(w, "{},{loss}", e + 1)?;
    }
    w.flush()?;
    let mut out = Report { files: vec![model_path, loss_path], failures: vec![] };
    if report.loss_history.iter().any(|l| !l.is_finite()) {
        out.failures.push("non-finite training loss".into());
    }
    Ok(out)
}

pub fn cmd_generate_data(cfg: &ExperimentConfig) -> Result<Report> {
    let split = generate(cfg.derived_seed(SeedStream::Data), cfg.n_train, cfg.n_cal, cfg.n_test);
    let path = cfg.out_dir.join("dataset.csv");
    let mut w = create(&path)?;
    writeln!(w, "{}", cfg.header())?;
    split.write_csv(&mut w)?;
    w.flush()?;
    Ok(Report { files: vec![path], failures: vec![] })
}

/// Calibration then test inputs, in shot-index order.
fn stream_inputs(split: &DatasetSplit, n_test: usize) -> Vec<(f64, f64)> {
    split.calibration.iter().chain(split.test.iter().take(n_test)).copied().collect()
}

fn timing(cfg: &ExperimentConfig, n_cal: usize) -> Timing {
    Timing { start: -(n_cal as f64) * cfg.seconds_per_input, slot: cfg.seconds_per_input, shot_interval: cfg.shot_interval }
}

pub fn cmd_sample_shots(cfg: &ExperimentConfig) -> Result<Report> {
    let model = load_model(cfg)?;
    let split = load_dataset(cfg)?;
    let schedule = cfg.schedule()?;
    let inputs = stream_inputs(&split, split.test.len());
    let mut source = SlotSource {
        model: &model,
        schedule: &schedule,
        shots: cfg.shots,
        timing: timing(cfg, split.calibration.len()),
        seed: cfg.derived_seed(SeedStream::Shots),
        cache: None,
    };
    let mut samples = BTreeMap::new();
    for (i, &(x, _)) in inputs.iter().enumerate() {
        samples.insert(i, source.shots(i, x)?);
    }
    let path = cfg.out_dir.join("shots.csv");
    let mut w = create(&path)?;
    writeln!(w, "{}", cfg.header())?;
    write_shots(&mut w, &samples)?;
    w.flush()?;
    Ok(Report { files: vec![path], failures: vec![] })
}

/// Replays recorded shots without taking ownership of them.
struct Replay<'a>(&'a BTreeMap<usize, ShotMultiset>);

impl ShotSource for Replay<'_> {
    fn shots(&mut self, index: usize, x: f64) -> Result<ShotMultiset> {
        match self.0.get(&index) {
            Some(s) if s.x.to_bits() == x.to_bits() => Ok(s.clone()),
            Some(s) => Err(Error::Validation(format!("recorded sample {index} has x={} but the stream has x={x}", s.x))),
            None => Err(Error::Validation(format!("no recorded shots for sample {index}"))),
        }
    }
}

/// Where a cell's shots come from.
pub enum Shots<'a> {
    Simulate { model: &'a PqcModel, schedule: &'a NoiseSchedule, cache: Option<DistributionCache> },
    Recorded(BTreeMap<usize, ShotMultiset>),
}

impl<'a> Shots<'a> {
    /// Stationary schedules cache one outcome distribution per input. Moving
    /// schedules record `shots` shots per input once so every cell replays
    /// the same ones.
    pub fn prepare(
        cfg: &ExperimentConfig,
        model: &'a PqcModel,
        schedule: &'a NoiseSchedule,
        inputs: &[(f64, f64)],
        n_cal: usize,
        shots: usize,
    ) -> Result<Self> {
        if schedule.is_stationary() {
            let xs: Vec<f64> = inputs.iter().map(|p| p.0).collect();
            let cache = DistributionCache::build(model, schedule, &xs)?;
            return Ok(Shots::Simulate { model, schedule, cache: Some(cache) });
        }
        let source = SlotSource {
            model,
            schedule,
            shots,
            timing: timing(cfg, n_cal),
            seed: cfg.derived_seed(SeedStream::Shots),
            cache: None,
        };
        let recorded = inputs
            .par_iter()
            .enumerate()
            .map(|(i, &(x, _))| Ok((i, SlotSource { ..source }.shots(i, x)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Shots::Recorded(recorded))
    }

    fn source(&self, cfg: &ExperimentConfig, shots: usize, n_cal: usize) -> Box<dyn ShotSource + '_> {
        match self {
            Shots::Simulate { model, schedule, cache } => Box::new(SlotSource {
                model,
                schedule,
                shots,
                timing: timing(cfg, n_cal),
                seed: cfg.derived_seed(SeedStream::Shots),
                cache: cache.as_ref(),
            }),
            Shots::Recorded(map) => Box::new(Replay(map)),
        }
    }
}

pub struct CellResult {
    pub gamma: f64,
    pub kind: ScoreKind,
    pub run: AqcpRun,
    pub rows: Vec<MetricsRow>,
    pub summary: CellSummary,
}

fn aqcp_config(cfg: &ExperimentConfig, gamma: f64, build_sets: bool) -> AqcpConfig {
    AqcpConfig {
        alpha: cfg.alpha,
        gamma,
        grid: cfg.grid(),
        seed: cfg.derived_seed(SeedStream::Conformal),
        max_ledger: (cfg.max_ledger > 0).then_some(cfg.max_ledger),
        build_sets,
    }
}

/// One AQCP run per `(γ, score)` pair over the calibration and test splits.
/// All cells share the same shots.
pub fn run_cells(cfg: &ExperimentConfig, split: &DatasetSplit, shots: &Shots, build_sets: bool) -> Result<Vec<CellResult>> {
    let cells: Vec<(f64, ScoreKind)> =
        cfg.gammas.iter().flat_map(|&g| cfg.scores.iter().map(move |&k| (g, k))).collect();
    let test = &split.test[..cfg.n_test.min(split.test.len())];
    cells
        .into_par_iter()
        .map(|(gamma, kind)| {
            let mut source = shots.source(cfg, cfg.shots, split.calibration.len());
            let run = run_aqcp(
                &split.calibration,
                test,
                &cfg.score_spec(kind),
                &aqcp_config(cfg, gamma, build_sets),
                source.as_mut(),
            )?;
            let rows = metrics_rows(&run.records, cfg.window);
            let summary = CellSummary::new(gamma, kind.name(), &run, &rows, 1.0 - cfg.alpha);
            Ok(CellResult { gamma, kind, run, rows, summary })
        })
        .collect()
}

fn cell_failures(cfg: &ExperimentConfig, c: &CellResult) -> Vec<String> {
    let mut out = Vec::new();
    let label = format!("gamma={} score={}", c.gamma, c.kind);
    if !c.summary.bound_satisfied {
        out.push(format!("{label}: average error {} violates the bound {:?}", 1.0 - c.summary.avg_coverage, c.summary.bound));
    }
    if !c.summary.alpha_bounded {
        out.push(format!("{label}: alpha_t left [-gamma, 1+gamma]"));
    }
    if c.rows.iter().filter_map(|r| r.coverage_ma).any(|v| !(0.0..=1.0).contains(&v)) {
        out.push(format!("{label}: moving coverage outside [0, 1]"));
    }
    let full = cfg.grid().full_size() + 1e-9;
    if c.rows.iter().any(|r| r.set_size > full || r.set_size < 0.0) {
        out.push(format!("{label}: set size outside [0, {full}]"));
    }
    out
}

fn shots_for(cfg: &ExperimentConfig, model: &PqcModel) -> Result<BTreeMap<usize, ShotMultiset>> {
    let path = cfg.shots_file.as_ref().ok_or_else(|| Error::Config("no shots file".into()))?;
    read_shots(File::open(path)?, &model.grid)
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Report> {
    let model = load_model(cfg)?;
    let split = load_dataset(cfg)?;
    let schedule = cfg.schedule()?;
    let shots = match &cfg.shots_file {
        Some(_) => Shots::Recorded(shots_for(cfg, &model)?),
        None => {
            let inputs = stream_inputs(&split, cfg.n_test);
            Shots::prepare(cfg, &model, &schedule, &inputs, split.calibration.len(), cfg.shots)?
        }
    };
    let cells = run_cells(cfg, &split, &shots, true)?;
    let mut report = Report::default();
    let header = cfg.header();
    for c in &cells {
        let path = cfg.out_dir.join(format!("run_gamma{}_{}.csv", c.gamma, c.kind));
        let mut w = create(&path)?;
        write_metrics(&mut w, &header, &c.rows)?;
        w.flush()?;
        report.files.push(path);
        report.failures.extend(cell_failures(cfg, c));
    }
    let path = cfg.out_dir.join("run_summary.csv");
    let mut w = create(&path)?;
    let summaries: Vec<CellSummary> = cells.iter().map(|c| c.summary.clone()).collect();
    write_summary(&mut w, &header, &summaries)?;
    w.flush()?;
    report.files.push(path);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub shots: usize,
    pub score: ScoreKind,
    pub avg_coverage: f64,
    pub avg_set_size: f64,
    pub oracle_avg_set_size: f64,
    pub bound: Option<f64>,
    pub bound_satisfied: bool,
    /// Per-step set sizes, kept for tolerance estimates.
    pub set_sizes: Vec<f64>,
}

/// Mean optimal-set length over `xs`.
pub fn oracle_average(xs: &[f64], alpha: f64) -> Result<f64> {
    let lengths = xs.par_iter().map(|&x| Ok(optimal_set(x, alpha)?.length())).collect::<Result<Vec<f64>>>()?;
    Ok(lengths.iter().sum::<f64>() / lengths.len() as f64)
}

/// AQCP at `efficiency_gamma` for every `(M, score)` pair over the first
/// `efficiency_n_test` test inputs.
pub fn efficiency_rows(cfg: &ExperimentConfig, model: &PqcModel, split: &DatasetSplit) -> Result<Vec<EfficiencyRow>> {
    let schedule = cfg.schedule()?;
    let n_test = cfg.efficiency_n_test.min(split.test.len());
    let inputs = stream_inputs(split, n_test);
    let n_cal = split.calibration.len();
    let oracle = oracle_average(&inputs[n_cal..].iter().map(|p| p.0).collect::<Vec<_>>(), cfg.alpha)?;
    let test = &split.test[..n_test];
    let stationary = match schedule.is_stationary() {
        true => Some(Shots::prepare(cfg, model, &schedule, &inputs, n_cal, 1)?),
        false => None,
    };
    let mut rows = Vec::new();
    for &m in &cfg.efficiency_shots {
        let recorded;
        let shots = match &stationary {
            Some(s) => s,
            None => {
                recorded = Shots::prepare(cfg, model, &schedule, &inputs, n_cal, m)?;
                &recorded
            }
        };
        let cells = cfg
            .scores
            .par_iter()
            .map(|&kind| {
                let mut source = shots.source(cfg, m, n_cal);
                let run = run_aqcp(
                    &split.calibration,
                    test,
                    &cfg.score_spec(kind),
                    &aqcp_config(cfg, cfg.efficiency_gamma, true),
                    source.as_mut(),
                )?;
                Ok(EfficiencyRow {
                    shots: m,
                    score: kind,
                    avg_coverage: 1.0 - run.average_error(),
                    avg_set_size: run.average_set_size(),
                    oracle_avg_set_size: oracle,
                    bound: run.bound(),
                    bound_satisfied: run.bound_satisfied(),
                    set_sizes: run.records.iter().map(|r| r.set_size).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(cells);
    }
    Ok(rows)
}

pub fn cmd_efficiency(cfg: &ExperimentConfig) -> Result<Report> {
    let model = load_model(cfg)?;
    let split = load_dataset(cfg)?;
    let rows = efficiency_rows(cfg, &model, &split)?;
    let path = cfg.out_dir.join("efficiency.csv");
    let mut w = create(&path)?;
    writeln!(w, "{}", cfg.header())?;
    writeln!(w, "M,score,avg_coverage,avg_set_size,oracle_avg_set_size")?;
    let mut report = Report::default();
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.shots, r.score, r.avg_coverage, r.avg_set_size, r.oracle_avg_set_size)?;
        if !r.bound_satisfied {
            report.failures.push(format!("M={} score={}: coverage {} outside the bound {:?}", r.shots, r.score, r.avg_coverage, r.bound));
        }
    }
    w.flush()?;
    report.files.push(path);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub index: usize,
    pub x: f64,
    pub length: f64,
    pub grid_size: f64,
    pub mass: f64,
}

pub fn oracle_rows(cfg: &ExperimentConfig, xs: &[f64]) -> Result<Vec<OracleRow>> {
    let grid = cfg.grid();
    xs.par_iter()
        .enumerate()
        .map(|(index, &x)| {
            let c = optimal_set(x, cfg.alpha)?;
            Ok(OracleRow { index, x, length: c.length(), grid_size: c.grid_size(grid), mass: c.mass })
        })
        .collect()
}

pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<Report> {
    let split = load_dataset(cfg)?;
    let xs: Vec<f64> = split.test.iter().take(cfg.n_test).map(|p| p.0).collect();
    let rows = oracle_rows(cfg, &xs)?;
    let header = cfg.header();
    let mut report = Report::default();
    let path = cfg.out_dir.join("oracle_sizes.csv");
    let mut w = create(&path)?;
    writeln!(w, "{header}")?;
    writeln!(w, "index,x,length,grid_size,mass")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.index, r.x, r.length, r.grid_size, r.mass)?;
        if (r.mass - (1.0 - cfg.alpha)).abs() > 1e-4 {
            report.failures.push(format!("x={}: optimal-set mass {} misses {}", r.x, r.mass, 1.0 - cfg.alpha));
        }
    }
    w.flush()?;
    report.files.push(path);
    let n = rows.len().max(1) as f64;
    let path = cfg.out_dir.join("oracle_summary.csv");
    let mut w = create(&path)?;
    writeln!(w, "{header}")?;
    writeln!(w, "alpha,n,avg_length,avg_grid_size")?;
    writeln!(
        w,
        "{},{},{},{}",
        cfg.alpha,
        rows.len(),
        rows.iter().map(|r| r.length).sum::<f64>() / n,
        rows.iter().map(|r| r.grid_size).sum::<f64>() / n
    )?;
    w.flush()?;
    report.files.push(path);
    Ok(report)
}
