//! Per-step metrics rows and run summaries.

use std::io::Write;

use aqcp::conformal::{AqcpRun, StepRecord};
use aqcp::Result;

pub const METRICS_HEADER: &str = "step,alpha_t,err,covered,set_size,lambda,coverage_ma,wall_time_ms";
pub const SUMMARY_HEADER: &str =
    "gamma,score,n_test,avg_coverage,avg_set_size,avg_grid_coverage,bound,bound_satisfied,alpha_bounded,rms_ma_deviation";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub alpha_t: f64,
    pub err: bool,
    pub covered: bool,
    pub set_size: f64,
    pub lambda: f64,
    /// `None` until `window` steps have been seen.
    pub coverage_ma: Option<f64>,
    /// Shot-clock time of the step's last shot.
    pub wall_time_ms: f64,
}

/// Trailing mean of `1 − err` over `window` steps.
pub fn moving_coverage(errs: &[bool], window: usize) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(errs.len());
    let mut misses = 0usize;
    for (t, &e) in errs.iter().enumerate() {
        misses += e as usize;
        if t >= window {
            misses -= errs[t - window] as usize;
        }
        out.push((t + 1 >= window).then(|| 1.0 - misses as f64 / window as f64));
    }
    out
}

pub fn metrics_rows(records: &[StepRecord], window: usize) -> Vec<MetricsRow> {
    let errs: Vec<bool> = records.iter().map(|r| r.err).collect();
    records
        .iter()
        .zip(moving_coverage(&errs, window))
        .map(|(r, ma)| MetricsRow {
            step: r.step,
            alpha_t: r.alpha_t,
            err: r.err,
            covered: r.covered,
            set_size: r.set_size,
            lambda: r.lambda,
            coverage_ma: ma,
            wall_time_ms: r.shot_time * 1e3,
        })
        .collect()
}

/// Root-mean-square distance of the defined moving coverage from `target`.
pub fn rms_deviation(rows: &[MetricsRow], target: f64) -> Option<f64> {
    let d: Vec<f64> = rows.iter().filter_map(|r| r.coverage_ma).map(|c| (c - target).powi(2)).collect();
    (!d.is_empty()).then(|| (d.iter().sum::<f64>() / d.len() as f64).sqrt())
}

pub fn write_metrics<W: Write>(mut w: W, header: &str, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let ma = r.coverage_ma.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.3}",
            r.step, r.alpha_t, r.err as u8, r.covered as u8, r.set_size, r.lambda, ma, r.wall_time_ms
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub gamma: f64,
    pub score: String,
    pub n_test: usize,
    /// `1 − average err`.
    pub avg_coverage: f64,
    pub avg_set_size: f64,
    /// Fraction of steps whose label's nearest grid point was in the set.
    pub avg_grid_coverage: f64,
    pub bound: Option<f64>,
    pub bound_satisfied: bool,
    pub alpha_bounded: bool,
    pub rms_ma_deviation: Option<f64>,
}

impl CellSummary {
    pub fn new(gamma: f64, score: &str, run: &AqcpRun, rows: &[MetricsRow], target_coverage: f64) -> Self {
        Self {
            gamma,
            score: score.to_string(),
            n_test: run.records.len(),
            avg_coverage: 1.0 - run.average_error(),
            avg_set_size: run.average_set_size(),
            avg_grid_coverage: run.average_coverage(),
            bound: run.bound(),
            bound_satisfied: run.bound_satisfied(),
            alpha_bounded: run.alpha_bounded(),
            rms_ma_deviation: rms_deviation(rows, target_coverage),
        }
    }

    pub fn passes(&self) -> bool {
        self.bound_satisfied && self.alpha_bounded
    }
}

pub fn write_summary<W: Write>(mut w: W, header: &str, cells: &[CellSummary]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "{SUMMARY_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|b| b.to_string()).unwrap_or_default();
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            c.gamma,
            c.score,
            c.n_test,
            c.avg_coverage,
            c.avg_set_size,
            c.avg_grid_coverage,
            opt(c.bound),
            c.bound_satisfied,
            c.alpha_bounded,
            opt(c.rms_ma_deviation)
        )?;
    }
    Ok(())
}
