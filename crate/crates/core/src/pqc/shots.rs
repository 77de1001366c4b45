//! Timestamped shot collection and the shots CSV exchange format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::grid::{Bitstring, GridMap};
use super::model::PqcModel;
use crate::error::{invalid, Error, Result};
use crate::qsim::{self, NoiseParams, NoiseSchedule, StateVector};

pub const SHOTS_CSV_HEADER: &str = "sample_index,x,t_seconds,bitstring,y_mapped";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub t: f64,
    pub bitstring: Bitstring,
    pub y_hat: f64,
}

/// All shots taken for one input, duplicates kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotMultiset {
    pub x: f64,
    pub records: Vec<ShotRecord>,
}

impl ShotMultiset {
    pub fn new(x: f64) -> Self {
        Self { x, records: Vec::new() }
    }

    /// Builds a multiset from bare target-space values (timestamps zero,
    /// bitstrings the nearest lattice cell). Useful for synthetic streams.
    pub fn from_values(x: f64, values: &[f64], grid: &GridMap) -> Self {
        let records = values
            .iter()
            .map(|&y| ShotRecord {
                t: 0.0,
                bitstring: Bitstring::new(grid.nearest_index(y) as u32, grid.num_qubits).expect("lattice index"),
                y_hat: y,
            })
            .collect();
        Self { x, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_hat).collect()
    }
}

/// Device clock: shot `m` of a batch fires at `t₀ + m·Δt`; consecutive
/// batches are separated by an extra `batch_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotClock {
    now: f64,
    pub shot_interval: f64,
    pub batch_gap: f64,
}

impl ShotClock {
    pub fn new(start: f64, shot_interval: f64, batch_gap: f64) -> Self {
        Self { now: start, shot_interval, batch_gap }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Timestamp of the next shot; advances by one shot interval.
    pub fn tick(&mut self) -> f64 {
        let t = self.now;
        self.now += self.shot_interval;
        t
    }

    pub fn end_batch(&mut self) {
        self.now += self.batch_gap;
    }
}

impl Default for ShotClock {
    /// 1 ms between shots, no gap between batches.
    fn default() -> Self {
        Self::new(0.0, 1e-3, 0.0)
    }
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Takes `shots` measurements of the model at input `x`. Each shot reads the
/// clock, evaluates the schedule at that instant, and samples one bitstring.
pub fn sample_shots<R: Rng + ?Sized>(
    model: &PqcModel,
    x: f64,
    shots: usize,
    schedule: &NoiseSchedule,
    clock: &mut ShotClock,
    rng: &mut R,
) -> Result<ShotMultiset> {
    if shots == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    schedule.validate()?;
    let q = model.num_qubits();
    let circuit = model.circuit(x)?;
    let mut noiseless: Option<Vec<f64>> = None;
    // distributions already computed in this batch, keyed by channel strengths
    let mut cache: Vec<(NoiseParams, Vec<f64>)> = Vec::new();
    let mut out = ShotMultiset { x, records: Vec::with_capacity(shots) };
    for _ in 0..shots {
        let t = clock.tick();
        let params = schedule.params_at(t);
        let pos = match cache.iter().position(|(p, _)| *p == params) {
            Some(pos) => pos,
            None => {
                let probs = if params.gate == 0.0 {
                    let base = match &noiseless {
                        Some(p) => p.clone(),
                        None => {
                            let p = StateVector::zero(q)?.run(&circuit)?.probabilities();
                            noiseless = Some(p.clone());
                            p
                        }
                    };
                    qsim::apply_readout_flips(&base, q, params.readout_flip)
                } else {
                    qsim::shot_distribution(q, &circuit, schedule, t)?
                };
                cache.push((params, cumulative(&probs)));
                cache.len() - 1
            }
        };
        let idx = sample_index(&cache[pos].1, rng);
        let bitstring = Bitstring::new(idx as u32, q)?;
        out.records.push(ShotRecord { t, bitstring, y_hat: model.grid.map(&bitstring)? });
    }
    clock.end_batch();
    Ok(out)
}

/// Draws `shots` bitstrings from a fixed distribution (no clock, no noise).
pub fn sample_from_distribution<R: Rng + ?Sized>(
    probs: &[f64],
    x: f64,
    shots: usize,
    grid: &GridMap,
    rng: &mut R,
) -> Result<ShotMultiset> {
    if probs.len() != grid.levels() {
        return Err(invalid("distribution length does not match the grid"));
    }
    let cdf = cumulative(probs);
    let mut out = ShotMultiset { x, records: Vec::with_capacity(shots) };
    for _ in 0..shots {
        let bitstring = Bitstring::new(sample_index(&cdf, rng) as u32, grid.num_qubits)?;
        out.records.push(ShotRecord { t: 0.0, bitstring, y_hat: grid.map(&bitstring)? });
    }
    Ok(out)
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes shots as CSV with header `sample_index,x,t_seconds,bitstring,y_mapped`.
pub fn write_shots<W: Write>(writer: W, samples: &BTreeMap<usize, ShotMultiset>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{SHOTS_CSV_HEADER}")?;
    for (index, set) in samples {
        for r in &set.records {
            writeln!(w, "{index},{},{},{},{}", fmt_float(set.x), fmt_float(r.t), r.bitstring, fmt_float(r.y_hat))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_shots_file(path: &Path, samples: &BTreeMap<usize, ShotMultiset>) -> Result<()> {
    write_shots(File::create(path)?, samples)
}

/// Parses shots CSV, checking every row against `grid`.
pub fn read_shots<R: Read>(reader: R, grid: &GridMap) -> Result<BTreeMap<usize, ShotMultiset>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != SHOTS_CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("expected header '{SHOTS_CSV_HEADER}'") });
    }
    let tol = 1e-9 * grid.spacing();
    let mut out: BTreeMap<usize, ShotMultiset> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        if row.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", row.len())));
        }
        let index: usize = row[0].parse().map_err(|_| err(format!("bad sample_index '{}'", &row[0])))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            row[i].parse::<f64>().map_err(|_| err(format!("bad {name} '{}'", &row[i])))
        };
        let x = num(1, "x")?;
        let t = num(2, "t_seconds")?;
        let bitstring: Bitstring = row[3].parse().map_err(|_| err(format!("bad bitstring '{}'", &row[3])))?;
        if bitstring.len() != grid.num_qubits {
            return Err(err(format!(
                "bitstring '{}' has {} bits, expected {}",
                &row[3],
                bitstring.len(),
                grid.num_qubits
            )));
        }
        let y = num(4, "y_mapped")?;
        let expected = grid.map(&bitstring)?;
        if (y - expected).abs() > tol {
            return Err(err(format!("y_mapped {y} does not equal f({bitstring}) = {expected}")));
        }
        let entry = out.entry(index).or_insert_with(|| ShotMultiset::new(x));
        if entry.x.to_bits() != x.to_bits() {
            return Err(err(format!("sample {index} has conflicting x values")));
        }
        entry.records.push(ShotRecord { t, bitstring, y_hat: y });
    }
    Ok(out)
}

pub fn load_shots_file(path: &Path, grid: &GridMap) -> Result<BTreeMap<usize, ShotMultiset>> {
    read_shots(File::open(path)?, grid)
}
