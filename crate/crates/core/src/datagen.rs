//! Seeded synthetic task: `X ~ U(−10, 10)`, `Y | X=x` an equal mixture of
//! `N(±μ(x), 0.05²)` with `μ(x) = ½ sin(⅘x) + x/20`.

use std::io::{BufWriter, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const X_LOW: f64 = -10.0;
pub const X_HIGH: f64 = 10.0;
pub const COMPONENT_SIGMA: f64 = 0.05;

pub const DATASET_CSV_HEADER: &str = "split,x,y";

/// Mean of the positive mixture component.
pub fn mu(x: f64) -> f64 {
    0.5 * (0.8 * x).sin() + x / 20.0
}

/// One `(x, y)` draw; the component sign is a fair coin from the same stream.
pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let x = rng.random_range(X_LOW..X_HIGH);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let z: f64 = StandardNormal.sample(rng);
    (x, sign * mu(x) + COMPONENT_SIGMA * z)
}

/// `y` for a fixed `x`.
pub fn draw_y<R: Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let z: f64 = StandardNormal.sample(rng);
    sign * mu(x) + COMPONENT_SIGMA * z
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<(f64, f64)>,
    pub calibration: Vec<(f64, f64)>,
    pub test: Vec<(f64, f64)>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.calibration.len(), self.test.len())
    }

    /// CSV with header `split,x,y`; rows in train, calibration, test order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "{DATASET_CSV_HEADER}")?;
        for (name, rows) in [("train", &self.train), ("calibration", &self.calibration), ("test", &self.test)] {
            for (x, y) in rows {
                writeln!(w, "{name},{x:.16e},{y:.16e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.join(",") != DATASET_CSV_HEADER {
            return Err(Error::Parse { line: 1, message: format!("expected header '{DATASET_CSV_HEADER}'") });
        }
        let mut split = DatasetSplit { seed, train: vec![], calibration: vec![], test: vec![] };
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
            let line = row.position().map_or(0, |p| p.line());
            let err = |m: String| Error::Parse { line, message: m };
            if row.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", row.len())));
            }
            let x: f64 = row[1].parse().map_err(|_| err(format!("bad x '{}'", &row[1])))?;
            let y: f64 = row[2].parse().map_err(|_| err(format!("bad y '{}'", &row[2])))?;
            match &row[0] {
                "train" => split.train.push((x, y)),
                "calibration" => split.calibration.push((x, y)),
                "test" => split.test.push((x, y)),
                other => return Err(err(format!("unknown split '{other}'"))),
            }
        }
        Ok(split)
    }
}

/// Independent i.i.d. draws for the three splits from one seeded stream.
pub fn generate(seed: u64, n_tr: usize, n_cal: usize, n_test: usize) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut take = |n: usize| (0..n).map(|_| draw(&mut rng)).collect::<Vec<_>>();
    let train = take(n_tr);
    let calibration = take(n_cal);
    let test = take(n_test);
    DatasetSplit { seed, train, calibration, test }
}
