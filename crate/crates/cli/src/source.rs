//! Shot sources with a fixed per-input time slot.

use aqcp::conformal::ShotSource;
use aqcp::pqc::{sample_from_distribution, sample_shots, PqcModel, ShotClock, ShotMultiset};
use aqcp::qsim::{self, NoiseSchedule};
use aqcp::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Input `i` occupies `[start + i·slot, start + (i+1)·slot)`; its shots fire
/// every `shot_interval` from the slot start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub start: f64,
    pub slot: f64,
    pub shot_interval: f64,
}

impl Timing {
    pub fn slot_start(&self, index: usize) -> f64 {
        self.start + index as f64 * self.slot
    }
}

/// Per-input outcome distributions, valid only for a stationary schedule.
#[derive(Debug, Clone)]
pub struct DistributionCache {
    xs: Vec<f64>,
    probs: Vec<Vec<f64>>,
}

impl DistributionCache {
    pub fn build(model: &PqcModel, schedule: &NoiseSchedule, xs: &[f64]) -> Result<Self> {
        let q = model.num_qubits();
        let probs = xs
            .par_iter()
            .map(|&x| qsim::shot_distribution(q, &model.circuit(x)?, schedule, 0.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { xs: xs.to_vec(), probs })
    }

    fn get(&self, index: usize, x: f64) -> Option<&[f64]> {
        match self.xs.get(index) {
            Some(v) if v.to_bits() == x.to_bits() => Some(&self.probs[index]),
            _ => None,
        }
    }
}

/// Simulator source whose shots for input `i` depend only on `(seed, i)`,
/// so cells that share a seed see identical shots in any order.
pub struct SlotSource<'a> {
    pub model: &'a PqcModel,
    pub schedule: &'a NoiseSchedule,
    pub shots: usize,
    pub timing: Timing,
    pub seed: u64,
    pub cache: Option<&'a DistributionCache>,
}

impl ShotSource for SlotSource<'_> {
    fn shots(&mut self, index: usize, x: f64) -> Result<ShotMultiset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let t0 = self.timing.slot_start(index);
        if let Some(probs) = self.cache.filter(|_| self.schedule.is_stationary()).and_then(|c| c.get(index, x)) {
            let mut out = sample_from_distribution(probs, x, self.shots, &self.model.grid, &mut rng)?;
            for (m, r) in out.records.iter_mut().enumerate() {
                r.t = t0 + m as f64 * self.timing.shot_interval;
            }
            return Ok(out);
        }
        let mut clock = ShotClock::new(t0, self.timing.shot_interval, 0.0);
        sample_shots(self.model, x, self.shots, self.schedule, &mut clock, &mut rng)
    }
}
