//! Cross-entropy training of the angle encoder. Circuit derivatives come from
//! the parameter-shift rule; the encoder is differentiated by hand.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ansatz::ParamCircuit;
use super::encoder::AngleEncoder;
use super::model::PqcModel;
use crate::error::{invalid, Error, Result};
use crate::qsim::StateVector;

/// Floor applied to the target-cell probability before taking the log.
pub const PROB_CLAMP: f64 = 1e-12;

const SHIFT: f64 = std::f64::consts::FRAC_PI_2;

fn prefix_states(num_qubits: usize, circuit: &ParamCircuit) -> Result<Vec<StateVector>> {
    let mut states = Vec::with_capacity(circuit.gates.len() + 1);
    let mut psi = StateVector::zero(num_qubits)?;
    states.push(psi.clone());
    for gate in &circuit.gates {
        psi.apply_gate_in_place(gate)?;
        states.push(psi.clone());
    }
    Ok(states)
}

/// Outcome distribution with angle `param` shifted by `delta`, reusing the
/// state just before the affected gate.
fn shifted_distribution(prefix: &[StateVector], circuit: &ParamCircuit, param: usize, delta: f64) -> Vec<f64> {
    let g = circuit.param_gate[param];
    let mut psi = prefix[g].clone();
    let gate = &circuit.gates[g];
    psi.apply_unchecked(&gate.with_angle(gate.angle().expect("rotation") + delta));
    for gate in &circuit.gates[g + 1..] {
        psi.apply_unchecked(gate);
    }
    psi.probabilities()
}

/// `∂p_b/∂θ_j` for every parameter `j` (outer) and outcome `b` (inner) via
/// `(p(θ_j + π/2) − p(θ_j − π/2)) / 2`.
pub fn parameter_shift_jacobian(num_qubits: usize, circuit: &ParamCircuit) -> Result<Vec<Vec<f64>>> {
    let prefix = prefix_states(num_qubits, circuit)?;
    Ok((0..circuit.param_gate.len())
        .map(|j| {
            let plus = shifted_distribution(&prefix, circuit, j, SHIFT);
            let minus = shifted_distribution(&prefix, circuit, j, -SHIFT);
            plus.iter().zip(&minus).map(|(a, b)| 0.5 * (a - b)).collect()
        })
        .collect())
}

/// Parameter-shift gradient of one outcome probability.
pub fn parameter_shift_gradient(num_qubits: usize, circuit: &ParamCircuit, outcome: usize) -> Result<Vec<f64>> {
    let prefix = prefix_states(num_qubits, circuit)?;
    if outcome >= prefix[0].dim() {
        return Err(invalid(format!("outcome {outcome} out of range")));
    }
    Ok((0..circuit.param_gate.len())
        .map(|j| {
            let plus = shifted_distribution(&prefix, circuit, j, SHIFT)[outcome];
            let minus = shifted_distribution(&prefix, circuit, j, -SHIFT)[outcome];
            0.5 * (plus - minus)
        })
        .collect())
}

/// `−log P(Ŷ = cell(y) | x)` on the noiseless model, with `y` snapped to the
/// nearest grid cell and the probability floored at [`PROB_CLAMP`].
pub fn model_loss(x: f64, y: f64, model: &PqcModel) -> Result<f64> {
    let probs = model.noiseless_distribution(x)?;
    Ok(-probs[model.grid.nearest_index(y)].max(PROB_CLAMP).ln())
}

/// Loss and encoder gradient for one example.
pub fn example_gradient(x: f64, y: f64, model: &PqcModel) -> Result<(f64, AngleEncoder)> {
    let cache = model.encoder.forward_cached(x);
    let circuit = model.config.circuit_from_angles(cache.output())?;
    let q = model.num_qubits();
    let mut psi = StateVector::zero(q)?;
    for gate in &circuit.gates {
        psi.apply_unchecked(gate);
    }
    let cell = model.grid.nearest_index(y);
    let p = psi.probabilities()[cell];
    let loss = -p.max(PROB_CLAMP).ln();
    if p <= PROB_CLAMP {
        return Ok((loss, model.encoder.zeros_like()));
    }
    let dp = parameter_shift_gradient(q, &circuit, cell)?;
    let dloss: Vec<f64> = dp.iter().map(|d| -d / p).collect();
    Ok((loss, model.encoder.backward(&cache, &dloss)))
}

/// Mean loss over `dataset`.
pub fn empirical_risk(model: &PqcModel, dataset: &[(f64, f64)]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let losses: Vec<f64> = dataset.par_iter().map(|&(x, y)| model_loss(x, y, model)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` means full-batch gradient descent.
    pub batch_size: Option<usize>,
    /// Seeds the per-epoch shuffle when mini-batching.
    pub shuffle_seed: u64,
    pub optimizer: Optimizer,
}

/// Update rule applied to the averaged batch gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// `w ← w − η·g`.
    GradientDescent,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e−8.
    Adam,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
                self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)
            })
            .collect()
    }
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 0.01, batch_size: None, shuffle_seed: 0, optimizer: Optimizer::GradientDescent }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Empirical risk before the first update.
    pub initial_risk: f64,
    /// Empirical risk after each epoch.
    pub loss_history: Vec<f64>,
}

/// Plain gradient descent on the encoder weights.
pub fn train(dataset: &[(f64, f64)], model: &PqcModel, options: &TrainOptions) -> Result<(PqcModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if !(options.learning_rate >= 0.0) || !options.learning_rate.is_finite() {
        return Err(invalid("learning rate must be finite and non-negative"));
    }
    let mut model = model.clone();
    let batch = options.batch_size.unwrap_or(dataset.len()).clamp(1, dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.shuffle_seed);
    let initial_risk = checked(empirical_risk(&model, dataset)?, 0)?;
    let mut adam = AdamState::new(model.encoder.num_params());
    let mut loss_history = Vec::with_capacity(options.epochs);
    for epoch in 1..=options.epochs {
        if batch < dataset.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let grads: Vec<(f64, AngleEncoder)> = chunk
                .par_iter()
                .map(|&i| example_gradient(dataset[i].0, dataset[i].1, &model))
                .collect::<Result<_>>()?;
            let mut total = model.encoder.zeros_like();
            for (loss, g) in &grads {
                checked(*loss, epoch)?;
                total.add_scaled(g, 1.0);
            }
            let mean: Vec<f64> = total.params().iter().map(|g| g / chunk.len() as f64).collect();
            let step = match options.optimizer {
                Optimizer::GradientDescent => mean,
                Optimizer::Adam => adam.direction(&mean),
            };
            let mut direction = model.encoder.zeros_like();
            direction.set_params(&step);
            model.encoder.add_scaled(&direction, -options.learning_rate);
        }
        loss_history.push(checked(empirical_risk(&model, dataset)?, epoch)?);
    }
    Ok((model, TrainReport { initial_risk, loss_history }))
}

fn checked(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged(format!("non-finite loss {loss} at epoch {epoch}")))
    }
}
