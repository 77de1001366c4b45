use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encoder::AngleEncoder;
use crate::error::{invalid, Error, Result};
use crate::qsim::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// CZ on `(k, k+1)` for `k = 0..Q−1`.
    Linear,
    /// Linear chain closed by `(Q−1, 0)` when `Q > 2`.
    Circular,
    /// CZ on every pair `i < j`.
    Full,
}

impl Entangler {
    pub fn pairs(self, num_qubits: usize) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = match self {
            Entangler::Linear | Entangler::Circular => (0..num_qubits.saturating_sub(1)).map(|k| (k, k + 1)).collect(),
            Entangler::Full => (0..num_qubits).flat_map(|i| (i + 1..num_qubits).map(move |j| (i, j))).collect(),
        };
        if self == Entangler::Circular && num_qubits > 2 {
            pairs.push((num_qubits - 1, 0));
        }
        pairs
    }
}

impl fmt::Display for Entangler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entangler::Linear => "linear",
            Entangler::Circular => "circular",
            Entangler::Full => "full",
        })
    }
}

impl FromStr for Entangler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Entangler::Linear),
            "circular" => Ok(Entangler::Circular),
            "full" => Ok(Entangler::Full),
            other => Err(invalid(format!("unknown entangler '{other}'"))),
        }
    }
}

/// Hardware-efficient ansatz: `L` layers of per-qubit RZ·RY·RZ rotations
/// followed by a CZ entangling pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub entangler: Entangler,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self { num_qubits: 5, num_layers: 5, entangler: Entangler::Linear }
    }
}

impl AnsatzConfig {
    pub fn num_params(&self) -> usize {
        3 * self.num_layers * self.num_qubits
    }

    /// Encoder shape `(1, 10, 10, 3LQ)`.
    pub fn encoder_sizes(&self) -> Vec<usize> {
        vec![1, 10, 10, self.num_params()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > crate::qsim::MAX_QUBITS || self.num_layers == 0 {
            return Err(Error::Config(format!(
                "ansatz needs 1..={} qubits and at least one layer, got Q={} L={}",
                crate::qsim::MAX_QUBITS,
                self.num_qubits,
                self.num_layers
            )));
        }
        Ok(())
    }

    /// Gates for a given angle vector, plus the gate index holding each angle.
    pub fn circuit_from_angles(&self, angles: &[f64]) -> Result<ParamCircuit> {
        self.validate()?;
        if angles.len() != self.num_params() {
            return Err(Error::Config(format!(
                "ansatz with Q={} L={} takes {} angles, got {}",
                self.num_qubits,
                self.num_layers,
                self.num_params(),
                angles.len()
            )));
        }
        let pairs = self.entangler.pairs(self.num_qubits);
        let mut gates = Vec::with_capacity(self.num_params() + self.num_layers * pairs.len());
        let mut param_gate = Vec::with_capacity(self.num_params());
        for layer in 0..self.num_layers {
            for q in 0..self.num_qubits {
                let base = 3 * (layer * self.num_qubits + q);
                for (r, angle) in angles[base..base + 3].iter().enumerate() {
                    param_gate.push(gates.len());
                    gates.push(if r == 1 { Gate::Ry { qubit: q, angle: *angle } } else { Gate::Rz { qubit: q, angle: *angle } });
                }
            }
            gates.extend(pairs.iter().map(|&(a, b)| Gate::Cz { a, b }));
        }
        Ok(ParamCircuit { gates, param_gate })
    }
}

/// A gate list whose rotation angles are addressable by parameter index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    pub gates: Vec<Gate>,
    /// `param_gate[j]` is the index in `gates` of the rotation carrying angle `j`.
    pub param_gate: Vec<usize>,
}

/// Encodes `x` and lays the resulting angles onto the ansatz.
pub fn build_circuit(x: f64, encoder: &AngleEncoder, config: &AnsatzConfig) -> Result<Vec<Gate>> {
    if encoder.output_dim() != config.num_params() {
        return Err(Error::Config(format!(
            "encoder emits {} angles but the ansatz needs {}",
            encoder.output_dim(),
            config.num_params()
        )));
    }
    Ok(config.circuit_from_angles(&encoder.forward(x))?.gates)
}
