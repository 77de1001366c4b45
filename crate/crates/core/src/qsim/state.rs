use num_complex::Complex64;

use super::gate::{qubit_mask, Gate, Mat2};
use crate::error::{invalid, Result};

/// Pure state of `num_qubits` qubits as a dense amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    num_qubits: usize,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > super::MAX_QUBITS {
            return Err(invalid(format!("unsupported qubit count {num_qubits}")));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(invalid(format!("basis index {index} out of range for {num_qubits} qubits")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes, num_qubits })
    }

    /// Wraps amplitudes, normalising them. Length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(invalid(format!("amplitude length {dim} is not a power of two ≥ 2")));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("amplitudes have zero or non-finite norm"));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        Ok(Self { amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(), num_qubits })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Computational-basis outcome probabilities `|ψ_j|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Returns `U·ψ` for `gate`, leaving `self` untouched.
    pub fn apply_gate(&self, gate: &Gate) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_gate_in_place(gate)?;
        Ok(out)
    }

    pub fn apply_gate_in_place(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    /// Runs a gate sequence from this state.
    pub fn run(&self, circuit: &[Gate]) -> Result<StateVector> {
        let mut out = self.clone();
        for gate in circuit {
            out.apply_gate_in_place(gate)?;
        }
        Ok(out)
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        let n = self.num_qubits;
        match *gate {
            Gate::Cz { a, b } => {
                let mask = qubit_mask(n, a) | qubit_mask(n, b);
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
            Gate::Cx { control, target } => {
                let c = qubit_mask(n, control);
                let t = qubit_mask(n, target);
                for i in 0..self.amplitudes.len() {
                    if i & c != 0 && i & t == 0 {
                        self.amplitudes.swap(i, i | t);
                    }
                }
            }
            _ => {
                let m = gate.single_qubit_matrix().expect("rotation");
                let q = gate.targets()[0];
                apply_mat2(&mut self.amplitudes, qubit_mask(n, q), &m);
            }
        }
    }
}

fn apply_mat2(amps: &mut [Complex64], mask: usize, m: &Mat2) {
    for i in 0..amps.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a0, a1) = (amps[i], amps[j]);
            amps[i] = m[0] * a0 + m[1] * a1;
            amps[j] = m[2] * a0 + m[3] * a1;
        }
    }
}
