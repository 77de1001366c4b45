//! Dense few-qubit simulation: pure states, density matrices, single-qubit
//! Kraus channels and computational-basis measurement.
//!
//! Basis indices are MSB-first: qubit 0 is the most significant bit.

mod channel;
mod density;
mod gate;
mod measure;
mod schedule;
mod state;

pub use channel::{make_channel, ChannelFamily, KrausChannel, Superop, COMPLETENESS_TOL};
pub use density::{format_complex, DensityMatrix, HERMITIAN_TOL, PSD_TOL, TRACE_TOL};
pub use gate::{qubit_mask, unitarity_defect, Gate, GateKind, Mat2};
pub use measure::{apply_readout_flips, measure_probabilities, Povm};
pub use schedule::{NoiseParams, NoiseSchedule, ParamFn};
pub use state::StateVector;

use crate::error::{invalid, Result};

pub const MAX_QUBITS: usize = 10;

/// Evolves `|0…0⟩⟨0…0|` through `circuit`, following each gate with the
/// schedule's channel (evaluated once at `t`) on every qubit the gate touches.
pub fn run_noisy_circuit(num_qubits: usize, circuit: &[Gate], schedule: &NoiseSchedule, t: f64) -> Result<DensityMatrix> {
    schedule.validate()?;
    let params = schedule.params_at(t);
    evolve_density(num_qubits, circuit, schedule.family, params.gate)
}

/// Same as [`run_noisy_circuit`] with a fixed channel strength.
pub fn evolve_density(num_qubits: usize, circuit: &[Gate], family: ChannelFamily, strength: f64) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::zero(num_qubits)?;
    for gate in circuit {
        gate.validate(num_qubits)?;
    }
    if strength == 0.0 {
        for gate in circuit {
            rho.apply_gate_unchecked(gate);
        }
        return Ok(rho);
    }
    let noise = make_channel(family, strength)?.superoperator();
    for gate in circuit {
        match gate.single_qubit_matrix() {
            Some(u) => {
                let fused = noise.after(&Superop::from_unitary(&u));
                rho.apply_superop(gate.targets()[0], &fused);
            }
            None => {
                rho.apply_gate_unchecked(gate);
                for q in gate.targets() {
                    rho.apply_superop(q, &noise);
                }
            }
        }
    }
    Ok(rho)
}

/// Outcome distribution of a shot at time `t`: noisy evolution followed by
/// readout flips.
pub fn shot_distribution(num_qubits: usize, circuit: &[Gate], schedule: &NoiseSchedule, t: f64) -> Result<Vec<f64>> {
    let params = schedule.params_at(t);
    let rho = evolve_density(num_qubits, circuit, schedule.family, params.gate)?;
    let probs = measure_probabilities(&rho, None)?;
    if !(0.0..=1.0).contains(&params.readout_flip) {
        return Err(invalid("readout flip probability outside [0, 1]"));
    }
    Ok(apply_readout_flips(&probs, num_qubits, params.readout_flip))
}
