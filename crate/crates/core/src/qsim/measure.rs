use num_complex::Complex64;

use super::density::{DensityMatrix, TRACE_TOL};
use crate::error::{invalid, Error, Result};

/// A set of PSD effects summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    effects: Vec<Vec<Complex64>>,
}

impl Povm {
    /// Validates normalisation (`Σ Π_j = I` within 1e−10) and positivity of each effect.
    pub fn new(effects: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(invalid("POVM needs at least one effect"));
        };
        let dim = (first.len() as f64).sqrt().round() as usize;
        if dim * dim != first.len() || effects.iter().any(|e| e.len() != first.len()) {
            return Err(invalid("POVM effects must be square matrices of equal size"));
        }
        let mut sum = vec![Complex64::new(0.0, 0.0); dim * dim];
        for e in &effects {
            for (s, v) in sum.iter_mut().zip(e) {
                *s += v;
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                let target = if r == c { 1.0 } else { 0.0 };
                let d = (sum[r * dim + c] - target).norm();
                if d > TRACE_TOL {
                    return Err(Error::Validation(format!(
                        "POVM effects do not sum to identity (entry ({r},{c}) off by {d:e})"
                    )));
                }
            }
        }
        for (j, e) in effects.iter().enumerate() {
            let m = nalgebra::DMatrix::from_fn(dim, dim, |r, c| 0.5 * (e[r * dim + c] + e[c * dim + r].conj()));
            let min = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -TRACE_TOL {
                return Err(Error::Validation(format!("POVM effect {j} is not PSD (min eigenvalue {min:e})")));
            }
        }
        Ok(Self { dim, effects })
    }

    /// Projectors `|b⟩⟨b|` onto each computational basis state.
    pub fn computational(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        let effects = (0..dim)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); dim * dim];
                e[j * dim + j] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        Self { dim, effects }
    }

    /// Diagonal effects of independent per-qubit readout flips with probability `flip`.
    pub fn readout_flip(num_qubits: usize, flip: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip) {
            return Err(invalid(format!("readout flip probability {flip} outside [0, 1]")));
        }
        let dim = 1usize << num_qubits;
        let effects = (0..dim)
            .map(|outcome| {
                let mut e = vec![Complex64::new(0.0, 0.0); dim * dim];
                for prepared in 0..dim {
                    let flips = (outcome ^ prepared).count_ones() as i32;
                    let w = flip.powi(flips) * (1.0 - flip).powi(num_qubits as i32 - flips);
                    e[prepared * dim + prepared] = Complex64::new(w, 0.0);
                }
                e
            })
            .collect();
        Ok(Self { dim, effects })
    }

    pub fn effects(&self) -> &[Vec<Complex64>] {
        &self.effects
    }
}

/// Outcome probabilities `Tr(ρ Π_j)`; the computational basis when `povm` is `None`.
pub fn measure_probabilities(rho: &DensityMatrix, povm: Option<&Povm>) -> Result<Vec<f64>> {
    let dim = rho.dim();
    let raw: Vec<f64> = match povm {
        None => rho.diagonal(),
        Some(p) => {
            if p.dim != dim {
                return Err(invalid(format!("POVM dimension {} does not match state dimension {dim}", p.dim)));
            }
            let entries = rho.entries();
            p.effects
                .iter()
                .map(|e| {
                    let mut acc = 0.0;
                    for r in 0..dim {
                        for c in 0..dim {
                            acc += (entries[r * dim + c] * e[c * dim + r]).re;
                        }
                    }
                    acc
                })
                .collect()
        }
    };
    Ok(clip_distribution(raw))
}

/// Pushes a computational-basis distribution through independent per-qubit
/// readout flips. Equivalent to measuring with [`Povm::readout_flip`].
pub fn apply_readout_flips(probs: &[f64], num_qubits: usize, flip: f64) -> Vec<f64> {
    let mut out = probs.to_vec();
    if flip == 0.0 {
        return out;
    }
    for q in 0..num_qubits {
        let mask = 1usize << q;
        for i in 0..out.len() {
            if i & mask == 0 {
                let (a, b) = (out[i], out[i | mask]);
                out[i] = (1.0 - flip) * a + flip * b;
                out[i | mask] = flip * a + (1.0 - flip) * b;
            }
        }
    }
    out
}

/// Clips rounding-level negatives to zero and renormalises.
pub(crate) fn clip_distribution(mut p: Vec<f64>) -> Vec<f64> {
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        for v in p.iter_mut() {
            *v /= total;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::StateVector;

    #[test]
    fn plus_state_is_fair_coin() {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = DensityMatrix::from_state(&StateVector::from_amplitudes(vec![h, h]).unwrap());
        let p = measure_probabilities(&rho, None).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn readout_flip_povm_on_ground_state() {
        let rho = DensityMatrix::zero(1).unwrap();
        let povm = Povm::readout_flip(1, 0.1).unwrap();
        let p = measure_probabilities(&rho, Some(&povm)).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_two_qubits_uniform() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let p = measure_probabilities(&rho, Some(&Povm::computational(2))).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn unnormalised_povm_rejected() {
        let c = |v: f64| Complex64::new(v, 0.0);
        let effects = vec![vec![c(0.9), c(0.0), c(0.0), c(0.1)], vec![c(0.2), c(0.0), c(0.0), c(0.9)]];
        assert!(matches!(Povm::new(effects), Err(Error::Validation(_))));
        let non_psd = vec![vec![c(1.2), c(0.0), c(0.0), c(0.0)], vec![c(-0.2), c(0.0), c(0.0), c(1.0)]];
        assert!(Povm::new(non_psd).is_err());
    }

    #[test]
    fn fast_readout_matches_povm() {
        let amps: Vec<Complex64> = (0..8).map(|k| Complex64::new(0.1 * k as f64 + 0.05, 0.02 * k as f64)).collect();
        let rho = DensityMatrix::from_state(&StateVector::from_amplitudes(amps).unwrap());
        let via_povm = measure_probabilities(&rho, Some(&Povm::readout_flip(3, 0.07).unwrap())).unwrap();
        let fast = apply_readout_flips(&rho.diagonal(), 3, 0.07);
        for (a, b) in via_povm.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
