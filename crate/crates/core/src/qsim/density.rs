use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::channel::{KrausChannel, Superop, COMPLETENESS_TOL};
use super::gate::{qubit_mask, Gate};
use super::state::StateVector;
use crate::error::{invalid, Error, Result};

pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

/// Mixed state of `num_qubits` qubits, stored dense and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Vec<Complex64>,
    num_qubits: usize,
}

impl DensityMatrix {
    pub fn from_state(psi: &StateVector) -> Self {
        let amps = psi.amplitudes();
        let dim = amps.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                entries.push(amps[r] * amps[c].conj());
            }
        }
        Self { entries, num_qubits: psi.num_qubits() }
    }

    /// `|0…0⟩⟨0…0|`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Ok(Self::from_state(&StateVector::zero(num_qubits)?))
    }

    /// `I / 2^Q`.
    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > super::MAX_QUBITS {
            return Err(invalid(format!("unsupported qubit count {num_qubits}")));
        }
        let dim = 1usize << num_qubits;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        Ok(Self { entries, num_qubits })
    }

    /// Wraps row-major entries and checks every density-matrix invariant.
    pub fn from_entries(entries: Vec<Complex64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim < 2 || !dim.is_power_of_two() {
            return Err(invalid(format!("{} entries do not form a 2^Q square", entries.len())));
        }
        let rho = Self { entries, num_qubits: dim.trailing_zeros() as usize };
        rho.validate()?;
        Ok(rho)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> Complex64 {
        let dim = self.dim();
        (0..dim).map(|i| self.entries[i * dim + i]).sum()
    }

    /// Real diagonal, i.e. default computational-basis probabilities before clipping.
    pub fn diagonal(&self) -> Vec<f64> {
        let dim = self.dim();
        (0..dim).map(|i| self.entries[i * dim + i].re).collect()
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        let dim = self.dim();
        let mut acc = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                // Tr(ρρ) = Σ ρ_rc ρ_cr = Σ |ρ_rc|² for Hermitian ρ
                acc += (self.entries[r * dim + c] * self.entries[c * dim + r]).re;
            }
        }
        acc
    }

    /// `‖ρ − ρ†‖_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                let d = self.entries[r * dim + c] - self.entries[c * dim + r].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let dim = self.dim();
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            0.5 * (self.entries[r * dim + c] + self.entries[c * dim + r].conj())
        });
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace, and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::Validation(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Validation(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::Validation(format!("not PSD (min eigenvalue {min_eig:e})")));
        }
        Ok(())
    }

    /// Returns `UρU†`.
    pub fn apply_unitary(&self, gate: &Gate) -> Result<DensityMatrix> {
        gate.validate(self.num_qubits)?;
        let mut out = self.clone();
        out.apply_gate_unchecked(gate);
        Ok(out)
    }

    /// Returns `Σ_k E_k ρ E_k†` with the channel acting on `target_qubit`.
    pub fn apply_channel(&self, channel: &KrausChannel, target_qubit: usize) -> Result<DensityMatrix> {
        let defect = channel.completeness_defect();
        if defect > COMPLETENESS_TOL {
            return Err(Error::Validation(format!(
                "channel '{}' is not trace preserving (defect {defect:e})",
                channel.label()
            )));
        }
        if target_qubit >= self.num_qubits {
            return Err(invalid(format!(
                "target qubit {target_qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        let mut out = self.clone();
        out.apply_superop(target_qubit, &channel.superoperator());
        Ok(out)
    }

    pub(crate) fn apply_gate_unchecked(&mut self, gate: &Gate) {
        let n = self.num_qubits;
        let dim = self.dim();
        match *gate {
            Gate::Cz { a, b } => {
                let mask = qubit_mask(n, a) | qubit_mask(n, b);
                for r in 0..dim {
                    let sr = r & mask == mask;
                    for c in 0..dim {
                        if sr != (c & mask == mask) {
                            let e = &mut self.entries[r * dim + c];
                            *e = -*e;
                        }
                    }
                }
            }
            Gate::Cx { control, target } => {
                let cm = qubit_mask(n, control);
                let tm = qubit_mask(n, target);
                let perm = |i: usize| if i & cm != 0 { i ^ tm } else { i };
                let old = self.entries.clone();
                for r in 0..dim {
                    let pr = perm(r);
                    for c in 0..dim {
                        self.entries[r * dim + c] = old[pr * dim + perm(c)];
                    }
                }
            }
            _ => {
                let u = gate.single_qubit_matrix().expect("rotation");
                self.apply_superop(gate.targets()[0], &Superop::from_unitary(&u));
            }
        }
    }

    /// Applies a single-qubit superoperator to every 2×2 block of `qubit`.
    pub(crate) fn apply_superop(&mut self, qubit: usize, s: &Superop) {
        let dim = self.dim();
        let mask = qubit_mask(self.num_qubits, qubit);
        let s = &s.0;
        for r0 in (0..dim).filter(|r| r & mask == 0) {
            let r1 = r0 | mask;
            for c0 in (0..dim).filter(|c| c & mask == 0) {
                let c1 = c0 | mask;
                let idx = [r0 * dim + c0, r0 * dim + c1, r1 * dim + c0, r1 * dim + c1];
                let b = [self.entries[idx[0]], self.entries[idx[1]], self.entries[idx[2]], self.entries[idx[3]]];
                for (row, &slot) in idx.iter().enumerate() {
                    let k = row * 4;
                    self.entries[slot] = s[k] * b[0] + s[k + 1] * b[1] + s[k + 2] * b[2] + s[k + 3] * b[3];
                }
            }
        }
    }
}

impl fmt::Display for DensityMatrix {
    /// Row-major plain text: one row per line, entries as `re+imi` separated
    /// by single spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dim = self.dim();
        for r in 0..dim {
            let row: Vec<String> = (0..dim).map(|c| format_complex(self.entries[r * dim + c])).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::channel::{make_channel, ChannelFamily};
    use std::f64::consts::PI;

    fn assert_close(rho: &DensityMatrix, expected: &[f64], tol: f64) {
        for (i, (a, &b)) in rho.entries().iter().zip(expected).enumerate() {
            assert!((a.re - b).abs() <= tol && a.im.abs() <= tol, "entry {i}: {a} vs {b}");
        }
    }

    #[test]
    fn identity_rotation_leaves_rho() {
        let rho = DensityMatrix::from_state(
            &StateVector::from_amplitudes(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap(),
        );
        let out = rho.apply_unitary(&Gate::Rx { qubit: 0, angle: 0.0 }).unwrap();
        for (a, b) in out.entries().iter().zip(rho.entries()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn ry_pi_maps_zero_projector_to_one_projector() {
        let out = DensityMatrix::zero(1).unwrap().apply_unitary(&Gate::Ry { qubit: 0, angle: PI }).unwrap();
        assert_close(&out, &[0.0, 0.0, 0.0, 1.0], 1e-15);
    }

    #[test]
    fn cz_on_plus_plus_entangles_but_stays_pure() {
        let plus = Complex64::new(0.5, 0.0);
        let psi = StateVector::from_amplitudes(vec![plus; 4]).unwrap();
        let out = DensityMatrix::from_state(&psi).apply_unitary(&Gate::Cz { a: 0, b: 1 }).unwrap();
        // brute force: (CZ|++⟩)(CZ|++⟩)† with CZ|++⟩ = ½(1,1,1,−1)
        let v = [0.5, 0.5, 0.5, -0.5];
        let expected: Vec<f64> = (0..16).map(|k| v[k / 4] * v[k % 4]).collect();
        assert_close(&out, &expected, 1e-15);
        assert!((out.trace().re - 1.0).abs() < 1e-12);
        assert!((out.purity() - 1.0).abs() < 1e-12);
        // not a product state: reduced purity of qubit 0 is ½
        let reduced = [
            out.get(0, 0) + out.get(1, 1),
            out.get(0, 2) + out.get(1, 3),
            out.get(2, 0) + out.get(3, 1),
            out.get(2, 2) + out.get(3, 3),
        ];
        let reduced_purity: f64 = reduced.iter().map(|z| z.norm_sqr()).sum();
        assert!((reduced_purity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn depolarising_fixes_maximally_mixed() {
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        let ch = make_channel(ChannelFamily::Depolarising, 0.42).unwrap();
        let out = mixed.apply_channel(&ch, 0).unwrap();
        assert_close(&out, &[0.5, 0.0, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn full_depolarising_gives_maximally_mixed() {
        let ch = make_channel(ChannelFamily::Depolarising, 1.0).unwrap();
        let out = DensityMatrix::zero(1).unwrap().apply_channel(&ch, 0).unwrap();
        assert_close(&out, &[0.5, 0.0, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn amplitude_damping_on_excited_state() {
        let one = DensityMatrix::from_state(&StateVector::basis(1, 1).unwrap());
        let ch = make_channel(ChannelFamily::AmplitudeDamping, 0.3).unwrap();
        let out = one.apply_channel(&ch, 0).unwrap();
        assert_close(&out, &[0.3, 0.0, 0.0, 0.7], 1e-15);
    }

    #[test]
    fn full_amplitude_damping_resets_to_ground() {
        let psi = StateVector::from_amplitudes(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let ch = make_channel(ChannelFamily::AmplitudeDamping, 1.0).unwrap();
        let out = DensityMatrix::from_state(&psi).apply_channel(&ch, 0).unwrap();
        assert_close(&out, &[1.0, 0.0, 0.0, 0.0], 1e-15);
    }

    #[test]
    fn channel_on_second_qubit_matches_kraus_sum() {
        // brute-force Σ (I⊗E) ρ (I⊗E)† on a random-ish 2-qubit pure state
        let amps: Vec<Complex64> = [(0.1, 0.3), (-0.4, 0.2), (0.5, -0.1), (0.2, 0.6)]
            .iter()
            .map(|&(a, b)| Complex64::new(a, b))
            .collect();
        let rho = DensityMatrix::from_state(&StateVector::from_amplitudes(amps).unwrap());
        let ch = make_channel(ChannelFamily::Depolarising, 0.35).unwrap();
        let fast = rho.apply_channel(&ch, 1).unwrap();
        let mut brute = vec![Complex64::new(0.0, 0.0); 16];
        for e in ch.operators() {
            // full = I ⊗ E
            let mut full = vec![Complex64::new(0.0, 0.0); 16];
            for a in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        full[(a * 2 + i) * 4 + (a * 2 + j)] = e[i * 2 + j];
                    }
                }
            }
            for r in 0..4 {
                for c in 0..4 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..4 {
                        for l in 0..4 {
                            acc += full[r * 4 + k] * rho.get(k, l) * full[c * 4 + l].conj();
                        }
                    }
                    brute[r * 4 + c] += acc;
                }
            }
        }
        for (a, b) in fast.entries().iter().zip(&brute) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn from_entries_rejects_bad_trace_and_non_psd() {
        let c = |v: f64| Complex64::new(v, 0.0);
        assert!(DensityMatrix::from_entries(vec![c(0.7), c(0.0), c(0.0), c(0.7)]).is_err());
        assert!(DensityMatrix::from_entries(vec![c(1.2), c(0.0), c(0.0), c(-0.2)]).is_err());
        assert!(DensityMatrix::from_entries(vec![c(0.5), c(0.5), c(0.5), c(0.5)]).is_ok());
    }

    #[test]
    fn display_format() {
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        assert_eq!(rho.to_string(), "0.5+0i 0+0i\n0+0i 0.5+0i\n");
        assert_eq!(format_complex(Complex64::new(0.25, -1.5)), "0.25-1.5i");
    }
}
