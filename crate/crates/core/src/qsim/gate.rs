use num_complex::Complex64;

use crate::error::{invalid, Result};

/// 2×2 complex matrix, row-major.
pub type Mat2 = [Complex64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cz,
    Cx,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            GateKind::Cz | GateKind::Cx => 2,
        }
    }

    pub fn is_rotation(self) -> bool {
        self.arity() == 1
    }
}

/// A gate instance. Rotations carry an angle in radians; `Cx` targets are
/// `(control, target)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { qubit: usize, angle: f64 },
    Ry { qubit: usize, angle: f64 },
    Rz { qubit: usize, angle: f64 },
    Cz { a: usize, b: usize },
    Cx { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(kind: GateKind, qubit: usize, angle: f64) -> Result<Gate> {
        match kind {
            GateKind::Rx => Ok(Gate::Rx { qubit, angle }),
            GateKind::Ry => Ok(Gate::Ry { qubit, angle }),
            GateKind::Rz => Ok(Gate::Rz { qubit, angle }),
            other => Err(invalid(format!("{other:?} is not a rotation"))),
        }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rx { .. } => GateKind::Rx,
            Gate::Ry { .. } => GateKind::Ry,
            Gate::Rz { .. } => GateKind::Rz,
            Gate::Cz { .. } => GateKind::Cz,
            Gate::Cx { .. } => GateKind::Cx,
        }
    }

    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::Rx { qubit, .. } | Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } => vec![qubit],
            Gate::Cz { a, b } => vec![a, b],
            Gate::Cx { control, target } => vec![control, target],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => Some(angle),
            _ => None,
        }
    }

    /// Same gate with its angle replaced. Entanglers are returned unchanged.
    pub fn with_angle(&self, new_angle: f64) -> Gate {
        match *self {
            Gate::Rx { qubit, .. } => Gate::Rx { qubit, angle: new_angle },
            Gate::Ry { qubit, .. } => Gate::Ry { qubit, angle: new_angle },
            Gate::Rz { qubit, .. } => Gate::Rz { qubit, angle: new_angle },
            g => g,
        }
    }

    /// Checks the target list against a register of `num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let targets = self.targets();
        if let Some(&bad) = targets.iter().find(|&&q| q >= num_qubits) {
            return Err(invalid(format!(
                "{:?} targets qubit {bad} but the register has {num_qubits} qubits",
                self.kind()
            )));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(invalid(format!(
                "{:?} needs two distinct qubits, got {} twice",
                self.kind(),
                targets[0]
            )));
        }
        Ok(())
    }

    /// The 2×2 matrix of a single-qubit rotation.
    pub fn single_qubit_matrix(&self) -> Option<Mat2> {
        let angle = self.angle()?;
        let (s, c) = (angle / 2.0).sin_cos();
        let zero = Complex64::new(0.0, 0.0);
        Some(match self.kind() {
            GateKind::Rx => [
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ],
            GateKind::Ry => [
                Complex64::new(c, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(c, 0.0),
            ],
            GateKind::Rz => [Complex64::new(c, -s), zero, zero, Complex64::new(c, s)],
            _ => unreachable!(),
        })
    }

    /// Dense unitary on the gate's own qubits (2×2 or 4×4, row-major). For
    /// two-qubit gates the first listed target is the more significant bit.
    pub fn unitary(&self) -> Vec<Complex64> {
        if let Some(m) = self.single_qubit_matrix() {
            return m.to_vec();
        }
        let one = Complex64::new(1.0, 0.0);
        let mut u = vec![Complex64::new(0.0, 0.0); 16];
        match self.kind() {
            GateKind::Cz => {
                for i in 0..4 {
                    u[i * 4 + i] = if i == 3 { -one } else { one };
                }
            }
            GateKind::Cx => {
                u[0] = one;
                u[5] = one;
                u[2 * 4 + 3] = one;
                u[3 * 4 + 2] = one;
            }
            _ => unreachable!(),
        }
        u
    }
}

/// Bit mask of `qubit` inside a basis index; qubit 0 is the most significant bit.
#[inline]
pub fn qubit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

pub(crate) fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub(crate) fn mat2_adjoint(a: &Mat2) -> Mat2 {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

/// Largest entrywise deviation of `U†U` from the identity.
pub fn unitarity_defect(u: &[Complex64]) -> f64 {
    let dim = (u.len() as f64).sqrt() as usize;
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                acc += u[k * dim + i].conj() * u[k * dim + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotations_are_unitary() {
        for &angle in &[0.0, 0.3, PI, -2.1, 7.5] {
            for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
                let g = Gate::rotation(kind, 0, angle).unwrap();
                assert!(unitarity_defect(&g.unitary()) <= 1e-12);
            }
        }
        assert!(unitarity_defect(&Gate::Cz { a: 0, b: 1 }.unitary()) <= 1e-12);
        assert!(unitarity_defect(&Gate::Cx { control: 0, target: 1 }.unitary()) <= 1e-12);
    }

    #[test]
    fn validation_rejects_bad_targets() {
        assert!(Gate::Rx { qubit: 3, angle: 0.1 }.validate(3).is_err());
        assert!(Gate::Cz { a: 1, b: 1 }.validate(3).is_err());
        assert!(Gate::Cx { control: 0, target: 2 }.validate(3).is_ok());
    }

    #[test]
    fn mask_is_msb_first() {
        assert_eq!(qubit_mask(5, 0), 0b10000);
        assert_eq!(qubit_mask(5, 4), 0b00001);
    }
}
