use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gate::{mat2_adjoint, mat2_mul, Mat2};
use crate::error::{invalid, Error, Result};

/// Tolerance on `‖Σ E†E − I‖_max` for a channel to count as CPTP.
pub const COMPLETENESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFamily {
    Depolarising,
    PhaseFlip,
    AmplitudeDamping,
}

impl ChannelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ChannelFamily::Depolarising => "depolarising",
            ChannelFamily::PhaseFlip => "phase_flip",
            ChannelFamily::AmplitudeDamping => "amplitude_damping",
        }
    }
}

impl fmt::Display for ChannelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "depolarising" | "depolarizing" => Ok(ChannelFamily::Depolarising),
            "phase_flip" => Ok(ChannelFamily::PhaseFlip),
            "amplitude_damping" => Ok(ChannelFamily::AmplitudeDamping),
            other => Err(invalid(format!("unknown channel family '{other}'"))),
        }
    }
}

/// Single-qubit channel in operator-sum form.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    label: String,
    operators: Vec<Mat2>,
}

impl KrausChannel {
    /// Builds a channel from explicit Kraus operators, rejecting non-CPTP sets.
    pub fn new(label: impl Into<String>, operators: Vec<Mat2>) -> Result<Self> {
        let channel = Self { label: label.into(), operators };
        let defect = channel.completeness_defect();
        if defect > COMPLETENESS_TOL {
            return Err(Error::Validation(format!(
                "channel '{}' violates completeness by {defect:e}",
                channel.label
            )));
        }
        Ok(channel)
    }

    pub fn identity() -> Self {
        Self { label: "identity".into(), operators: vec![identity2()] }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    /// `‖Σ_k E_k†E_k − I‖_max`.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = [Complex64::new(0.0, 0.0); 4];
        for e in &self.operators {
            let p = mat2_mul(&mat2_adjoint(e), e);
            for (s, v) in sum.iter_mut().zip(p) {
                *s += v;
            }
        }
        let id = identity2();
        sum.iter().zip(id).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Liouville matrix acting on the row-major vectorisation of a 2×2 block:
    /// `S[(i,j),(k,l)] = Σ_E E_ik · conj(E_jl)`.
    pub fn superoperator(&self) -> Superop {
        let mut s = [Complex64::new(0.0, 0.0); 16];
        for e in &self.operators {
            accumulate_superop(&mut s, e);
        }
        Superop(s)
    }
}

/// 4×4 superoperator of a single-qubit map on a 2×2 block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superop(pub [Complex64; 16]);

impl Superop {
    pub fn from_unitary(u: &Mat2) -> Self {
        let mut s = [Complex64::new(0.0, 0.0); 16];
        accumulate_superop(&mut s, u);
        Superop(s)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Superop) -> Superop {
        let mut out = [Complex64::new(0.0, 0.0); 16];
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += self.0[r * 4 + k] * first.0[k * 4 + c];
                }
                out[r * 4 + c] = acc;
            }
        }
        Superop(out)
    }
}

fn accumulate_superop(s: &mut [Complex64; 16], e: &Mat2) {
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    s[(i * 2 + j) * 4 + (k * 2 + l)] += e[i * 2 + k] * e[j * 2 + l].conj();
                }
            }
        }
    }
}

fn identity2() -> Mat2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [one, zero, zero, one]
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Kraus set for `family` at strength `parameter ∈ [0, 1]`.
///
/// * depolarising: `ρ ↦ (1−p)ρ + p·I/2`, Kraus `√(1−3p/4) I, √(p/4) {X, Y, Z}`
/// * phase flip: `√(1−p) I, √p Z`
/// * amplitude damping: `diag(1, √(1−γ))`, `√γ |0⟩⟨1|`
pub fn make_channel(family: ChannelFamily, parameter: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&parameter) || !parameter.is_finite() {
        return Err(invalid(format!("{family} parameter {parameter} outside [0, 1]")));
    }
    let zero = real(0.0);
    let p = parameter;
    let ops: Vec<Mat2> = match family {
        ChannelFamily::Depolarising => {
            if p == 0.0 {
                vec![identity2()]
            } else {
                let a = (1.0 - 0.75 * p).sqrt();
                let b = (p / 4.0).sqrt();
                vec![
                    [real(a), zero, zero, real(a)],
                    [zero, real(b), real(b), zero],
                    [zero, Complex64::new(0.0, -b), Complex64::new(0.0, b), zero],
                    [real(b), zero, zero, real(-b)],
                ]
            }
        }
        ChannelFamily::PhaseFlip => {
            let a = (1.0 - p).sqrt();
            let b = p.sqrt();
            vec![[real(a), zero, zero, real(a)], [real(b), zero, zero, real(-b)]]
        }
        ChannelFamily::AmplitudeDamping => {
            vec![
                [real(1.0), zero, zero, real((1.0 - p).sqrt())],
                [zero, real(p.sqrt()), zero, zero],
            ]
        }
    };
    KrausChannel::new(format!("{family}({p})"), ops)
}
