use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A measured bitstring of `len` bits, MSB-first (qubit 0 is the leading character).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring {
    value: u32,
    len: u8,
}

impl Bitstring {
    pub fn new(value: u32, len: usize) -> Result<Self> {
        if len == 0 || len > 31 || (value as u64) >= (1u64 << len) {
            return Err(invalid(format!("value {value} does not fit in {len} bits")));
        }
        Ok(Self { value, len: len as u8 })
    }

    /// `bin(b)`: the bitstring read as a base-2 integer.
    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.len as usize)
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > 31 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(invalid(format!("'{s}' is not a bitstring")));
        }
        let value = u32::from_str_radix(s, 2).map_err(|e| invalid(e.to_string()))?;
        Bitstring::new(value, s.len())
    }
}

/// Uniform lattice `f(b) = y_min + k·bin(b)` with `k = (y_max − y_min)/(2^Q − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub y_min: f64,
    pub y_max: f64,
    pub num_qubits: usize,
}

impl GridMap {
    pub fn new(y_min: f64, y_max: f64, num_qubits: usize) -> Result<Self> {
        if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(invalid(format!("grid bounds [{y_min}, {y_max}] are not an increasing finite pair")));
        }
        if num_qubits == 0 || num_qubits > 31 {
            return Err(invalid(format!("unsupported qubit count {num_qubits}")));
        }
        Ok(Self { y_min, y_max, num_qubits })
    }

    /// `[−1.5, 1.5]` over `num_qubits` bits.
    pub fn standard(num_qubits: usize) -> Self {
        Self { y_min: -1.5, y_max: 1.5, num_qubits }
    }

    pub fn levels(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn spacing(&self) -> f64 {
        (self.y_max - self.y_min) / (self.levels() - 1) as f64
    }

    pub fn value_of_index(&self, index: usize) -> f64 {
        self.y_min + self.spacing() * index as f64
    }

    pub fn map(&self, b: &Bitstring) -> Result<f64> {
        if b.len() != self.num_qubits {
            return Err(invalid(format!("bitstring {b} has {} bits, grid expects {}", b.len(), self.num_qubits)));
        }
        Ok(self.value_of_index(b.value() as usize))
    }

    /// Index of the lattice point closest to `y` (clamped to the ends).
    pub fn nearest_index(&self, y: f64) -> usize {
        let idx = ((y - self.y_min) / self.spacing()).round();
        idx.clamp(0.0, (self.levels() - 1) as f64) as usize
    }

    pub fn is_on_lattice(&self, y: f64, tol: f64) -> bool {
        let idx = (y - self.y_min) / self.spacing();
        idx >= -tol && idx <= (self.levels() - 1) as f64 + tol && (idx - idx.round()).abs() * self.spacing() <= tol
    }
}

/// `f(b)` for an explicit grid.
pub fn map_bitstring(b: &Bitstring, grid: &GridMap) -> Result<f64> {
    grid.map(b)
}
