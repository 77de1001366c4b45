use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ansatz::{AnsatzConfig, Entangler};
use super::encoder::{AngleEncoder, DenseLayer};
use super::grid::GridMap;
use crate::error::{Error, Result};
use crate::qsim::{Gate, StateVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Angle-encoded hardware-efficient PQC with a bitstring-to-grid readout.
#[derive(Debug, Clone, PartialEq)]
pub struct PqcModel {
    pub config: AnsatzConfig,
    pub encoder: AngleEncoder,
    pub grid: GridMap,
}

impl PqcModel {
    pub fn new(config: AnsatzConfig, encoder: AngleEncoder, grid: GridMap) -> Result<Self> {
        config.validate()?;
        encoder.validate()?;
        if encoder.output_dim() != config.num_params() || encoder.layer_sizes()[0] != 1 {
            return Err(Error::Config(format!(
                "encoder shape {:?} does not fit an ansatz with {} parameters",
                encoder.layer_sizes(),
                config.num_params()
            )));
        }
        if grid.num_qubits != config.num_qubits {
            return Err(Error::Config("grid and ansatz disagree on qubit count".into()));
        }
        Ok(Self { config, encoder, grid })
    }

    /// Freshly initialised encoder on the standard `[−1.5, 1.5]` grid.
    pub fn init<R: Rng + ?Sized>(config: AnsatzConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = AngleEncoder::init(&config.encoder_sizes(), rng)?;
        Self::new(config, encoder, GridMap::standard(config.num_qubits))
    }

    pub fn num_qubits(&self) -> usize {
        self.config.num_qubits
    }

    pub fn circuit(&self, x: f64) -> Result<Vec<Gate>> {
        super::ansatz::build_circuit(x, &self.encoder, &self.config)
    }

    /// Exact noiseless bitstring distribution for input `x`.
    pub fn noiseless_distribution(&self, x: f64) -> Result<Vec<f64>> {
        let circuit = self.circuit(x)?;
        Ok(StateVector::zero(self.num_qubits())?.run(&circuit)?.probabilities())
    }

    pub fn to_file_format(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            ansatz: AnsatzSection {
                num_qubits: self.config.num_qubits,
                num_layers: self.config.num_layers,
                entangler: self.config.entangler,
            },
            grid: GridSection { y_min: self.grid.y_min, y_max: self.grid.y_max },
            encoder: EncoderSection {
                layer_sizes: self.encoder.layer_sizes(),
                hidden_activation: "elu".into(),
                output_activation: "linear".into(),
                layers: self.encoder.layers.clone(),
            },
        }
    }

    pub fn from_file_format(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        if file.encoder.hidden_activation != "elu" || file.encoder.output_activation != "linear" {
            return Err(Error::Config("only elu hidden / linear output encoders are supported".into()));
        }
        let config = AnsatzConfig {
            num_qubits: file.ansatz.num_qubits,
            num_layers: file.ansatz.num_layers,
            entangler: file.ansatz.entangler,
        };
        let encoder = AngleEncoder { layers: file.encoder.layers };
        if encoder.layer_sizes() != file.encoder.layer_sizes {
            return Err(Error::Config("layer_sizes does not match the stored weight shapes".into()));
        }
        let grid = GridMap::new(file.grid.y_min, file.grid.y_max, config.num_qubits)?;
        Self::new(config, encoder, grid)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&self.to_file_format())?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// On-disk model schema. `format_version` is serialised first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub ansatz: AnsatzSection,
    pub grid: GridSection,
    pub encoder: EncoderSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSection {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub entangler: Entangler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSection {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub layers: Vec<DenseLayer>,
}
