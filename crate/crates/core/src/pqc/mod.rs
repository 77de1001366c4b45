//! The regression model: a learned angle encoder feeding a hardware-efficient
//! ansatz whose measured bitstrings are mapped onto a uniform target grid.

mod ansatz;
mod encoder;
mod grid;
mod model;
mod shots;
mod train;

pub use ansatz::{build_circuit, AnsatzConfig, Entangler, ParamCircuit};
pub use encoder::{elu, encoder_forward, AngleEncoder, DenseLayer, ForwardCache};
pub use grid::{map_bitstring, Bitstring, GridMap};
pub use model::{ModelFile, PqcModel, MODEL_FORMAT_VERSION};
pub use shots::{
    load_shots_file, read_shots, sample_from_distribution, sample_shots, save_shots_file, write_shots, ShotClock,
    ShotMultiset, ShotRecord, SHOTS_CSV_HEADER,
};
pub use train::{
    empirical_risk, example_gradient, model_loss, parameter_shift_gradient, parameter_shift_jacobian, train,
    Optimizer, TrainOptions, TrainReport, PROB_CLAMP,
};
