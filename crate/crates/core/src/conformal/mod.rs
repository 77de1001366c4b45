//! Conformity scores, conformal thresholds and the online AQCP loop.

mod aqcp;
mod kde;
mod quantile;
mod score;
mod set;
mod weighted;

pub use aqcp::{
    aqcp_step, coverage_bound, run_aqcp, run_on_scores, uniform_scores, AqcpConfig, AqcpRun, AqcpState, ReplaySource,
    ShotSource, SimulatorSource, StepRecord,
};
pub use kde::{sample_std, silverman_bandwidth, Kde, MIN_BANDWIDTH};
pub use quantile::{conformal_quantile, get_quantile, sorted_quantile, weighted_quantile};
pub use score::{
    default_k, score, FittedScore, HdrGrid, ScoreKind, ScoreSpec, TieBreak, DEFAULT_HDR_POINTS, DEFAULT_TIEBREAK_SIGMA,
    HDR_PAD_BANDWIDTHS, MIN_HDR_POINTS,
};
pub use set::{candidate_scores, generate_prediction_set, set_from_scores, CandidateGrid, PredictionSet};
pub use weighted::{weighted_prediction_set, WeightVector};
