//! Range estimation: the angle-adaptive particle filter, Butterworth
//! smoothing and conversion of range plus bearing to Cartesian metres.

mod butterworth;
mod particle;

use thiserror::Error;

pub use crate::coords::{spherical_to_cartesian, CartesianCoord, SphericalCoord};
pub use butterworth::{Butterworth, ButterworthSpec};
pub use particle::{
    pf_init, pf_predict, pf_resample, pf_update, sigma_rbf, systematic_resample_indices,
    FilterParams, FilterState, Particle, RangeFilter, UpdateOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimError {
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("observation is not finite: {0}")]
    NonFiniteObservation(f64),
    #[error("cutoff {f_crit_hz} Hz must lie in (0, {f_sample_hz}/2) Hz")]
    InvalidCutoff { f_crit_hz: f64, f_sample_hz: f64 },
    #[error("filter order must be at least 1, got {0}")]
    InvalidOrder(usize),
}
