//! Scenario construction: configuration, channels, phase-error statistics,
//! and the effective/lifted matrices every solver works with.

pub mod channels;
pub mod config;
pub mod design;
pub mod lifted;
pub mod phase;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use channels::{complex_gaussian, generate_channels, path_gain, ChannelSet, Point};
pub use config::{db_to_linear, dbm_to_watts, AlgorithmParams, Geometry, SystemConfig};
pub use design::Design;
pub use lifted::{effective_matrix, quad_lift, zero_trace_threshold};
pub use phase::{phase_error_moment_matrix, PhaseStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
