//! Single particle model of a lithium-ion cell and a benchmark for
//! identifying its eleven grouped parameters from current/voltage data with
//! bounded least squares, particle swarm, and a genetic algorithm.

pub mod commands;
pub mod config;
pub mod constants;
pub mod harness;
pub mod objective;
pub mod ocp;
pub mod optimizers;
pub mod params;
pub mod protocols;
pub mod spm;

pub use config::{CellConfig, ConfigSet, OptimizerSettings};
pub use params::{CellParameters, EstimandVector, FixedCellConfig};
