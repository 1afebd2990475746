//! Experiment runner binding the simulation core: scenario configs,
//! correction on/off simulation runs, calibration-pipeline runs, RIRO
//! variability sweeps and file emission.

pub mod config;
pub mod error;
pub mod pgm;
pub mod runner;

pub use config::{PhantomKind, ScenarioConfig};
pub use error::CliError;
