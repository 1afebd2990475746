//! Simulation core for dynamic realtime z-shimming (dRTz-shim) of 2D
//! multi-echo gradient-echo MRI.
//!
//! Respiration modulates the static field offset in and around the imaged
//! object. When a 2D scan is acquired line by line over many breathing
//! cycles, the modulation turns into ghost replicas along the phase-encode
//! axis. dRTz-shim counters this by predicting the slice-averaged field
//! gradient from a pressure-bellows reading before every excitation and
//! playing out a compensation gradient blip.
//!
//! The crate is organized along the workflow:
//!
//! - [`field`]: digital phantoms, spatial distributions of the
//!   respiration-induced resonance offset (RIRO), masks and field
//!   statistics.
//! - [`mgre`]: line-by-line k-space acquisition under the time-varying
//!   field, with and without the correction term, plus reconstruction and
//!   a brute-force transform used as an oracle in tests.
//! - [`training`]: the calibration ("training") pipeline — synthetic
//!   pressure traces, field-map time series, z-gradient extraction,
//!   voxel-wise regression against pressure, and shim-plan export.
//! - [`controller`]: the deterministic per-excitation realtime loop that
//!   turns pressure readings into compensation moments and into the
//!   field-domain correction schedule consumed by [`mgre`].
//! - [`metrics`]: ghost quantification (percent signal ghosting), SNR and
//!   automatic ghost-ROI generation.

pub mod controller;
pub mod error;
pub mod field;
pub mod metrics;
pub mod mgre;
pub mod training;

pub use error::{Error, Result};
