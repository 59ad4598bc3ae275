//! Subframe-level simulator of LTE-V2X mode-4 sidelink broadcast.
//!
//! Vehicles on a highway broadcast periodic safety beacons over the PC5
//! sidelink. Each UE picks its radio resources with sensing-based
//! semi-persistent scheduling (SB-SPS): it keeps a one-second record of what
//! it heard, excludes candidate resources that look busy, ranks the rest by
//! average S-RSSI and reserves one of the quietest at random.
//!
//! Module map:
//!
//! - [`resource_grid`]: sub-channel numerology, CSRs, MCS and TB sizes.
//! - [`channel_model`]: distance-binned two-ray loss with Nakagami/Weibull fading.
//! - [`phy_layer`]: link budget, SINR, BLER-driven decoding, sensing record.
//! - [`sps_scheduler`]: report window, exclusion, ranking and reservation.
//! - [`scenario`]: platoon geometry and beacon traffic.
//! - [`sim_engine`]: the phase-ordered subframe loop.
//! - [`metrics`]: PER by distance, inter-packet gaps, delivered data rate.
//! - [`cli_runner`]: config files, presets, sweeps and artifact emission.

pub mod channel_model;
pub mod cli_runner;
pub mod error;
pub mod metrics;
pub mod phy_layer;
pub mod resource_grid;
pub mod rng;
pub mod scenario;
pub mod sim_engine;
pub mod sps_scheduler;

pub use error::{Error, Result};

/// Absolute subframe index (1 ms). Signed so that sensing windows can reach
/// back before the first simulated subframe.
pub type Subframe = i64;
