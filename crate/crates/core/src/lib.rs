//! VANET routing laboratory.
//!
//! * [`mac_model`]: closed-form slot probabilities and virtual transmission
//!   time of a p-persistent 802.11p contention channel.
//! * [`cost_model`]: control-packet cost formulas for expanding-ring DSR
//!   discovery, scoped FSR updates and OLSR MPR flooding, plus graph
//!   oracles.
//! * [`engine`]: deterministic discrete-event simulator with random-waypoint
//!   mobility, Nakagami fading and a slotted CSMA/CA medium.
//! * [`protocols`]: DSR, FSR and OLSR agents in `orig` and `mod`
//!   parameterizations.
//! * [`traffic_metrics`]: CBR flows, throughput, end-to-end delay and
//!   normalized routing load.
//! * [`harness`]: TOML scenario configs, parallel run matrices, CSV results
//!   and orig-vs-mod comparisons.

pub mod cost_model;
pub mod engine;
pub mod harness;
pub mod error;
pub mod mac_model;
pub mod protocols;
pub mod traffic_metrics;

/// Node index, dense from zero.
pub type NodeId = usize;

pub use engine::{EngineConfig, RunOutcome, SimTime, Simulation};
pub use error::{Error, Result};
pub use mac_model::{MacParams, SuccessForm};
pub use protocols::{Mode, ProtocolKind, ProtocolParams};
pub use traffic_metrics::{Flow, MetricsReport, TrafficConfig};
pub use harness::{run_matrix, run_scenario, ScenarioConfig};
