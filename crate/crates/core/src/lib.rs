//! Vehicle–pedestrian crossing negotiation: an intention-aware MPC, two
//! rule-based baselines, a scripted-scenario simulator and the metrics,
//! statistics and tuning used to compare them.

pub mod baseline;
pub mod config;
pub mod decision;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod mpc;
pub mod pedestrian;
pub mod report;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod stats;
pub mod tuning;

pub use config::Config;
pub use decision::{Controller, ControllerKind, ControllerSetup, Decision};
pub use error::{ConfigError, SimError};
pub use scenario::{ControllerParams, JointState, ScenarioGeometry, ZoneLabel};
pub use sim::{EpisodeTrace, Outcome, ScenarioKind};
