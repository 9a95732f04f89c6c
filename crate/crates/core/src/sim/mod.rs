//! Slotted-time Monte-Carlo engine: scenario configuration, the per-slot
//! simulation loop, and episode/sweep drivers.

mod config;
mod engine;
mod metrics;

pub use config::{CatalogConfig, Policy, RoadGeometry, ScenarioConfig};
pub use engine::{run_episode, spawn_users, spawn_vehicles, sweep, EpisodeRunner, Vehicle};
pub use metrics::{EpisodeMetrics, SlotLedger};
