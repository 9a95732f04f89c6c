//! Slotted-time simulator and optimization library for vehicular edge caching.
//!
//! Moving vehicles act as cache carriers inside a macro cell. Whether a user's
//! request is answered by a caching vehicle or falls back to the cellular base
//! station is governed by a two-mode contact/queue process ([`interaction`]).
//! Radio rates come from a D2D-underlay SINR model ([`phy`]), energy from a
//! per-slot ledger ([`energy`]), and the cache placement vector is chosen
//! online each slot by a drift-plus-penalty controller wrapped around a
//! fractional-knapsack solve ([`optimizer`]). The [`sim`] module ties these
//! together into reproducible Monte-Carlo episodes and parameter sweeps.
//!
//! All analytical operations are pure functions; episodes are deterministic
//! given their configuration and seed.

pub mod catalog;
pub mod energy;
pub mod error;
pub mod interaction;
pub mod optimizer;
pub mod phy;
pub mod sim;

pub use catalog::{validate_cache_vector, zipf_popularity, CacheVector, Catalog};
pub use energy::{mbs_energy, total_energy, vehicle_energy, EnergyLedger, EnergyParams};
pub use error::{ModelError, Result};
pub use interaction::{
    effective_meeting_rate, expected_queue_lengths, served_count_pmf, served_count_pmf_vec,
    service_split, solve_truncated_chain, solve_truncated_chain_auto, InteractionRates,
    ServiceSplit, TruncatedChain,
};
pub use optimizer::{
    build_slot_problem, diagnostics_bound, dinkelbach_solve_static, solve_slot,
    update_virtual_queue, DinkelbachSolution, DiscreteSpace, EfficiencyTracker, SlotObjective,
    SlotProblem, VirtualQueues,
};
pub use phy::{
    channel_gain, in_range, shannon_rate, sinr_mbs_user, sinr_vehicle_user, slot_throughput,
    LinkState, RadioParams, ThroughputSplit,
};
pub use sim::{run_episode, sweep, EpisodeMetrics, Policy, ScenarioConfig, SlotLedger};
