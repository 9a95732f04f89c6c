//! Per-slot ledgers and per-episode aggregate metrics.

use serde::Serialize;

use crate::energy::EnergyLedger;

/// Everything recorded for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotLedger {
    pub slot: u64,
    pub n_users: u32,
    /// Throughput split of the slot (bits).
    pub r_mbs_bits: f64,
    pub r_vehicle_bits: f64,
    pub r_total_bits: f64,
    /// Reference throughput of the no-caching baseline on the same draws.
    pub r_baseline_bits: f64,
    pub energy: EnergyLedger,
    /// Running energy per bit after this slot (J/bit).
    pub eta_ee: f64,
    /// Largest virtual-queue backlog after this slot (s).
    pub max_backlog: f64,
    /// Slot-objective value of the placement chosen for the next slot.
    pub objective: f64,
    /// Popularity mass covered by the active placement.
    pub cached_mass: f64,
    /// Number of fragment-equivalents placed (`sum_j q_j`).
    pub cached_fragments: f64,
    pub arrivals: u64,
    pub vehicle_served: u64,
    pub mbs_served: u64,
    /// Requests still pending at the end of the slot (all users).
    pub pending: u64,
    /// Mean delay of requests terminated this slot, if any.
    pub mean_delay_s: Option<f64>,
}

/// Aggregate outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    /// Time-average energy per delivered bit (J/bit).
    pub eta_ee: f64,
    /// Fraction of terminated requests served by caching vehicles within
    /// their tolerance.
    pub hit_ratio: f64,
    /// Fraction of cached copy-mass accessed at least once inside the
    /// measurement window (averaged over window checkpoints).
    pub cache_utilization: f64,
    /// Relative throughput surplus over the no-caching baseline.
    pub system_gain: f64,
    /// Mean delay of terminated requests (s).
    pub mean_delay_s: f64,
    /// `max_n H_n(K) / K`: terminal worst virtual backlog per slot.
    pub max_backlog_over_horizon: f64,
    /// Delay budget the queues enforce (s).
    pub d_av_s: f64,
    /// Occupancy-ratio estimate of the vehicle-service probability.
    pub empirical_kappa1: f64,
    /// Drift-bound gap `B / (V * mean R)` from the run's own statistics.
    pub bound_gap: f64,
    pub total_bits: f64,
    pub total_energy_j: f64,
    pub baseline_bits: f64,
    pub requests_total: u64,
    pub requests_vehicle: u64,
    pub requests_mbs: u64,
    pub n_users: u32,
    pub n_vehicles: u32,
    pub n_caching_vehicles: u32,
    /// Per-slot ledgers; populated only when trace emission is enabled.
    pub traces: Vec<SlotLedger>,
}
