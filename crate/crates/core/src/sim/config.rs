//! Scenario configuration: one value of this struct plus a seed fully
//! determines an episode.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{ModelError, Result};
use crate::interaction::InteractionRates;
use crate::phy::RadioParams;

/// Caching policy driving the per-slot placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Re-solve the drift-plus-penalty problem every slot.
    Online,
    /// Static placement from a ratio-minimization solve at long update
    /// intervals, based on the popularity known at the update instant.
    Offline,
    /// No vehicle caching; everything is served by the base station.
    None,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Online => "online",
            Policy::Offline => "offline",
            Policy::None => "none",
        })
    }
}

/// Catalog parameters: 1000 fragments of 10 Mb with Zipf exponent 0.7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub n_fragments: usize,
    pub fragment_size_bits: f64,
    pub zipf_exponent: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            n_fragments: 1000,
            fragment_size_bits: 1e7,
            zipf_exponent: 0.7,
        }
    }
}

/// Road segment geometry vehicles are placed on (a straight multi-lane
/// chord through the cell).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_count: usize,
    pub lane_width_m: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_count: 4,
            lane_width_m: 3.5,
        }
    }
}

/// Full experiment description; identical `(config, seed)` pairs produce
/// bit-identical metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Mean of the Poisson user count in the cell.
    pub user_intensity: f64,
    /// Mean of the Poisson vehicle count in the cell.
    pub vehicle_count_mean: f64,
    /// Fraction of vehicles equipped as cache carriers.
    pub cache_proportion: f64,
    pub rates: InteractionRates,
    pub catalog: CatalogConfig,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub road: RoadGeometry,
    pub policy: Policy,
    /// Per-vehicle cache size as a fraction of the total catalog.
    pub normalized_cache_capacity: f64,
    /// Slots between offline placement re-solves (one day at 1 s slots).
    pub offline_update_interval_slots: u64,
    /// Fraction of fragment popularity ranks reshuffled between the offline
    /// baseline's update instant and the episode (staleness of its belief).
    pub offline_popularity_drift: f64,
    /// Drift-plus-penalty trade-off weight.
    pub v_param: f64,
    pub n_slots: u64,
    pub rng_seed: u64,
    /// Probability that an active caching vehicle reuses one random downlink
    /// channel in a slot.
    pub reuse_probability: f64,
    /// Charge backhaul on served vehicle bits instead of cache-update bits.
    pub backhaul_per_served_bit: bool,
    /// Drive virtual queues from measured per-slot delays instead of the
    /// contact-model expectation.
    pub empirical_delays: bool,
    /// Pin the effective meeting rate, bypassing the placement coupling
    /// (diagnostics hook for the contact-model oracle).
    pub xi_override: Option<f64>,
    /// Sliding window for cache-utilization measurement; defaults to one
    /// offline update interval capped at the episode length.
    pub utilization_window_slots: Option<u64>,
    /// Keep per-slot ledgers in the returned metrics.
    pub emit_traces: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            user_intensity: 40.0,
            vehicle_count_mean: 160.0,
            cache_proportion: 0.5,
            rates: InteractionRates::default(),
            catalog: CatalogConfig::default(),
            radio: RadioParams::default(),
            energy: EnergyParams::default(),
            road: RoadGeometry::default(),
            policy: Policy::Online,
            normalized_cache_capacity: 0.01,
            offline_update_interval_slots: 86_400,
            offline_popularity_drift: 0.2,
            v_param: 50.0,
            n_slots: 10_000,
            rng_seed: 42,
            reuse_probability: 1.0,
            backhaul_per_served_bit: false,
            empirical_delays: false,
            xi_override: None,
            utilization_window_slots: None,
            emit_traces: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be nonnegative and finite, got {v}"
                )));
            }
            Ok(())
        };
        let fraction = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must lie in [0,1], got {v}"
                )));
            }
            Ok(())
        };
        nonneg("user_intensity", self.user_intensity)?;
        nonneg("vehicle_count_mean", self.vehicle_count_mean)?;
        fraction("cache_proportion", self.cache_proportion)?;
        fraction("reuse_probability", self.reuse_probability)?;
        fraction("offline_popularity_drift", self.offline_popularity_drift)?;
        self.rates.validate()?;
        self.rates.require_stable()?;
        if self.catalog.n_fragments == 0 {
            return Err(ModelError::InvalidConfig(
                "catalog.n_fragments must be at least 1".into(),
            ));
        }
        if self.catalog.fragment_size_bits.is_nan() || self.catalog.fragment_size_bits <= 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "catalog.fragment_size_bits must be positive, got {}",
                self.catalog.fragment_size_bits
            )));
        }
        if self.catalog.zipf_exponent < 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "catalog.zipf_exponent must be nonnegative, got {}",
                self.catalog.zipf_exponent
            )));
        }
        self.radio.validate()?;
        self.energy.validate()?;
        if !(self.normalized_cache_capacity > 0.0 && self.normalized_cache_capacity <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "normalized_cache_capacity must lie in (0,1], got {}",
                self.normalized_cache_capacity
            )));
        }
        if self.v_param.is_nan() || self.v_param <= 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "v_param must be positive, got {}",
                self.v_param
            )));
        }
        if self.n_slots == 0 {
            return Err(ModelError::InvalidConfig("n_slots must be at least 1".into()));
        }
        if self.road.lane_count == 0 {
            return Err(ModelError::InvalidConfig("road.lane_count must be at least 1".into()));
        }
        if self.road.lane_width_m.is_nan() || self.road.lane_width_m <= 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "road.lane_width_m must be positive, got {}",
                self.road.lane_width_m
            )));
        }
        if let Some(xi) = self.xi_override {
            if !xi.is_finite() || xi < 0.0 {
                return Err(ModelError::InvalidConfig(format!(
                    "xi_override must be nonnegative and finite, got {xi}"
                )));
            }
        }
        Ok(())
    }

    /// Per-vehicle cache budget in bits.
    pub fn capacity_bits(&self) -> f64 {
        self.normalized_cache_capacity
            * self.catalog.n_fragments as f64
            * self.catalog.fragment_size_bits
    }

    /// Contact rate between a user and the caching sub-fleet.
    pub fn contact_rate(&self) -> f64 {
        self.rates.xi * self.cache_proportion
    }

    /// Delay budget: the mean tolerance time `1/omega`.
    pub fn delay_budget_s(&self) -> f64 {
        1.0 / self.rates.omega
    }

    /// Resolved cache-utilization window length in slots.
    pub fn utilization_window(&self) -> u64 {
        self.utilization_window_slots
            .unwrap_or(self.offline_update_interval_slots)
            .clamp(1, self.n_slots)
    }
}
