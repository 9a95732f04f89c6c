//! Per-slot energy accounting: base-station transmission, vehicle
//! transmission, cache I/O, and backhaul.
//!
//! All ledger entries are per-slot energies in joules; terms rated in watts
//! are multiplied by the slot duration. Static circuit power is excluded —
//! only consumption the caching policy can influence is tracked.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Energy-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Energy per bit transmitted by the MBS (J/bit).
    pub mbs_rate_energy: f64,
    /// Cache I/O power per served bit (W/bit); multiplied by the slot length.
    pub cache_rate_energy: f64,
    /// Amplifier/cooling overhead factor on vehicle transmit power.
    pub amplifier_factor: f64,
    /// Slot duration (s).
    pub slot_seconds: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            mbs_rate_energy: 0.5e-8,
            cache_rate_energy: 6.25e-12,
            amplifier_factor: 15.13,
            slot_seconds: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mbs_rate_energy", self.mbs_rate_energy),
            ("cache_rate_energy", self.cache_rate_energy),
            ("amplifier_factor", self.amplifier_factor),
            ("slot_seconds", self.slot_seconds),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidConfig(format!(
                    "energy.{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-slot energy breakdown (joules).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyLedger {
    pub mbs_j: f64,
    pub vehicle_tx_j: f64,
    pub cache_j: f64,
    pub backhaul_j: f64,
    pub total_j: f64,
}

/// Linear MBS transport energy: `P_m = R_m * mbs_rate_energy`.
pub fn mbs_energy(r_mbs_bits: f64, params: &EnergyParams) -> f64 {
    r_mbs_bits * params.mbs_rate_energy
}

/// Vehicle-side energies for one slot:
/// transport `zeta_v * P_tx * dt`, cache I/O `R_v * omega_c * dt`, and
/// backhaul `pushed_bits * mbs_rate_energy` for the bits pushed into vehicle
/// caches this slot.
pub fn vehicle_energy(
    r_veh_bits: f64,
    backhauled_bits: f64,
    tx_power_w: f64,
    params: &EnergyParams,
) -> (f64, f64, f64) {
    let p_tx = params.amplifier_factor * tx_power_w * params.slot_seconds;
    let p_cache = r_veh_bits * params.cache_rate_energy * params.slot_seconds;
    let p_backhaul = backhauled_bits * params.mbs_rate_energy;
    (p_tx, p_cache, p_backhaul)
}

/// Assemble the slot ledger; the total is the sum of the four parts.
pub fn total_energy(mbs_j: f64, vehicle_tx_j: f64, cache_j: f64, backhaul_j: f64) -> EnergyLedger {
    EnergyLedger {
        mbs_j,
        vehicle_tx_j,
        cache_j,
        backhaul_j,
        total_j: mbs_j + vehicle_tx_j + cache_j + backhaul_j,
    }
}
