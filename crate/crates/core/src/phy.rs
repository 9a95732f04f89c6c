//! Radio layer: large-scale channel gains, D2D-underlay SINRs, Shannon
//! rates, unit-disk connectivity, and the per-slot throughput aggregation.
//!
//! Caching vehicles reuse cellular downlink channels, so a cellular user sees
//! interference from every vehicle reusing its channel, and a D2D receiver
//! sees the base station plus other reusing vehicles. Only large-scale
//! (log-distance) fading is modeled.

use serde::{Deserialize, Serialize};

use crate::catalog::{CacheVector, Catalog};
use crate::error::{ModelError, Result};
use crate::interaction::{served_count_pmf_vec, ServiceSplit};

/// Convert a dBm figure to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Radio-layer parameters.
///
/// Power defaults follow the usual macro/vehicle split (46 dBm base station,
/// 23 dBm vehicle, -110 dBm noise, 10 MHz bandwidth, 350 m cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// MBS transmit power (W). Default 46 dBm.
    pub p_mbs_tx_w: f64,
    /// Vehicle transmit power (W). Default 23 dBm.
    pub p_veh_tx_w: f64,
    /// Noise power (W). Default -110 dBm.
    pub noise_power_w: f64,
    /// System bandwidth (Hz), shared by cellular and D2D links.
    pub bandwidth_hz: f64,
    /// Log-distance path-loss exponent (>= 2).
    pub pathloss_exponent: f64,
    /// Gain at the 1 m reference distance.
    pub reference_gain: f64,
    /// Unit-disk D2D communication radius (m).
    pub d2d_range_m: f64,
    /// Cell radius (m).
    pub cell_radius_m: f64,
    /// Scale on the base-station interference term seen by D2D receivers.
    /// 1.0 reproduces the raw underlay SINR; the default 0.0 models ideal
    /// cross-tier interference management.
    pub mbs_interference_factor: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            p_mbs_tx_w: dbm_to_watts(46.0),
            p_veh_tx_w: dbm_to_watts(23.0),
            noise_power_w: dbm_to_watts(-110.0),
            bandwidth_hz: 10e6,
            pathloss_exponent: 3.0,
            reference_gain: 1.0,
            d2d_range_m: 12.0,
            cell_radius_m: 350.0,
            mbs_interference_factor: 0.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidConfig(format!(
                    "radio.{name} must be positive and finite, got {v}"
                )));
            }
            Ok(())
        };
        pos("p_mbs_tx_w", self.p_mbs_tx_w)?;
        pos("p_veh_tx_w", self.p_veh_tx_w)?;
        pos("noise_power_w", self.noise_power_w)?;
        pos("bandwidth_hz", self.bandwidth_hz)?;
        pos("reference_gain", self.reference_gain)?;
        pos("d2d_range_m", self.d2d_range_m)?;
        pos("cell_radius_m", self.cell_radius_m)?;
        if self.pathloss_exponent < 2.0 {
            return Err(ModelError::InvalidConfig(format!(
                "radio.pathloss_exponent must be >= 2, got {}",
                self.pathloss_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.mbs_interference_factor) {
            return Err(ModelError::InvalidConfig(format!(
                "radio.mbs_interference_factor must lie in [0,1], got {}",
                self.mbs_interference_factor
            )));
        }
        Ok(())
    }
}

/// One slot's channel state: gains, D2D distances, and channel-reuse
/// assignments. Each vehicle reuses at most one downlink channel per slot.
#[derive(Debug, Clone, Default)]
pub struct LinkState {
    /// `h_{B,k}` per user.
    pub gain_mbs_to_user: Vec<f64>,
    /// `h_{v,k}` per (vehicle, user) pair; outer index is the vehicle.
    pub gain_vehicle_to_user: Vec<Vec<f64>>,
    /// Vehicle-to-user distances (m), same shape as the gains.
    pub distance_vehicle_to_user: Vec<Vec<f64>>,
    /// Channel reuse: `reuse_channel[n] = Some(k)` means vehicle `n` reuses
    /// user `k`'s downlink this slot.
    pub reuse_channel: Vec<Option<usize>>,
}

impl LinkState {
    pub fn n_users(&self) -> usize {
        self.gain_mbs_to_user.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.gain_vehicle_to_user.len()
    }

    /// Total vehicle interference received on user `k`'s channel, optionally
    /// excluding one transmitter.
    fn reuse_interference(&self, k: usize, exclude: Option<usize>, params: &RadioParams) -> f64 {
        self.reuse_channel
            .iter()
            .enumerate()
            .filter(|(n, ch)| **ch == Some(k) && Some(*n) != exclude)
            .map(|(n, _)| params.p_veh_tx_w * self.gain_vehicle_to_user[n][k])
            .sum()
    }
}

/// Deterministic log-distance gain `g = reference_gain * d^-alpha`, with the
/// distance clamped below at 1 m.
pub fn channel_gain(distance_m: f64, params: &RadioParams) -> Result<f64> {
    if !distance_m.is_finite() || distance_m <= 0.0 {
        return Err(ModelError::Domain(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let d = distance_m.max(1.0);
    Ok(params.reference_gain * d.powf(-params.pathloss_exponent))
}

/// Downlink SINR for user `k` served by the base station:
/// signal over noise plus the vehicles reusing `k`'s channel.
pub fn sinr_mbs_user(k: usize, state: &LinkState, params: &RadioParams) -> f64 {
    let signal = params.p_mbs_tx_w * state.gain_mbs_to_user[k];
    let interference = state.reuse_interference(k, None, params);
    signal / (params.noise_power_w + interference)
}

/// D2D SINR for user `k` served by vehicle `v`: signal over noise, the
/// (scaled) base-station term, and the other vehicles on the same channel.
///
/// The unit-disk precondition is enforced: `v` must be within
/// `params.d2d_range_m` of `k`.
pub fn sinr_vehicle_user(
    k: usize,
    v: usize,
    state: &LinkState,
    params: &RadioParams,
) -> Result<f64> {
    let distance = state.distance_vehicle_to_user[v][k];
    if distance > params.d2d_range_m {
        return Err(ModelError::OutOfRange {
            vehicle: v,
            user: k,
            distance_m: distance,
            range_m: params.d2d_range_m,
        });
    }
    let signal = params.p_veh_tx_w * state.gain_vehicle_to_user[v][k];
    let mbs_term =
        params.mbs_interference_factor * params.p_mbs_tx_w * state.gain_mbs_to_user[k];
    let reuse = state.reuse_interference(k, Some(v), params);
    Ok(signal / (params.noise_power_w + mbs_term + reuse))
}

/// Boundary-inclusive unit-disk connectivity.
pub fn in_range(pos_a: (f64, f64), pos_b: (f64, f64), radius_m: f64) -> bool {
    let dx = pos_a.0 - pos_b.0;
    let dy = pos_a.1 - pos_b.1;
    (dx * dx + dy * dy).sqrt() <= radius_m
}

/// Shannon capacity `W * log2(1 + sinr)` in bits/s.
pub fn shannon_rate(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr.max(0.0)).log2()
}

/// Per-slot throughput split between the cellular and vehicle tiers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThroughputSplit {
    pub mbs_bits: f64,
    pub vehicle_bits: f64,
    pub total_bits: f64,
}

/// Slot throughput: with `N` users, split weights from the contact model, and
/// per-user SINR pairs `(gamma_mbs, gamma_vehicle)`,
///
/// ```text
/// R_m = W * dt * sum_k k * P{k users cellular} * sum_j (1-q_j) p_j * log2(1+gamma_k^m)
/// R_v = W * dt * sum_k k * P{k users vehicular} * sum_j q_j p_j * log2(1+gamma_k^v)
/// ```
///
/// Vehicles carry the cached popularity mass `sum_j q_j p_j`; the cellular
/// tier carries the complement.
pub fn slot_throughput(
    cache: &CacheVector,
    catalog: &Catalog,
    split: &ServiceSplit,
    n_users: u32,
    sinr_pairs: &[(f64, f64)],
    params: &RadioParams,
    slot_seconds: f64,
) -> Result<ThroughputSplit> {
    if cache.q.len() != catalog.n_fragments() {
        return Err(ModelError::DimensionMismatch {
            left: cache.q.len(),
            right: catalog.n_fragments(),
        });
    }
    if sinr_pairs.len() != n_users as usize {
        return Err(ModelError::DimensionMismatch {
            left: sinr_pairs.len(),
            right: n_users as usize,
        });
    }
    let mass_vehicle = cache.cached_mass(catalog.popularity());
    let mass_mbs = 1.0 - mass_vehicle;
    let pmf_mbs = served_count_pmf_vec(n_users, split.kappa0)?;
    let pmf_veh = served_count_pmf_vec(n_users, split.kappa1)?;

    let mut weighted_mbs = 0.0;
    let mut weighted_veh = 0.0;
    for k in 1..=n_users as usize {
        let (gamma_m, gamma_v) = sinr_pairs[k - 1];
        weighted_mbs += k as f64 * pmf_mbs[k] * (1.0 + gamma_m.max(0.0)).log2();
        weighted_veh += k as f64 * pmf_veh[k] * (1.0 + gamma_v.max(0.0)).log2();
    }
    let scale = params.bandwidth_hz * slot_seconds;
    let mbs_bits = scale * weighted_mbs * mass_mbs;
    let vehicle_bits = scale * weighted_veh * mass_vehicle;
    Ok(ThroughputSplit {
        mbs_bits,
        vehicle_bits,
        total_bits: mbs_bits + vehicle_bits,
    })
}
