//! Slotted-time Monte-Carlo engine.
//!
//! An episode spawns a Poisson number of users and vehicles, then walks
//! through slots. Each slot: geometry and channel reuse are redrawn, every
//! user's contact/queue process is advanced with exponential clocks, the
//! analytical throughput/energy ledger is evaluated for the active placement,
//! virtual queues and the efficiency tracker are updated, and the policy
//! picks the next placement.
//!
//! Randomness is split into fixed substreams of one seeded generator
//! (stream 0: spawning, 1: per-slot geometry, 2: offline-baseline belief and
//! snapshot, 3: cache realization, 4+u: user `u`'s event clock), so episodes
//! are bit-reproducible and policies with the same seed share their
//! environment draws.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::catalog::{CacheVector, Catalog};
use crate::energy::{mbs_energy, total_energy, vehicle_energy};
use crate::error::Result;
use crate::interaction::service_split;
use crate::optimizer::{
    build_slot_problem, diagnostics_bound, dinkelbach_solve_static, solve_slot, DiscreteSpace,
    EfficiencyTracker, SlotObjective, VirtualQueues,
};
use crate::phy::{channel_gain, sinr_mbs_user, sinr_vehicle_user, slot_throughput, LinkState};
use crate::sim::config::{Policy, RoadGeometry, ScenarioConfig};
use crate::sim::metrics::{EpisodeMetrics, SlotLedger};

/// A vehicle in the cell; only caching vehicles transmit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub position: (f64, f64),
    pub caching: bool,
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive mean");
    dist.sample(rng) as usize
}

fn uniform_disk<R: Rng>(radius: f64, rng: &mut R) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    (r * theta.cos(), r * theta.sin())
}

fn road_point<R: Rng>(radius: f64, road: &RoadGeometry, rng: &mut R) -> (f64, f64) {
    let x = rng.random_range(-radius..=radius);
    let lane = rng.random_range(0..road.lane_count);
    let y = (lane as f64 - (road.lane_count as f64 - 1.0) / 2.0) * road.lane_width_m;
    (x, y)
}

fn exp_draw<R: Rng>(rate: f64, rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Poisson-many users placed uniformly on the cell disk.
pub fn spawn_users<R: Rng>(intensity: f64, cell_radius_m: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let count = poisson_count(intensity, rng);
    (0..count).map(|_| uniform_disk(cell_radius_m, rng)).collect()
}

/// Poisson-many vehicles on the road segment; each is independently a cache
/// carrier with probability `cache_proportion`.
pub fn spawn_vehicles<R: Rng>(
    mean_count: f64,
    cache_proportion: f64,
    cell_radius_m: f64,
    road: &RoadGeometry,
    rng: &mut R,
) -> Vec<Vehicle> {
    let count = poisson_count(mean_count, rng);
    (0..count)
        .map(|_| Vehicle {
            position: road_point(cell_radius_m, road, rng),
            caching: rng.random::<f64>() < cache_proportion,
        })
        .collect()
}

/// Reshuffle the popularity values of a random `drift` fraction of fragments;
/// models how far the request distribution has moved since the offline
/// baseline last observed it.
fn drift_popularity<R: Rng>(popularity: &[f64], drift: f64, rng: &mut R) -> Vec<f64> {
    let n = popularity.len();
    let mut stale = popularity.to_vec();
    let k = ((n as f64 * drift).round() as usize).min(n);
    if k < 2 {
        return stale;
    }
    // choose k positions, then cycle their values
    let mut chosen: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        chosen.swap(i, j);
    }
    chosen.truncate(k);
    let first = stale[chosen[0]];
    for w in 0..k - 1 {
        stale[chosen[w]] = stale[chosen[w + 1]];
    }
    stale[chosen[k - 1]] = first;
    stale
}

struct UserState {
    mode1: bool,
    serving: Option<usize>,
    pending: VecDeque<(f64, u32)>,
}

struct SlotGeometry {
    /// `(gamma_mbs_with_reuse, gamma_vehicle)` per user.
    pairs_active: Vec<(f64, f64)>,
    /// `(gamma_mbs_interference_free, 0)` per user.
    pairs_clean: Vec<(f64, f64)>,
    log_mbs_active: Vec<f64>,
    log_mbs_clean: Vec<f64>,
    log_vehicle: Vec<f64>,
}

/// One live episode; [`EpisodeRunner::run_slot`] advances a single slot.
pub struct EpisodeRunner {
    cfg: ScenarioConfig,
    catalog: Catalog,
    cum_popularity: Vec<f64>,
    n_users: u32,
    n_vehicles: u32,
    vehicles: Vec<Vehicle>,
    caching_idx: Vec<usize>,
    caches: Vec<Vec<bool>>,
    /// Fragments ever pushed to each vehicle; deactivated copies stay on
    /// disk, so re-activating them costs no backhaul.
    resident: Vec<Vec<bool>>,
    holder_counts: Vec<u32>,
    last_access: Vec<i64>,
    q_current: CacheVector,
    /// Capacity-filling placement in popularity order; a standing candidate
    /// for the online policy's exact comparison.
    q_popularity_fill: CacheVector,
    stale_popularity: Vec<f64>,
    queues: VirtualQueues,
    tracker: EfficiencyTracker,
    user_states: Vec<UserState>,
    rng_geometry: ChaCha12Rng,
    rng_cache: ChaCha12Rng,
    rng_offline: ChaCha12Rng,
    user_rngs: Vec<ChaCha12Rng>,
    slot: u64,
    pending_backhaul_bits: f64,
    sum_bits: f64,
    sum_energy_j: f64,
    sum_baseline_bits: f64,
    arrivals_total: u64,
    vehicle_served: u64,
    mbs_served: u64,
    delay_sum: f64,
    delay_count: u64,
    occupancy_l0: f64,
    occupancy_k1: f64,
    excess_sq_half_sum: f64,
    util_samples: Vec<f64>,
    traces: Vec<SlotLedger>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl EpisodeRunner {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let catalog = Catalog::new(
            cfg.catalog.n_fragments,
            cfg.catalog.fragment_size_bits,
            cfg.catalog.zipf_exponent,
        )?;
        let mut cum = Vec::with_capacity(catalog.n_fragments());
        let mut acc = 0.0;
        for p in catalog.popularity() {
            acc += p;
            cum.push(acc);
        }

        let mut rng_spawn = stream_rng(cfg.rng_seed, 0);
        let users = spawn_users(cfg.user_intensity, cfg.radio.cell_radius_m, &mut rng_spawn);
        let vehicles = spawn_vehicles(
            cfg.vehicle_count_mean,
            cfg.cache_proportion,
            cfg.radio.cell_radius_m,
            &cfg.road,
            &mut rng_spawn,
        );
        let caching_idx: Vec<usize> = vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.caching)
            .map(|(i, _)| i)
            .collect();
        let n_users = users.len() as u32;
        let n_fragments = catalog.n_fragments();

        let mut rng_offline = stream_rng(cfg.rng_seed, 2);
        let stale_popularity = drift_popularity(
            catalog.popularity(),
            cfg.offline_popularity_drift,
            &mut rng_offline,
        );

        let user_rngs = (0..n_users as u64)
            .map(|u| stream_rng(cfg.rng_seed, 4 + u))
            .collect();
        let user_states = (0..n_users)
            .map(|_| UserState {
                mode1: false,
                serving: None,
                pending: VecDeque::new(),
            })
            .collect();

        let q_popularity_fill = {
            let mut order: Vec<usize> = (0..n_fragments).collect();
            let pop = catalog.popularity();
            order.sort_by(|&a, &b| pop[b].partial_cmp(&pop[a]).unwrap().then(a.cmp(&b)));
            let mut q = vec![0.0; n_fragments];
            let mut remaining = cfg.capacity_bits();
            for j in order {
                if remaining <= 0.0 {
                    break;
                }
                let take = (remaining / cfg.catalog.fragment_size_bits).min(1.0);
                q[j] = take;
                remaining -= take * cfg.catalog.fragment_size_bits;
            }
            CacheVector::new(q, cfg.capacity_bits())
        };

        let mut runner = Self {
            catalog,
            cum_popularity: cum,
            n_users,
            n_vehicles: vehicles.len() as u32,
            caches: vec![vec![false; n_fragments]; caching_idx.len()],
            resident: vec![vec![false; n_fragments]; caching_idx.len()],
            holder_counts: vec![0; n_fragments],
            last_access: vec![-1; caching_idx.len() * n_fragments],
            q_current: CacheVector::empty(n_fragments, cfg.capacity_bits()),
            q_popularity_fill,
            stale_popularity,
            queues: VirtualQueues::new(n_users as usize, cfg.delay_budget_s()),
            tracker: EfficiencyTracker::new(),
            user_states,
            rng_geometry: stream_rng(cfg.rng_seed, 1),
            rng_cache: stream_rng(cfg.rng_seed, 3),
            rng_offline,
            user_rngs,
            slot: 0,
            pending_backhaul_bits: 0.0,
            sum_bits: 0.0,
            sum_energy_j: 0.0,
            sum_baseline_bits: 0.0,
            arrivals_total: 0,
            vehicle_served: 0,
            mbs_served: 0,
            delay_sum: 0.0,
            delay_count: 0,
            occupancy_l0: 0.0,
            occupancy_k1: 0.0,
            excess_sq_half_sum: 0.0,
            util_samples: Vec::new(),
            traces: Vec::new(),
            vehicles,
            caching_idx,
            cfg: cfg.clone(),
        };

        if runner.cfg.policy == Policy::Offline {
            let belief = runner.stale_popularity.clone();
            let q = runner.solve_offline_placement(&belief)?;
            runner.apply_placement(q);
        }
        Ok(runner)
    }

    pub fn q_current(&self) -> &CacheVector {
        &self.q_current
    }

    fn n_caching(&self) -> usize {
        self.caching_idx.len()
    }

    /// Effective meeting rate implied by the active placement (or the pinned
    /// override).
    fn xi_effective(&self) -> f64 {
        self.cfg.xi_override.unwrap_or_else(|| {
            self.cfg.contact_rate() * self.q_current.cached_mass(self.catalog.popularity())
        })
    }

    /// Contact-model expectation of the per-request system time at the
    /// current effective meeting rate.
    fn analytic_delay(&self) -> f64 {
        let rates = self.cfg.rates.with_xi(self.xi_effective());
        (rates.nu - rates.lambda + rates.xi) / rates.closed_form_denominator()
    }

    fn draw_geometry<R: Rng>(&self, rng: &mut R) -> Result<SlotGeometry> {
        let cfg = &self.cfg;
        let n_users = self.n_users as usize;
        let n_cv = self.n_caching();
        let radius = cfg.radio.cell_radius_m;

        let user_pos: Vec<(f64, f64)> = (0..n_users).map(|_| uniform_disk(radius, rng)).collect();
        let veh_pos: Vec<(f64, f64)> = (0..self.vehicles.len())
            .map(|_| road_point(radius, &cfg.road, rng))
            .collect();

        // Reuse assignment: each caching vehicle picks one downlink channel.
        // Draw counts are placement-independent so paired seeds stay aligned.
        let mut reuse = vec![None; n_cv];
        for slot in reuse.iter_mut() {
            let active = rng.random::<f64>() < cfg.reuse_probability;
            if n_users > 0 {
                let ch = rng.random_range(0..n_users);
                if active {
                    *slot = Some(ch);
                }
            }
        }
        // Serving contact per user: a uniformly chosen caching vehicle met at
        // a unit-disk-internal distance.
        let mut serving = vec![0usize; n_users];
        let mut serving_dist = vec![1.0f64; n_users];
        for k in 0..n_users {
            if n_cv > 0 {
                serving[k] = rng.random_range(0..n_cv);
            }
            let d = cfg.radio.d2d_range_m * rng.random::<f64>().sqrt();
            serving_dist[k] = d.clamp(1.0f64.min(cfg.radio.d2d_range_m), cfg.radio.d2d_range_m);
        }

        let mut gain_mbs = Vec::with_capacity(n_users);
        for pos in &user_pos {
            let d = (pos.0 * pos.0 + pos.1 * pos.1).sqrt().max(1.0);
            gain_mbs.push(channel_gain(d, &cfg.radio)?);
        }
        let mut gain_veh = vec![vec![0.0; n_users]; n_cv];
        let mut dist_veh = vec![vec![f64::INFINITY; n_users]; n_cv];
        for (cv, &vi) in self.caching_idx.iter().enumerate() {
            let vp = veh_pos[vi];
            for (k, up) in user_pos.iter().enumerate() {
                let d = if serving[k] == cv {
                    serving_dist[k]
                } else {
                    let dx = vp.0 - up.0;
                    let dy = vp.1 - up.1;
                    (dx * dx + dy * dy).sqrt().max(1.0)
                };
                dist_veh[cv][k] = d;
                gain_veh[cv][k] = channel_gain(d, &cfg.radio)?;
            }
        }

        let state_active = LinkState {
            gain_mbs_to_user: gain_mbs.clone(),
            gain_vehicle_to_user: gain_veh,
            distance_vehicle_to_user: dist_veh,
            reuse_channel: reuse,
        };

        let mut pairs_active = Vec::with_capacity(n_users);
        let mut pairs_clean = Vec::with_capacity(n_users);
        for k in 0..n_users {
            let g_m = sinr_mbs_user(k, &state_active, &cfg.radio);
            let g_m_clean = cfg.radio.p_mbs_tx_w * gain_mbs[k] / cfg.radio.noise_power_w;
            let g_v = if n_cv > 0 {
                sinr_vehicle_user(k, serving[k], &state_active, &cfg.radio)?
            } else {
                0.0
            };
            pairs_active.push((g_m, g_v));
            pairs_clean.push((g_m_clean, 0.0));
        }
        let log2p1 = |g: f64| (1.0 + g).log2();
        Ok(SlotGeometry {
            log_mbs_active: pairs_active.iter().map(|p| log2p1(p.0)).collect(),
            log_mbs_clean: pairs_clean.iter().map(|p| log2p1(p.0)).collect(),
            log_vehicle: pairs_active.iter().map(|p| log2p1(p.1)).collect(),
            pairs_active,
            pairs_clean,
        })
    }

    /// Advance the per-user contact/queue processes across one slot.
    fn run_events(&mut self, delays_out: &mut [f64], counts_out: &mut [u32]) -> (u64, u64, u64) {
        let dt = self.cfg.energy.slot_seconds;
        let slot_start = self.slot as f64 * dt;
        let lambda = self.cfg.rates.lambda;
        let nu = self.cfg.rates.nu;
        let omega = self.cfg.rates.omega;
        let override_rate = self.cfg.xi_override;
        let base_contact = self.cfg.contact_rate();
        let n_cv = self.n_caching();
        let n_fragments = self.catalog.n_fragments();

        let mut arrivals = 0u64;
        let mut veh = 0u64;
        let mut mbs = 0u64;

        let Self {
            ref mut user_states,
            ref mut user_rngs,
            ref caches,
            ref holder_counts,
            ref mut last_access,
            ref cum_popularity,
            ref mut occupancy_l0,
            ref mut occupancy_k1,
            ref mut delay_sum,
            ref mut delay_count,
            ..
        } = *self;

        let slot_idx = self.slot as i64;
        for (u, st) in user_states.iter_mut().enumerate() {
            let rng = &mut user_rngs[u];
            let mut t = 0.0f64;
            loop {
                let j = st.pending.len();
                let meet_rate = if st.mode1 || j == 0 {
                    0.0
                } else if let Some(x) = override_rate {
                    x
                } else if n_cv > 0 {
                    let head = st.pending.front().unwrap().1 as usize;
                    base_contact * holder_counts[head] as f64 / n_cv as f64
                } else {
                    0.0
                };
                let service_rate = if st.mode1 { nu } else { 0.0 };
                let expiry_rate = if st.mode1 { 0.0 } else { j as f64 * omega };
                let total = lambda + meet_rate + service_rate + expiry_rate;
                let step = exp_draw(total, rng);
                let advance = step.min(dt - t);
                if st.mode1 {
                    *occupancy_k1 += advance;
                } else {
                    *occupancy_l0 += j as f64 * advance;
                }
                t += step;
                if t >= dt {
                    break;
                }
                let now = slot_start + t;
                let pick: f64 = rng.random::<f64>() * total;
                if pick < lambda {
                    // arrival
                    let frag = {
                        let x: f64 = rng.random();
                        cum_popularity.partition_point(|&c| c < x).min(n_fragments - 1) as u32
                    };
                    st.pending.push_back((now, frag));
                    arrivals += 1;
                } else if pick < lambda + expiry_rate {
                    // tolerance expiry: a uniformly random pending request
                    // abandons to the cellular network
                    let victim = rng.random_range(0..j);
                    let (t_arr, _) = st.pending.remove(victim).unwrap();
                    let d = now - t_arr;
                    *delay_sum += d;
                    *delay_count += 1;
                    delays_out[u] += d;
                    counts_out[u] += 1;
                    mbs += 1;
                } else if pick < lambda + expiry_rate + meet_rate {
                    // useful contact: attach to a vehicle holding the head
                    // fragment (or an abstract server when the rate is pinned)
                    st.mode1 = true;
                    st.serving = if override_rate.is_some() || n_cv == 0 {
                        None
                    } else {
                        let head = st.pending.front().unwrap().1 as usize;
                        let holders = holder_counts[head];
                        if holders == 0 {
                            None
                        } else {
                            let nth = rng.random_range(0..holders);
                            caches
                                .iter()
                                .enumerate()
                                .filter(|(_, c)| c[head])
                                .nth(nth as usize)
                                .map(|(cv, _)| cv)
                        }
                    };
                } else {
                    // vehicle service completes the head request
                    let (t_arr, frag) = st.pending.pop_front().unwrap();
                    let d = now - t_arr;
                    *delay_sum += d;
                    *delay_count += 1;
                    delays_out[u] += d;
                    counts_out[u] += 1;
                    veh += 1;
                    if let Some(cv) = st.serving {
                        if caches[cv][frag as usize] {
                            last_access[cv * n_fragments + frag as usize] = slot_idx;
                        }
                    }
                    if st.pending.is_empty() {
                        st.mode1 = false;
                        st.serving = None;
                    }
                }
            }
        }
        (arrivals, veh, mbs)
    }

    /// Re-sample the realized per-vehicle caches where the placement changed;
    /// returns the bits newly pushed to vehicles.
    fn apply_placement(&mut self, new_q: CacheVector) {
        let fragment_bits = self.catalog.fragment_size_bits();
        let n_fragments = self.catalog.n_fragments();
        let mut new_copies = 0u64;
        for j in 0..n_fragments {
            let old = self.q_current.q[j];
            let new = new_q.q[j];
            if (new - old).abs() <= 1e-12 {
                continue;
            }
            for (cv, cache) in self.caches.iter_mut().enumerate() {
                let hold = self.rng_cache.random::<f64>() < new;
                let had = cache[j];
                if hold && !had && !self.resident[cv][j] {
                    new_copies += 1;
                    self.resident[cv][j] = true;
                }
                if hold != had {
                    cache[j] = hold;
                    if hold {
                        self.holder_counts[j] += 1;
                    } else {
                        self.holder_counts[j] -= 1;
                    }
                }
            }
        }
        self.pending_backhaul_bits += new_copies as f64 * fragment_bits;
        self.q_current = new_q;
    }

    /// Static placement solve for the offline baseline: ratio minimization
    /// over greedy fill levels of the believed popularity, evaluated on a
    /// geometry snapshot drawn at the update instant.
    fn solve_offline_placement(&mut self, belief: &[f64]) -> Result<CacheVector> {
        let n_fragments = self.catalog.n_fragments();
        let capacity = self.cfg.capacity_bits();
        let fragment_bits = self.catalog.fragment_size_bits();
        if self.n_users == 0 || self.n_caching() == 0 {
            return Ok(CacheVector::empty(n_fragments, capacity));
        }
        let mut rng = self.rng_offline.clone();
        let geo = self.draw_geometry(&mut rng)?;
        self.rng_offline = rng;

        let mut order: Vec<usize> = (0..n_fragments).collect();
        order.sort_by(|&a, &b| belief[b].partial_cmp(&belief[a]).unwrap().then(a.cmp(&b)));

        let total_units = capacity / fragment_bits;
        let full_units = (total_units.floor() as usize).min(n_fragments);
        let frac = (total_units - full_units as f64).clamp(0.0, 1.0);

        let mut placements: Vec<CacheVector> = Vec::with_capacity(full_units + 2);
        let mut q = vec![0.0; n_fragments];
        placements.push(CacheVector::new(q.clone(), capacity));
        for &j in order.iter().take(full_units) {
            q[j] = 1.0;
            placements.push(CacheVector::new(q.clone(), capacity));
        }
        if frac > 1e-9 && full_units < n_fragments {
            q[order[full_units]] = frac;
            placements.push(CacheVector::new(q.clone(), capacity));
        }

        let zero = vec![0.0; n_fragments];
        let base = SlotObjective {
            popularity: belief,
            q_current: &zero,
            log_terms_mbs: &geo.log_mbs_active,
            log_terms_vehicle: &geo.log_vehicle,
            n_users: self.n_users,
            rates: self.cfg.rates.with_xi(self.cfg.contact_rate()),
            bandwidth_hz: self.cfg.radio.bandwidth_hz,
            energy: self.cfg.energy,
            vehicle_tx_fixed_j: self.vehicle_fixed_energy(),
            backhaul_unit_j: 0.0,
            backhaul_per_served_bit: self.cfg.backhaul_per_served_bit,
            queue_pressure: 0.0,
            eta: 0.0,
            v_param: self.cfg.v_param,
            capacity_bits: capacity,
            fragment_size_bits: fragment_bits,
        };
        let active = base.clone();
        let idle = SlotObjective {
            log_terms_mbs: &geo.log_mbs_clean,
            ..base
        };

        let mut candidates = Vec::with_capacity(placements.len());
        for placement in &placements {
            let mass: f64 = placement
                .q
                .iter()
                .zip(belief)
                .map(|(q, p)| q * p)
                .sum();
            let obj = if mass > 0.0 { &active } else { &idle };
            let (r_m, r_v) = obj.throughput_at_mass(mass)?;
            let mut energy = mbs_energy(r_m, &self.cfg.energy);
            let (_, cache_j, _) = vehicle_energy(r_v, 0.0, 0.0, &self.cfg.energy);
            energy += cache_j;
            if self.cfg.backhaul_per_served_bit {
                energy += r_v * self.cfg.energy.mbs_rate_energy;
            }
            if mass > 0.0 {
                energy += self.vehicle_fixed_energy();
            }
            candidates.push((energy, r_m + r_v));
        }
        if candidates.iter().all(|&(_, r)| r <= 0.0) {
            return Ok(CacheVector::empty(n_fragments, capacity));
        }
        let solution = dinkelbach_solve_static(&DiscreteSpace { candidates }, 1e-9, 100)?;
        Ok(placements[solution.point].clone())
    }

    fn vehicle_fixed_energy(&self) -> f64 {
        if self.n_caching() > 0 {
            self.cfg.energy.amplifier_factor
                * self.cfg.radio.p_veh_tx_w
                * self.cfg.energy.slot_seconds
        } else {
            0.0
        }
    }

    fn sample_utilization(&mut self) {
        let window = self.cfg.utilization_window() as i64;
        let n_fragments = self.catalog.n_fragments();
        let horizon = self.slot as i64 - window;
        let mut held = 0u64;
        let mut fresh = 0u64;
        for (cv, cache) in self.caches.iter().enumerate() {
            for (j, &has) in cache.iter().enumerate() {
                if has {
                    held += 1;
                    if self.last_access[cv * n_fragments + j] > horizon {
                        fresh += 1;
                    }
                }
            }
        }
        if held > 0 {
            self.util_samples.push(fresh as f64 / held as f64);
        }
    }

    /// Run one slot under the active placement, then let the policy pick the
    /// placement for the next slot.
    pub fn run_slot(&mut self) -> Result<SlotLedger> {
        let cfg = self.cfg.clone();
        let n_users = self.n_users;
        let dt = cfg.energy.slot_seconds;

        let mut rng_geo = self.rng_geometry.clone();
        let geo = self.draw_geometry(&mut rng_geo)?;
        self.rng_geometry = rng_geo;

        let tier_active =
            self.n_caching() > 0 && self.q_current.cached_mass(self.catalog.popularity()) > 0.0;

        // events under the active placement
        let mut user_delays = vec![0.0f64; n_users as usize];
        let mut user_counts = vec![0u32; n_users as usize];
        let (arrivals, veh, mbs) = self.run_events(&mut user_delays, &mut user_counts);
        self.arrivals_total += arrivals;
        self.vehicle_served += veh;
        self.mbs_served += mbs;

        // analytical throughput and energy ledger for the slot
        let xi_eff = self.xi_effective();
        let split = service_split(&cfg.rates.with_xi(xi_eff))?;
        let pairs = if tier_active {
            &geo.pairs_active
        } else {
            &geo.pairs_clean
        };
        let tput = slot_throughput(
            &self.q_current,
            &self.catalog,
            &split,
            n_users,
            pairs,
            &cfg.radio,
            dt,
        )?;
        let zero_cache = CacheVector::empty(self.catalog.n_fragments(), cfg.capacity_bits());
        let split_baseline = service_split(&cfg.rates.with_xi(0.0))?;
        let baseline = slot_throughput(
            &zero_cache,
            &self.catalog,
            &split_baseline,
            n_users,
            &geo.pairs_clean,
            &cfg.radio,
            dt,
        )?;

        let tx_power = if tier_active { cfg.radio.p_veh_tx_w } else { 0.0 };
        let backhauled = if cfg.backhaul_per_served_bit {
            tput.vehicle_bits
        } else {
            std::mem::take(&mut self.pending_backhaul_bits)
        };
        let mbs_j = mbs_energy(tput.mbs_bits, &cfg.energy);
        let (tx_j, cache_j, backhaul_j) =
            vehicle_energy(tput.vehicle_bits, backhauled, tx_power, &cfg.energy);
        let ledger = total_energy(mbs_j, tx_j, cache_j, backhaul_j);

        self.tracker.update(ledger.total_j, tput.total_bits);
        self.sum_bits += tput.total_bits;
        self.sum_energy_j += ledger.total_j;
        self.sum_baseline_bits += baseline.total_bits;

        // queue updates from this slot's delays
        let analytic_delay = self.analytic_delay();
        let delays: Vec<f64> = if cfg.empirical_delays {
            user_delays
                .iter()
                .zip(&user_counts)
                .map(|(&sum, &cnt)| if cnt > 0 { sum / cnt as f64 } else { analytic_delay })
                .collect()
        } else {
            vec![analytic_delay; n_users as usize]
        };
        let excess_sq = self.queues.update(&delays)?;
        self.excess_sq_half_sum += 0.5 * excess_sq;

        // policy: placement for the next slot
        let q_snapshot = self.q_current.q.clone();
        let popularity_snapshot = self.catalog.popularity().to_vec();
        let contact_rates = cfg.rates.with_xi(cfg.contact_rate());
        let objective = SlotObjective {
            popularity: &popularity_snapshot,
            q_current: &q_snapshot,
            log_terms_mbs: &geo.log_mbs_active,
            log_terms_vehicle: &geo.log_vehicle,
            n_users,
            rates: contact_rates,
            bandwidth_hz: cfg.radio.bandwidth_hz,
            energy: cfg.energy,
            vehicle_tx_fixed_j: self.vehicle_fixed_energy(),
            // one push persists for roughly a refresh window; price its
            // energy per slot accordingly
            backhaul_unit_j: self.n_caching() as f64
                * self.catalog.fragment_size_bits()
                * cfg.energy.mbs_rate_energy
                / cfg.utilization_window() as f64,
            backhaul_per_served_bit: cfg.backhaul_per_served_bit,
            queue_pressure: self.queues.sum(),
            eta: self.tracker.eta,
            v_param: cfg.v_param,
            capacity_bits: cfg.capacity_bits(),
            fragment_size_bits: self.catalog.fragment_size_bits(),
        };
        // with nothing cached no vehicle transmits, so zero-mass candidates
        // are costed on the interference-free cellular channel
        let objective_idle = SlotObjective {
            log_terms_mbs: &geo.log_mbs_clean,
            ..objective.clone()
        };
        let cost_of = |q: &[f64]| -> Result<f64> {
            if objective.cached_mass(q) > 0.0 {
                objective.evaluate(q)
            } else {
                objective_idle.evaluate(q)
            }
        };

        let mut objective_value = cost_of(&q_snapshot)?;
        let next_q = match cfg.policy {
            Policy::None => None,
            Policy::Offline => {
                if (self.slot + 1).is_multiple_of(cfg.offline_update_interval_slots) {
                    let belief = self.catalog.popularity().to_vec();
                    Some(self.solve_offline_placement(&belief)?)
                } else {
                    None
                }
            }
            Policy::Online => {
                if self.n_users == 0 || self.n_caching() == 0 {
                    None
                } else {
                    // candidates: linearized solve, keep, popularity fill,
                    // and switch-off; the exact slot objective arbitrates
                    let problem = build_slot_problem(&objective)?;
                    let candidate = solve_slot(&problem)?;
                    let zeros = vec![0.0; self.catalog.n_fragments()];
                    let mut best_cost = objective_value;
                    let mut best: Option<CacheVector> = None;
                    for alt in [&candidate.q, &self.q_popularity_fill.q, &zeros] {
                        let cost = cost_of(alt)?;
                        if cost < best_cost {
                            best_cost = cost;
                            best = Some(CacheVector::new(alt.clone(), cfg.capacity_bits()));
                        }
                    }
                    objective_value = best_cost;
                    best
                }
            }
        };
        if let Some(q) = next_q {
            self.apply_placement(q);
        }

        let ledger_row = SlotLedger {
            slot: self.slot,
            n_users,
            r_mbs_bits: tput.mbs_bits,
            r_vehicle_bits: tput.vehicle_bits,
            r_total_bits: tput.total_bits,
            r_baseline_bits: baseline.total_bits,
            energy: ledger,
            eta_ee: self.tracker.eta,
            max_backlog: self.queues.max_backlog(),
            objective: objective_value,
            cached_mass: self.q_current.cached_mass(self.catalog.popularity()),
            cached_fragments: self.q_current.q.iter().sum(),
            arrivals,
            vehicle_served: veh,
            mbs_served: mbs,
            pending: self.user_states.iter().map(|s| s.pending.len() as u64).sum(),
            mean_delay_s: {
                let total: u32 = user_counts.iter().sum();
                if total > 0 {
                    Some(user_delays.iter().sum::<f64>() / total as f64)
                } else {
                    None
                }
            },
        };

        self.slot += 1;
        let window = cfg.utilization_window();
        let checkpoint_every = (window / 4).max(1);
        if self.slot >= window && self.slot.is_multiple_of(checkpoint_every) {
            self.sample_utilization();
        }
        if cfg.emit_traces {
            self.traces.push(ledger_row.clone());
        }
        Ok(ledger_row)
    }

    pub fn finish(mut self) -> EpisodeMetrics {
        if self.util_samples.is_empty() {
            self.sample_utilization();
        }
        let terminated = self.vehicle_served + self.mbs_served;
        let pending: u64 = self.user_states.iter().map(|s| s.pending.len() as u64).sum();
        debug_assert_eq!(self.arrivals_total, terminated + pending);

        let occupancy = self.occupancy_l0 + self.occupancy_k1;
        let slots = self.slot.max(1) as f64;
        let b_estimate = self.excess_sq_half_sum / slots;
        let mean_r = self.sum_bits / slots;
        let bound_gap = diagnostics_bound(b_estimate.max(0.0), self.cfg.v_param, mean_r)
            .unwrap_or(0.0);

        EpisodeMetrics {
            eta_ee: self.tracker.eta,
            hit_ratio: if terminated > 0 {
                self.vehicle_served as f64 / terminated as f64
            } else {
                0.0
            },
            cache_utilization: if self.util_samples.is_empty() {
                0.0
            } else {
                self.util_samples.iter().sum::<f64>() / self.util_samples.len() as f64
            },
            system_gain: if self.sum_baseline_bits > 0.0 {
                (self.sum_bits - self.sum_baseline_bits) / self.sum_baseline_bits
            } else {
                0.0
            },
            mean_delay_s: if self.delay_count > 0 {
                self.delay_sum / self.delay_count as f64
            } else {
                0.0
            },
            max_backlog_over_horizon: self.queues.max_backlog() / slots,
            d_av_s: self.cfg.delay_budget_s(),
            empirical_kappa1: if occupancy > 0.0 {
                self.occupancy_k1 / occupancy
            } else {
                0.0
            },
            bound_gap,
            total_bits: self.sum_bits,
            total_energy_j: self.sum_energy_j,
            baseline_bits: self.sum_baseline_bits,
            requests_total: self.arrivals_total,
            requests_vehicle: self.vehicle_served,
            requests_mbs: self.mbs_served,
            n_users: self.n_users,
            n_vehicles: self.n_vehicles,
            n_caching_vehicles: self.n_caching() as u32,
            traces: std::mem::take(&mut self.traces),
        }
    }
}

/// Run a full episode: `n_slots` iterations of observe, decide, simulate,
/// update. Deterministic given `(config, rng_seed)`.
pub fn run_episode(config: &ScenarioConfig) -> Result<EpisodeMetrics> {
    let mut runner = EpisodeRunner::new(config)?;
    for _ in 0..config.n_slots {
        runner.run_slot()?;
    }
    Ok(runner.finish())
}

/// Run many scenarios in parallel, one row per input, capturing per-row
/// errors instead of aborting the batch.
pub fn sweep(configs: &[ScenarioConfig]) -> Vec<Result<EpisodeMetrics>> {
    configs.par_iter().map(run_episode).collect()
}
