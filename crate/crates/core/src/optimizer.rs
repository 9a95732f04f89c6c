//! Online caching decision engine: virtual delay queues, the running
//! energy-per-bit tracker, the per-slot drift-plus-penalty problem, and the
//! ratio-minimization iteration used by the static (offline) baseline.
//!
//! Each slot the controller minimizes
//!
//! ```text
//! sum_n H_n(t) * D_n(q)  +  V * ( P_tot(q) - eta(t) * R_tot(q) )
//! ```
//!
//! over feasible placements `q`. The objective depends on `q` only through
//! the cached popularity mass `s = sum_j p_j q_j` (plus separable backhaul
//! and activation terms), so a first-order expansion at the current placement
//! yields exact linear coefficients and the constrained minimization reduces
//! to a fractional knapsack.

use serde::{Deserialize, Serialize};

use crate::catalog::CacheVector;
use crate::energy::{mbs_energy, vehicle_energy, EnergyParams};
use crate::error::{ModelError, Result};
use crate::interaction::{served_count_pmf_vec, service_split, InteractionRates};

/// Per-user virtual queues enforcing the time-average delay budget.
///
/// Backlog `H_n` accumulates delay excess over `d_av`; mean-rate stability of
/// these queues is what guarantees the long-run delay constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueues {
    backlogs: Vec<f64>,
    pub d_av: f64,
}

impl VirtualQueues {
    pub fn new(n_users: usize, d_av: f64) -> Self {
        Self {
            backlogs: vec![0.0; n_users],
            d_av,
        }
    }

    pub fn backlogs(&self) -> &[f64] {
        &self.backlogs
    }

    pub fn sum(&self) -> f64 {
        self.backlogs.iter().sum()
    }

    pub fn max_backlog(&self) -> f64 {
        self.backlogs.iter().cloned().fold(0.0, f64::max)
    }

    /// Apply one slot of measured delays; returns the sum of squared excesses
    /// `sum_n e_n^2` for bound diagnostics.
    pub fn update(&mut self, delays: &[f64]) -> Result<f64> {
        if delays.len() != self.backlogs.len() {
            return Err(ModelError::DimensionMismatch {
                left: delays.len(),
                right: self.backlogs.len(),
            });
        }
        let mut sq = 0.0;
        for (h, &d) in self.backlogs.iter_mut().zip(delays) {
            let excess = d - self.d_av;
            sq += excess * excess;
            *h = update_virtual_queue(*h, d, self.d_av);
        }
        Ok(sq)
    }
}

/// One-step queue recursion `H(t+1) = max(H(t) + D(t) - D_av, 0)`.
pub fn update_virtual_queue(h_n: f64, d_n: f64, d_av: f64) -> f64 {
    (h_n + d_n - d_av).max(0.0)
}

/// Running energy-per-bit of the whole run: `eta = sum P / sum R`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyTracker {
    pub cumulative_energy_j: f64,
    pub cumulative_bits: f64,
    pub eta: f64,
}

impl EfficiencyTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one slot into the cumulative ratio. While no bits have been
    /// delivered the tracker keeps its initial value.
    pub fn update(&mut self, slot_energy_j: f64, slot_bits: f64) {
        self.cumulative_energy_j += slot_energy_j;
        self.cumulative_bits += slot_bits;
        if self.cumulative_bits > 0.0 {
            self.eta = self.cumulative_energy_j / self.cumulative_bits;
        }
    }
}

/// Frozen snapshot of everything the slot objective needs.
///
/// `rates.xi` holds the contact rate with caching vehicles (base inter-meeting
/// rate times cache proportion); the effective meeting rate at cached mass `s`
/// is `rates.xi * s`.
#[derive(Debug, Clone)]
pub struct SlotObjective<'a> {
    pub popularity: &'a [f64],
    pub q_current: &'a [f64],
    /// `log2(1 + gamma_k)` per user for the cellular tier.
    pub log_terms_mbs: &'a [f64],
    /// `log2(1 + gamma_k)` per user for the vehicle tier.
    pub log_terms_vehicle: &'a [f64],
    pub n_users: u32,
    pub rates: InteractionRates,
    pub bandwidth_hz: f64,
    pub energy: EnergyParams,
    /// Flat vehicle-tier transport energy per slot when anything is cached.
    pub vehicle_tx_fixed_j: f64,
    /// Backhaul energy per unit increase of one `q_j`, amortized to a
    /// per-slot figure (a push is paid once but its placement persists for
    /// many slots; the ledger books the real push separately).
    pub backhaul_unit_j: f64,
    /// Charge backhaul on served vehicle bits instead of cache updates.
    pub backhaul_per_served_bit: bool,
    /// Sum of virtual-queue backlogs `sum_n H_n`.
    pub queue_pressure: f64,
    pub eta: f64,
    pub v_param: f64,
    pub capacity_bits: f64,
    pub fragment_size_bits: f64,
}

impl SlotObjective<'_> {
    pub fn cached_mass(&self, q: &[f64]) -> f64 {
        q.iter().zip(self.popularity).map(|(q, p)| q * p).sum()
    }

    fn check(&self) -> Result<()> {
        if self.popularity.is_empty() {
            return Err(ModelError::MissingState("popularity vector"));
        }
        if self.q_current.len() != self.popularity.len() {
            return Err(ModelError::MissingState("current placement"));
        }
        if self.log_terms_mbs.len() != self.n_users as usize
            || self.log_terms_vehicle.len() != self.n_users as usize
        {
            return Err(ModelError::MissingState("per-user SINR log terms"));
        }
        Ok(())
    }

    /// Expected system time at cached mass `s` (Little's law on the contact
    /// model): `D = (nu - lambda + xi_eff) / (nu*omega + nu*xi_eff - lambda*omega)`.
    pub fn delay_at_mass(&self, s: f64) -> Result<f64> {
        let rates = self.rates.with_xi(self.rates.xi * s);
        rates.require_stable()?;
        Ok((rates.nu - rates.lambda + rates.xi) / rates.closed_form_denominator())
    }

    /// Expected slot throughput `(r_mbs_bits, r_vehicle_bits)` at mass `s`.
    pub fn throughput_at_mass(&self, s: f64) -> Result<(f64, f64)> {
        let split = service_split(&self.rates.with_xi(self.rates.xi * s))?;
        let pmf_m = served_count_pmf_vec(self.n_users, split.kappa0)?;
        let pmf_v = served_count_pmf_vec(self.n_users, split.kappa1)?;
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for k in 1..=self.n_users as usize {
            m0 += k as f64 * pmf_m[k] * self.log_terms_mbs[k - 1];
            m1 += k as f64 * pmf_v[k] * self.log_terms_vehicle[k - 1];
        }
        let scale = self.bandwidth_hz * self.energy.slot_seconds;
        Ok((scale * m0 * (1.0 - s), scale * m1 * s))
    }

    /// The mass-smooth part of the objective (everything except activation
    /// and cache-update backhaul).
    fn smooth_cost(&self, s: f64) -> Result<f64> {
        let (r_m, r_v) = self.throughput_at_mass(s)?;
        let delay = self.delay_at_mass(s)?;
        let mut energy = mbs_energy(r_m, &self.energy);
        let (_, cache_j, _) = vehicle_energy(r_v, 0.0, 0.0, &self.energy);
        energy += cache_j;
        if self.backhaul_per_served_bit {
            energy += r_v * self.energy.mbs_rate_energy;
        }
        Ok(self.queue_pressure * delay + self.v_param * (energy - self.eta * (r_m + r_v)))
    }

    /// Full objective value at a candidate placement, including the vehicle
    /// activation charge and the backhaul for raising entries above the
    /// current placement.
    pub fn evaluate(&self, q: &[f64]) -> Result<f64> {
        self.check()?;
        if q.len() != self.popularity.len() {
            return Err(ModelError::DimensionMismatch {
                left: q.len(),
                right: self.popularity.len(),
            });
        }
        let s = self.cached_mass(q);
        let mut cost = self.smooth_cost(s)?;
        if s > 0.0 {
            cost += self.v_param * self.vehicle_tx_fixed_j;
        }
        if !self.backhaul_per_served_bit {
            let added: f64 = q
                .iter()
                .zip(self.q_current)
                .map(|(new, cur)| (new - cur).max(0.0))
                .sum();
            cost += self.v_param * added * self.backhaul_unit_j;
        }
        Ok(cost)
    }
}

/// Linearized per-slot problem: minimize `sum_j c_j q_j` subject to the box
/// and capacity constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotProblem {
    pub linear_coeffs: Vec<f64>,
    pub capacity_bits: f64,
    pub fragment_size_bits: f64,
    pub v_param: f64,
}

/// First-order expansion of the slot objective at the current placement.
///
/// The smooth part depends on `q` only through the cached mass, so its
/// gradient is `p_j * g'(s0)`; raising `q_j` additionally pays backhaul for
/// the not-yet-cached portion of the fragment.
pub fn build_slot_problem(objective: &SlotObjective) -> Result<SlotProblem> {
    objective.check()?;
    let s0 = objective.cached_mass(objective.q_current);
    let eps = 1e-6;
    let lo = (s0 - eps).max(0.0);
    let hi = (s0 + eps).min(1.0);
    if hi <= lo {
        return Err(ModelError::MissingState("degenerate mass interval"));
    }
    let slope = (objective.smooth_cost(hi)? - objective.smooth_cost(lo)?) / (hi - lo);
    let coeffs = objective
        .popularity
        .iter()
        .zip(objective.q_current)
        .map(|(&p, &q_cur)| {
            let mut c = p * slope;
            // raising q_j pays the (amortized) push cost; fully cached
            // fragments have no add direction left
            if !objective.backhaul_per_served_bit && q_cur < 1.0 {
                c += objective.v_param * objective.backhaul_unit_j;
            }
            c
        })
        .collect();
    Ok(SlotProblem {
        linear_coeffs: coeffs,
        capacity_bits: objective.capacity_bits,
        fragment_size_bits: objective.fragment_size_bits,
        v_param: objective.v_param,
    })
}

/// Exact minimizer of the linear slot problem over
/// `{ 0 <= q_j <= 1, sum_j q_j * B <= S_cv }`: fill the most negative
/// coefficients first, fractionally at the capacity margin, and leave
/// `q_j = 0` wherever `c_j >= 0`. Ties break toward the lower index.
pub fn solve_slot(problem: &SlotProblem) -> Result<CacheVector> {
    if problem.capacity_bits.is_nan() || problem.capacity_bits <= 0.0 {
        return Err(ModelError::InfeasibleCapacity(problem.capacity_bits));
    }
    if problem.fragment_size_bits.is_nan() || problem.fragment_size_bits <= 0.0 {
        return Err(ModelError::Domain(format!(
            "fragment size must be positive, got {}",
            problem.fragment_size_bits
        )));
    }
    let n = problem.linear_coeffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        problem.linear_coeffs[a]
            .partial_cmp(&problem.linear_coeffs[b])
            .expect("coefficients must not be NaN")
            .then(a.cmp(&b))
    });
    let mut q = vec![0.0; n];
    let mut remaining = problem.capacity_bits;
    for idx in order {
        if problem.linear_coeffs[idx] >= 0.0 || remaining <= 0.0 {
            break;
        }
        let take = (remaining / problem.fragment_size_bits).min(1.0);
        q[idx] = take;
        remaining -= take * problem.fragment_size_bits;
    }
    Ok(CacheVector::new(q, problem.capacity_bits))
}

/// A feasible set over which `energy - eta * throughput` can be minimized
/// exactly; the hook the ratio iteration drives.
pub trait CandidateSpace {
    type Point: Clone;

    /// Return the minimizer of `energy - eta * throughput` together with its
    /// energy and throughput.
    fn minimize_linear(&self, eta: f64) -> (Self::Point, f64, f64);
}

/// Finite candidate set given by explicit `(energy, throughput)` pairs.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    pub candidates: Vec<(f64, f64)>,
}

impl CandidateSpace for DiscreteSpace {
    type Point = usize;

    fn minimize_linear(&self, eta: f64) -> (usize, f64, f64) {
        assert!(!self.candidates.is_empty(), "empty candidate space");
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (i, &(p, r)) in self.candidates.iter().enumerate() {
            let val = p - eta * r;
            if val < best_val {
                best_val = val;
                best = i;
            }
        }
        let (p, r) = self.candidates[best];
        (best, p, r)
    }
}

/// Result of the ratio-minimization iteration.
#[derive(Debug, Clone)]
pub struct DinkelbachSolution<P> {
    pub point: P,
    pub eta: f64,
    /// Number of eta updates performed.
    pub iterations: usize,
    /// Terminal `|P - eta*R|`.
    pub residual: f64,
    /// Successive eta iterates (nonincreasing).
    pub eta_trace: Vec<f64>,
}

/// Minimize `energy/throughput` by iterating
/// `eta_{k+1} = P(q_k) / R(q_k)` where `q_k` minimizes `P - eta_k R`,
/// stopping when `|P(q_k) - eta_k R(q_k)| < tol * R(q_k)`.
///
/// The iterate sequence is nonincreasing; failing to converge within
/// `max_iterations` signals a modeling error since the iteration converges
/// superlinearly for this problem class.
pub fn dinkelbach_solve_static<S: CandidateSpace>(
    space: &S,
    tol: f64,
    max_iterations: usize,
) -> Result<DinkelbachSolution<S::Point>> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(ModelError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut eta = 0.0;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let (point, p, r) = space.minimize_linear(eta);
        if r.is_nan() || r <= 0.0 {
            return Err(ModelError::Domain(format!(
                "throughput must be positive on the feasible set, got {r}"
            )));
        }
        residual = p - eta * r;
        if residual.abs() < tol * r {
            return Ok(DinkelbachSolution {
                point,
                eta: p / r,
                iterations: trace.len(),
                residual: residual.abs(),
                eta_trace: trace,
            });
        }
        let next = p / r;
        if let Some(&prev) = trace.last() {
            debug_assert!(
                next <= prev + 1e-12 * prev.abs().max(1.0),
                "eta iterates must be nonincreasing: {next} after {prev}"
            );
        }
        trace.push(next);
        eta = next;
    }
    Err(ModelError::NonConvergence {
        max_iterations,
        residual: residual.abs(),
    })
}

/// Optimality-gap term of the drift-plus-penalty bound: `B / (V * E{R*})`.
/// Reported next to the measured efficiency for bound-consistency checks.
pub fn diagnostics_bound(b_estimate: f64, v: f64, r_star_estimate: f64) -> Result<f64> {
    if v.is_nan() || v <= 0.0 {
        return Err(ModelError::Domain(format!("V must be positive, got {v}")));
    }
    if r_star_estimate.is_nan() || r_star_estimate <= 0.0 {
        return Err(ModelError::Domain(format!(
            "throughput estimate must be positive, got {r_star_estimate}"
        )));
    }
    if b_estimate < 0.0 {
        return Err(ModelError::Domain(format!(
            "drift constant must be nonnegative, got {b_estimate}"
        )));
    }
    Ok(b_estimate / (v * r_star_estimate))
}
