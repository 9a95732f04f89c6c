//! Two-mode contact/queue model of how user requests get served.
//!
//! Each user runs a continuous-time process over states `(K, J)`: `J` pending
//! requests, and a mode flag `K` that is `1` while a caching vehicle is
//! serving the queue and `0` while the user waits. Requests arrive at rate
//! `lambda`. In mode 0 each pending request abandons to the cellular network
//! at rate `omega` (its tolerance expires), and a useful vehicle contact
//! arrives at rate `xi`, switching the user to mode 1. In mode 1 the vehicle
//! completes requests at rate `nu`; when the queue drains the user returns to
//! mode 0.
//!
//! Transition structure:
//!
//! ```text
//! (0,0)        -> (0,1)   rate lambda
//! (0,j), j>=1  -> (0,j+1) rate lambda
//!              -> (0,j-1) rate j*omega   (abandon to cellular)
//!              -> (1,j)   rate xi        (useful contact)
//! (1,j), j>=2  -> (1,j+1) rate lambda
//!              -> (1,j-1) rate nu        (vehicle service)
//! (1,1)        -> (1,2)   rate lambda
//!              -> (0,0)   rate nu        (queue drains, mode resets)
//! ```
//!
//! The service split between vehicles and the cellular network is derived
//! from two stationary quantities: the mean queue length in mode 0,
//! `E[L0] = sum_j j*P_{0j}`, and the mode-1 probability mass
//! `E[L1] = sum_j P_{1j}` (the generating-function values `G0'(1)` and
//! `G1(1)`). Closed forms exist under the stability condition and are the
//! production path; [`solve_truncated_chain`] is the numerical oracle used by
//! tests and diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Tail-mass threshold used by the auto-grown truncated solve.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;

/// Rate tuple driving the vehicle-user contact model.
///
/// `xi` may be zero: with nothing useful cached there are no useful contacts
/// and the model degenerates to cellular-only service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionRates {
    /// Request arrival rate per user (requests/s, Poisson).
    pub lambda: f64,
    /// Vehicle service rate (requests/s).
    pub nu: f64,
    /// Useful inter-meeting rate between a user and caching vehicles (1/s).
    pub xi: f64,
    /// Tolerance-expiry rate (1/s); `1/omega` is the mean tolerance time.
    pub omega: f64,
}

impl Default for InteractionRates {
    /// Scenario defaults: one request per second per user, vehicle service at
    /// 2.5 requests/s, a base inter-meeting rate of 120 contacts/s with the
    /// whole vehicle fleet, and a one-second mean tolerance.
    fn default() -> Self {
        Self {
            lambda: 1.0,
            nu: 2.5,
            xi: 120.0,
            omega: 1.0,
        }
    }
}

impl InteractionRates {
    pub fn new(lambda: f64, nu: f64, xi: f64, omega: f64) -> Result<Self> {
        let rates = Self { lambda, nu, xi, omega };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::Domain(format!("rate {name} must be positive and finite, got {v}")));
            }
            Ok(())
        };
        pos("lambda", self.lambda)?;
        pos("nu", self.nu)?;
        pos("omega", self.omega)?;
        if !self.xi.is_finite() || self.xi < 0.0 {
            return Err(ModelError::Domain(format!(
                "rate xi must be nonnegative and finite, got {}",
                self.xi
            )));
        }
        Ok(())
    }

    /// Same rates with the meeting rate replaced (used for the placement
    /// coupling, where `xi` varies with the cache vector).
    pub fn with_xi(&self, xi: f64) -> Self {
        Self { xi, ..*self }
    }

    /// Denominator of the closed forms: `nu*omega + nu*xi - lambda*omega`.
    pub fn closed_form_denominator(&self) -> f64 {
        self.nu * self.omega + self.nu * self.xi - self.lambda * self.omega
    }

    pub fn is_stable(&self) -> bool {
        self.lambda < self.nu && self.closed_form_denominator() > 0.0
    }

    pub fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(ModelError::StabilityViolation {
                lambda: self.lambda,
                nu: self.nu,
                xi: self.xi,
                omega: self.omega,
            })
        }
    }
}

/// Closed-form split weights of the stationary process:
/// `E[L0] = (lambda*nu - lambda^2) / d` and `E[L1] = xi*lambda / d`
/// with `d = nu*omega + nu*xi - lambda*omega`.
pub fn expected_queue_lengths(rates: &InteractionRates) -> Result<(f64, f64)> {
    rates.validate()?;
    rates.require_stable()?;
    let d = rates.closed_form_denominator();
    let e_l0 = (rates.lambda * rates.nu - rates.lambda * rates.lambda) / d;
    let e_l1 = rates.xi * rates.lambda / d;
    Ok((e_l0, e_l1))
}

/// Stationary probabilities that a request is handled by the cellular network
/// (`kappa0`) or by caching vehicles (`kappa1`), plus the split weights they
/// are derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceSplit {
    pub e_l0: f64,
    pub e_l1: f64,
    pub kappa0: f64,
    pub kappa1: f64,
}

/// `kappa1 = E[L1] / (E[L0] + E[L1])`, which simplifies to
/// `xi / (xi + nu - lambda)`; `omega` cancels out of the ratio.
pub fn service_split(rates: &InteractionRates) -> Result<ServiceSplit> {
    let (e_l0, e_l1) = expected_queue_lengths(rates)?;
    let total = e_l0 + e_l1;
    let kappa1 = if total > 0.0 { e_l1 / total } else { 0.0 };
    Ok(ServiceSplit {
        e_l0,
        e_l1,
        kappa0: 1.0 - kappa1,
        kappa1,
    })
}

/// Binomial probability that exactly `n` of `n_users` users are on the
/// `kappa`-side of the split: `C(N, n) * kappa^n * (1-kappa)^(N-n)`.
pub fn served_count_pmf(n_users: u32, kappa: f64, n: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) || !kappa.is_finite() {
        return Err(ModelError::Domain(format!("kappa must lie in [0,1], got {kappa}")));
    }
    if n > n_users {
        return Err(ModelError::Domain(format!("n={n} exceeds n_users={n_users}")));
    }
    if kappa == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if kappa == 1.0 {
        return Ok(if n == n_users { 1.0 } else { 0.0 });
    }
    // Interleave the success and failure factors with the binomial ratio so
    // the running product never overflows or underflows.
    let n_u = n_users as u64;
    let k = n as u64;
    let mut p = 1.0;
    let mut applied_fail = 0u64;
    let total_fail = n_u - k;
    for i in 1..=k {
        p *= (n_u - k + i) as f64 / i as f64 * kappa;
        while p > 1.0 && applied_fail < total_fail {
            p *= 1.0 - kappa;
            applied_fail += 1;
        }
    }
    for _ in applied_fail..total_fail {
        p *= 1.0 - kappa;
    }
    Ok(p)
}

/// Full pmf vector over `n = 0..=n_users`, computed by the two-sided
/// multiplicative recurrence.
pub fn served_count_pmf_vec(n_users: u32, kappa: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&kappa) || !kappa.is_finite() {
        return Err(ModelError::Domain(format!("kappa must lie in [0,1], got {kappa}")));
    }
    let n = n_users as usize;
    let mut pmf = vec![0.0; n + 1];
    if kappa == 0.0 {
        pmf[0] = 1.0;
        return Ok(pmf);
    }
    if kappa == 1.0 {
        pmf[n] = 1.0;
        return Ok(pmf);
    }
    let p0 = (1.0 - kappa).powi(n_users as i32);
    if p0 > 1e-290 {
        pmf[0] = p0;
        let ratio = kappa / (1.0 - kappa);
        for i in 0..n {
            pmf[i + 1] = pmf[i] * ((n - i) as f64 / (i + 1) as f64) * ratio;
        }
    } else {
        // Start from the high end when the low end underflows.
        pmf[n] = kappa.powi(n_users as i32);
        let ratio = (1.0 - kappa) / kappa;
        for i in (0..n).rev() {
            pmf[i] = pmf[i + 1] * ((i + 1) as f64 / (n - i) as f64) * ratio;
        }
    }
    Ok(pmf)
}

/// Popularity-weighted coupling between a cache vector and the meeting rate:
/// `xi_eff = xi_base * cache_proportion * sum_j p_j * q_j`.
///
/// A request meets a useful vehicle at a rate proportional to how likely a
/// random caching vehicle holds the requested fragment.
pub fn effective_meeting_rate(
    xi_base: f64,
    q: &[f64],
    popularity: &[f64],
    cache_proportion: f64,
) -> Result<f64> {
    if q.len() != popularity.len() {
        return Err(ModelError::DimensionMismatch {
            left: q.len(),
            right: popularity.len(),
        });
    }
    if !(0.0..=1.0).contains(&cache_proportion) {
        return Err(ModelError::Domain(format!(
            "cache_proportion must lie in [0,1], got {cache_proportion}"
        )));
    }
    if !xi_base.is_finite() || xi_base < 0.0 {
        return Err(ModelError::Domain(format!("xi_base must be nonnegative, got {xi_base}")));
    }
    let mass: f64 = q.iter().zip(popularity).map(|(q, p)| q * p).sum();
    Ok(xi_base * cache_proportion * mass)
}

/// Stationary distribution of the truncated two-mode chain.
///
/// `stationary[k][j]` is `P{K=k, J=j}` for `j = 0..=j_max`; `stationary[1][0]`
/// is identically zero (mode 1 exists only with at least one pending request).
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    pub j_max: usize,
    pub stationary: [Vec<f64>; 2],
}

impl TruncatedChain {
    /// `sum_j j * P_{0j}`, the mode-0 split weight.
    pub fn e_l0(&self) -> f64 {
        self.stationary[0]
            .iter()
            .enumerate()
            .map(|(j, p)| j as f64 * p)
            .sum()
    }

    /// `sum_j P_{1j}`, the mode-1 split weight.
    pub fn e_l1(&self) -> f64 {
        self.stationary[1].iter().sum()
    }

    pub fn kappa1(&self) -> f64 {
        let total = self.e_l0() + self.e_l1();
        if total > 0.0 {
            self.e_l1() / total
        } else {
            0.0
        }
    }

    /// Probability mass sitting at the truncation boundary.
    pub fn tail_mass(&self) -> f64 {
        self.stationary[0][self.j_max] + self.stationary[1][self.j_max]
    }

    /// Largest absolute residual of the interior balance equations; the
    /// stationary solve should drive this to solver precision.
    pub fn max_balance_residual(&self, rates: &InteractionRates) -> f64 {
        let (l, n, x, w) = (rates.lambda, rates.nu, rates.xi, rates.omega);
        let p0 = &self.stationary[0];
        let p1 = &self.stationary[1];
        let mut worst: f64 = (l * p0[0] - (n * p1[1] + w * p0[1])).abs();
        for j in 1..self.j_max {
            let r0 = (l + j as f64 * w + x) * p0[j] - (l * p0[j - 1] + (j + 1) as f64 * w * p0[j + 1]);
            worst = worst.max(r0.abs());
        }
        if self.j_max >= 2 {
            let r1 = (l + n) * p1[1] - (n * p1[2] + x * p0[1]);
            worst = worst.max(r1.abs());
            for j in 2..self.j_max {
                let r = (l + n) * p1[j] - (l * p1[j - 1] + n * p1[j + 1] + x * p0[j]);
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Solve the stationary distribution of the chain truncated at `j_max`
/// (arrivals at the boundary are dropped).
///
/// Fails with [`ModelError::TruncationInsufficient`] when the boundary mass
/// exceeds [`TAIL_MASS_LIMIT`]; grow `j_max` and retry, or use
/// [`solve_truncated_chain_auto`].
pub fn solve_truncated_chain(rates: &InteractionRates, j_max: usize) -> Result<TruncatedChain> {
    rates.validate()?;
    if j_max < 10 {
        return Err(ModelError::Domain(format!("j_max must be at least 10, got {j_max}")));
    }
    let (l, nu, xi, om) = (rates.lambda, rates.nu, rates.xi, rates.omega);
    // State packing: 0..=j_max are (0,j); j_max+1.. are (1,1)..(1,j_max).
    let n0 = j_max + 1;
    let dim = n0 + j_max;
    let i0 = |j: usize| j;
    let i1 = |j: usize| n0 + j - 1;

    // A = Q^T with the last balance equation replaced by normalization.
    let mut a = vec![0.0f64; dim * dim];
    let mut add = |from: usize, to: usize, rate: f64| {
        a[to * dim + from] += rate;
        a[from * dim + from] -= rate;
    };
    add(i0(0), i0(1), l);
    for j in 1..=j_max {
        if j < j_max {
            add(i0(j), i0(j + 1), l);
        }
        add(i0(j), i0(j - 1), j as f64 * om);
        add(i0(j), i1(j), xi);
    }
    for j in 1..=j_max {
        if j < j_max {
            add(i1(j), i1(j + 1), l);
        }
        if j >= 2 {
            add(i1(j), i1(j - 1), nu);
        } else {
            add(i1(1), i0(0), nu);
        }
    }
    for col in 0..dim {
        a[(dim - 1) * dim + col] = 1.0;
    }
    let mut b = vec![0.0f64; dim];
    b[dim - 1] = 1.0;

    let pi = solve_dense(&mut a, &mut b, dim)?;

    let mut stationary = [vec![0.0; j_max + 1], vec![0.0; j_max + 1]];
    stationary[0].copy_from_slice(&pi[..n0]);
    for j in 1..=j_max {
        stationary[1][j] = pi[i1(j)];
    }
    let chain = TruncatedChain { j_max, stationary };
    let tail = chain.tail_mass();
    if tail.abs() >= TAIL_MASS_LIMIT {
        return Err(ModelError::TruncationInsufficient {
            j_max,
            tail,
            limit: TAIL_MASS_LIMIT,
        });
    }
    Ok(chain)
}

/// Grow `j_max` geometrically until the boundary mass is negligible.
/// The chain's queue tail decays at least geometrically, so this converges in
/// a handful of doublings.
pub fn solve_truncated_chain_auto(rates: &InteractionRates) -> Result<TruncatedChain> {
    let mut j_max = 16;
    loop {
        match solve_truncated_chain(rates, j_max) {
            Ok(chain) => return Ok(chain),
            Err(ModelError::TruncationInsufficient { .. }) if j_max < 4096 => {
                j_max *= 2;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Dense Gaussian elimination with partial pivoting; `a` is row-major
/// `n x n`, consumed along with `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < 1e-300 {
            return Err(ModelError::SingularSystem);
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in (col + 1)..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}
