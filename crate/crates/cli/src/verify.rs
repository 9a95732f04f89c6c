//! Named verification checks: oracle comparisons, trend assertions, and
//! bound diagnostics, driven by an expectations file.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use vecache::{
    expected_queue_lengths, run_episode, served_count_pmf_vec, service_split,
    solve_truncated_chain_auto, InteractionRates, Policy, ScenarioConfig,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Closed-form vehicle-service probability against the truncated-chain
    /// stationary solve.
    KappaClosedForm {
        name: Option<String>,
        lambda: f64,
        nu: f64,
        xi: f64,
        omega: f64,
        tol: f64,
    },
    /// Closed-form split weights against the truncated-chain moments
    /// (relative error).
    ChainMoments {
        name: Option<String>,
        lambda: f64,
        nu: f64,
        xi: f64,
        omega: f64,
        tol: f64,
    },
    /// Binomial service-count pmf sums to one.
    PmfNormalization {
        name: Option<String>,
        n_users: u32,
        kappa: f64,
        tol: f64,
    },
    /// Measured energy per bit is nonincreasing in the trade-off weight V.
    EtaNonincreasingInV {
        name: Option<String>,
        v_values: Vec<f64>,
        seeds: Vec<u64>,
        #[serde(default = "default_rel_slack")]
        rel_slack: f64,
    },
    /// Paired-seed comparison of a policy against a baseline.
    PairedImprovement {
        name: Option<String>,
        metric: String,
        policy: Policy,
        baseline: Policy,
        min_improvement: f64,
        seeds: Vec<u64>,
    },
    /// Online energy per bit stays within the drift-bound gap of the offline
    /// static solution.
    BoundGapConsistency {
        name: Option<String>,
        seeds: Vec<u64>,
        #[serde(default)]
        abs_slack: f64,
    },
    /// Two runs of the base scenario produce identical metrics.
    Determinism { name: Option<String> },
}

fn default_rel_slack() -> f64 {
    0.002
}

#[derive(Debug)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn load_expectations(path: &Path) -> Result<Expectations> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn episode_mean<F: Fn(&vecache::EpisodeMetrics) -> f64>(
    base: &ScenarioConfig,
    policy: Policy,
    v_param: Option<f64>,
    seeds: &[u64],
    metric: F,
) -> Result<f64> {
    let mut acc = 0.0;
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.policy = policy;
        cfg.rng_seed = seed;
        if let Some(v) = v_param {
            cfg.v_param = v;
        }
        let m = run_episode(&cfg).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        acc += metric(&m);
    }
    Ok(acc / seeds.len().max(1) as f64)
}

pub fn run_checks(base: &ScenarioConfig, expectations: &Expectations) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for check in &expectations.checks {
        let report = match check {
            CheckSpec::KappaClosedForm { name, lambda, nu, xi, omega, tol } => {
                let rates = InteractionRates::new(*lambda, *nu, *xi, *omega)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let closed = service_split(&rates)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?
                    .kappa1;
                let chain = solve_truncated_chain_auto(&rates)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?
                    .kappa1();
                let err = (closed - chain).abs();
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "kappa_closed_form".into()),
                    passed: err <= *tol,
                    detail: format!("closed={closed:.9} chain={chain:.9} |err|={err:.3e} tol={tol:.1e}"),
                }
            }
            CheckSpec::ChainMoments { name, lambda, nu, xi, omega, tol } => {
                let rates = InteractionRates::new(*lambda, *nu, *xi, *omega)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let (e0, e1) = expected_queue_lengths(&rates)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let chain = solve_truncated_chain_auto(&rates)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let r0 = (chain.e_l0() - e0).abs() / e0.max(1e-300);
                let r1 = (chain.e_l1() - e1).abs() / e1.max(1e-300);
                let worst = r0.max(r1);
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "chain_moments".into()),
                    passed: worst <= *tol,
                    detail: format!("rel_err_l0={r0:.3e} rel_err_l1={r1:.3e} tol={tol:.1e}"),
                }
            }
            CheckSpec::PmfNormalization { name, n_users, kappa, tol } => {
                let sum: f64 = served_count_pmf_vec(*n_users, *kappa)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?
                    .iter()
                    .sum();
                let err = (sum - 1.0).abs();
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "pmf_normalization".into()),
                    passed: err <= *tol,
                    detail: format!("sum={sum:.15} |err|={err:.3e} tol={tol:.1e}"),
                }
            }
            CheckSpec::EtaNonincreasingInV { name, v_values, seeds, rel_slack } => {
                let mut etas = Vec::with_capacity(v_values.len());
                for &v in v_values {
                    etas.push(episode_mean(base, Policy::Online, Some(v), seeds, |m| m.eta_ee)?);
                }
                let mut passed = true;
                for w in etas.windows(2) {
                    if w[1] > w[0] * (1.0 + rel_slack) {
                        passed = false;
                    }
                }
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "eta_nonincreasing_in_v".into()),
                    passed,
                    detail: format!("etas={etas:?} rel_slack={rel_slack}"),
                }
            }
            CheckSpec::PairedImprovement { name, metric, policy, baseline, min_improvement, seeds } => {
                let pick = |m: &vecache::EpisodeMetrics| -> f64 {
                    match metric.as_str() {
                        "eta_ee" => m.eta_ee,
                        "hit_ratio" => m.hit_ratio,
                        "system_gain" => m.system_gain,
                        "cache_utilization" => m.cache_utilization,
                        _ => f64::NAN,
                    }
                };
                let pol = episode_mean(base, *policy, None, seeds, pick)?;
                let bas = episode_mean(base, *baseline, None, seeds, pick)?;
                // lower is better for energy per bit, higher for the rest
                let improvement = if metric == "eta_ee" {
                    (bas - pol) / bas.abs().max(1e-300)
                } else {
                    pol - bas
                };
                CheckReport {
                    name: name.clone().unwrap_or_else(|| format!("paired_{metric}")),
                    passed: improvement >= *min_improvement && improvement.is_finite(),
                    detail: format!(
                        "{policy}={pol:.6e} {baseline}={bas:.6e} improvement={improvement:.4} min={min_improvement}"
                    ),
                }
            }
            CheckSpec::BoundGapConsistency { name, seeds, abs_slack } => {
                let online = episode_mean(base, Policy::Online, None, seeds, |m| m.eta_ee)?;
                let offline = episode_mean(base, Policy::Offline, None, seeds, |m| m.eta_ee)?;
                let gap = episode_mean(base, Policy::Online, None, seeds, |m| m.bound_gap)?;
                let bound = offline + gap + abs_slack;
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "bound_gap_consistency".into()),
                    passed: online <= bound,
                    detail: format!("online={online:.6e} <= offline+gap+slack={bound:.6e} (gap={gap:.3e})"),
                }
            }
            CheckSpec::Determinism { name } => {
                let a = run_episode(base).map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let b = run_episode(base).map_err(|e| anyhow::anyhow!(e.to_string()))?;
                CheckReport {
                    name: name.clone().unwrap_or_else(|| "determinism".into()),
                    passed: a == b,
                    detail: if a == b {
                        "two runs produced identical metrics".into()
                    } else {
                        "runs diverged".into()
                    },
                }
            }
        };
        reports.push(report);
    }
    Ok(reports)
}
