//! Result emission: `metrics.csv` (one row per grid cell), `summary.csv`
//! (mean and standard error per cell over seeds), per-row trace files, and
//! `manifest.json` (the resolved spec, for byte-exact reruns).
//!
//! Column layouts are a stable contract; floats are written in shortest
//! round-trip form so identical runs produce identical bytes.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use vecache::{EpisodeMetrics, ModelError};

use crate::experiment::{ExperimentSpec, ResolvedRow};

pub const METRIC_COLUMNS: [&str; 19] = [
    "eta_ee",
    "hit_ratio",
    "cache_utilization",
    "system_gain",
    "mean_delay_s",
    "max_backlog_over_horizon",
    "d_av_s",
    "empirical_kappa1",
    "bound_gap",
    "total_bits",
    "total_energy_j",
    "baseline_bits",
    "requests_total",
    "requests_vehicle",
    "requests_mbs",
    "n_users",
    "n_vehicles",
    "n_caching_vehicles",
    "error",
];

fn fmt_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn metric_fields(m: &EpisodeMetrics) -> Vec<String> {
    vec![
        fmt_f64(m.eta_ee),
        fmt_f64(m.hit_ratio),
        fmt_f64(m.cache_utilization),
        fmt_f64(m.system_gain),
        fmt_f64(m.mean_delay_s),
        fmt_f64(m.max_backlog_over_horizon),
        fmt_f64(m.d_av_s),
        fmt_f64(m.empirical_kappa1),
        fmt_f64(m.bound_gap),
        fmt_f64(m.total_bits),
        fmt_f64(m.total_energy_j),
        fmt_f64(m.baseline_bits),
        m.requests_total.to_string(),
        m.requests_vehicle.to_string(),
        m.requests_mbs.to_string(),
        m.n_users.to_string(),
        m.n_vehicles.to_string(),
        m.n_caching_vehicles.to_string(),
        String::new(),
    ]
}

pub fn write_metrics_csv(
    path: &Path,
    spec: &ExperimentSpec,
    rows: &[ResolvedRow],
    results: &[Result<EpisodeMetrics, ModelError>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
    let mut header = vec!["row".to_string(), "policy".into(), "seed".into()];
    header.extend(spec.sweep.iter().map(|a| a.path.clone()));
    header.extend(METRIC_COLUMNS.iter().map(|c| c.to_string()));
    w.write_record(&header)?;

    for (row, result) in rows.iter().zip(results) {
        let mut record = vec![
            row.index.to_string(),
            row.config.policy.to_string(),
            row.seed.to_string(),
        ];
        record.extend(row.axis_values.iter().map(|(_, v)| fmt_value(v)));
        match result {
            Ok(m) => record.extend(metric_fields(m)),
            Err(e) => {
                record.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len() - 1));
                record.push(e.to_string());
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

const SUMMARY_METRICS: [&str; 5] = [
    "eta_ee",
    "hit_ratio",
    "cache_utilization",
    "system_gain",
    "mean_delay_s",
];

fn summary_values(m: &EpisodeMetrics) -> [f64; 5] {
    [
        m.eta_ee,
        m.hit_ratio,
        m.cache_utilization,
        m.system_gain,
        m.mean_delay_s,
    ]
}

/// Group rows that share axis values and policy; report mean and standard
/// error over their seed replicates.
pub fn write_summary_csv(
    path: &Path,
    spec: &ExperimentSpec,
    rows: &[ResolvedRow],
    results: &[Result<EpisodeMetrics, ModelError>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
    let mut header = vec!["policy".to_string()];
    header.extend(spec.sweep.iter().map(|a| a.path.clone()));
    header.push("replicates".into());
    for metric in SUMMARY_METRICS {
        header.push(format!("{metric}_mean"));
        header.push(format!("{metric}_stderr"));
    }
    w.write_record(&header)?;

    let mut seen: Vec<(String, Vec<String>)> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let key = (
            row.config.policy.to_string(),
            row.axis_values.iter().map(|(_, v)| fmt_value(v)).collect::<Vec<_>>(),
        );
        match seen.iter().position(|k| *k == key) {
            Some(g) => groups[g].push(i),
            None => {
                seen.push(key);
                groups.push(vec![i]);
            }
        }
    }

    for (key, members) in seen.iter().zip(&groups) {
        let samples: Vec<[f64; 5]> = members
            .iter()
            .filter_map(|&i| results[i].as_ref().ok().map(summary_values))
            .collect();
        let mut record = vec![key.0.clone()];
        record.extend(key.1.iter().cloned());
        record.push(samples.len().to_string());
        for k in 0..SUMMARY_METRICS.len() {
            if samples.is_empty() {
                record.push(String::new());
                record.push(String::new());
                continue;
            }
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let stderr = if samples.len() > 1 {
                let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>()
                    / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            record.push(fmt_f64(mean));
            record.push(fmt_f64(stderr));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces(
    dir: &Path,
    rows: &[ResolvedRow],
    results: &[Result<EpisodeMetrics, ModelError>],
) -> Result<()> {
    for (row, result) in rows.iter().zip(results) {
        let Ok(metrics) = result else { continue };
        if metrics.traces.is_empty() {
            continue;
        }
        let path = dir.join(format!("traces_row{}.csv", row.index));
        let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
        w.write_record([
            "slot",
            "n_users",
            "r_mbs_bits",
            "r_vehicle_bits",
            "r_total_bits",
            "r_baseline_bits",
            "energy_mbs_j",
            "energy_vehicle_tx_j",
            "energy_cache_j",
            "energy_backhaul_j",
            "energy_total_j",
            "eta_ee",
            "max_backlog",
            "objective",
            "cached_mass",
            "cached_fragments",
            "arrivals",
            "vehicle_served",
            "mbs_served",
            "pending",
            "mean_delay_s",
        ])?;
        for t in &metrics.traces {
            w.write_record([
                t.slot.to_string(),
                t.n_users.to_string(),
                fmt_f64(t.r_mbs_bits),
                fmt_f64(t.r_vehicle_bits),
                fmt_f64(t.r_total_bits),
                fmt_f64(t.r_baseline_bits),
                fmt_f64(t.energy.mbs_j),
                fmt_f64(t.energy.vehicle_tx_j),
                fmt_f64(t.energy.cache_j),
                fmt_f64(t.energy.backhaul_j),
                fmt_f64(t.energy.total_j),
                fmt_f64(t.eta_ee),
                fmt_f64(t.max_backlog),
                fmt_f64(t.objective),
                fmt_f64(t.cached_mass),
                fmt_f64(t.cached_fragments),
                t.arrivals.to_string(),
                t.vehicle_served.to_string(),
                t.mbs_served.to_string(),
                t.pending.to_string(),
                t.mean_delay_s.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Write `manifest.json`: tool version, the fully resolved spec, and the row
/// table. Feeding the manifest back to `run` reproduces the run bit-exactly.
pub fn write_manifest(
    path: &Path,
    spec: &ExperimentSpec,
    rows: &[ResolvedRow],
) -> Result<()> {
    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "spec": {
            "scenario": spec.scenario,
            "sweep": spec.sweep,
            "seeds": spec.seeds,
            "output_dir": spec.output_dir,
            "emit_traces": spec.emit_traces,
        },
        "rows": rows.iter().map(|r| json!({
            "row": r.index,
            "axes": r.axis_values.iter().map(|(p, v)| json!({"path": p, "value": v})).collect::<Vec<_>>(),
            "seed": r.seed,
            "policy": r.config.policy.to_string(),
        })).collect::<Vec<_>>(),
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| path.display().to_string())?;
    Ok(())
}
