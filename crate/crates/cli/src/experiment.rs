//! Experiment specification: a base scenario, sweep axes, and replicate
//! seeds, resolved into a flat grid of runnable configurations.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vecache::ScenarioConfig;

/// One sweep dimension: a dotted path into the scenario config plus the
/// values it takes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<Value>,
}

/// On-disk experiment format (all fields optional).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSpec {
    scenario: Value,
    sweep: Vec<SweepAxis>,
    seeds: Vec<u64>,
    output_dir: Option<PathBuf>,
    emit_traces: bool,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub sweep: Vec<SweepAxis>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub emit_traces: bool,
}

/// One cell of the resolved grid.
#[derive(Debug, Clone)]
pub struct ResolvedRow {
    pub index: usize,
    pub axis_values: Vec<(String, Value)>,
    pub seed: u64,
    pub config: ScenarioConfig,
}

/// Errors from loading or resolving an experiment file.
#[derive(Debug)]
pub enum SpecError {
    /// I/O or JSON syntax/shape problems (with serde's line/field context).
    Parse(String),
    /// A structurally valid spec that violates an invariant.
    Validation(String),
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::Parse(msg) => write!(f, "parse error: {msg}"),
            SpecError::Validation(msg) => write!(f, "validation error: {msg}"),
        }
    }
}

impl std::error::Error for SpecError {}

fn walk<'v>(root: &'v Value, path: &str) -> Option<&'v Value> {
    let mut cur = root;
    for part in path.split('.') {
        cur = cur.get(part)?;
    }
    Some(cur)
}

fn walk_mut<'v>(root: &'v mut Value, path: &str) -> Option<&'v mut Value> {
    let mut cur = root;
    for part in path.split('.') {
        cur = cur.get_mut(part)?;
    }
    Some(cur)
}

/// Load and fully validate an experiment spec. Accepts either a spec file or
/// a previously written `manifest.json` (whose embedded spec is reused, which
/// makes any run reproducible from its own manifest).
pub fn load_config(path: &Path) -> Result<ExperimentSpec, SpecError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SpecError::Parse(format!("{}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| SpecError::Parse(e.to_string()))?;
    if value.get("tool_version").is_some() {
        value = value
            .get("spec")
            .cloned()
            .ok_or_else(|| SpecError::Parse("manifest without embedded spec".into()))?;
    }
    let raw: RawSpec =
        serde_json::from_value(value).map_err(|e| SpecError::Parse(e.to_string()))?;

    let scenario: ScenarioConfig =
        serde_json::from_value(if raw.scenario.is_null() {
            Value::Object(Default::default())
        } else {
            raw.scenario
        })
        .map_err(|e| SpecError::Parse(e.to_string()))?;
    scenario
        .validate()
        .map_err(|e| SpecError::Validation(e.to_string()))?;

    let seeds = if raw.seeds.is_empty() {
        vec![scenario.rng_seed]
    } else {
        raw.seeds
    };

    let spec = ExperimentSpec {
        scenario,
        sweep: raw.sweep,
        seeds,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        emit_traces: raw.emit_traces,
    };
    // every axis must reference an existing config path and carry values
    let base = serde_json::to_value(&spec.scenario)
        .map_err(|e| SpecError::Parse(e.to_string()))?;
    for axis in &spec.sweep {
        if walk(&base, &axis.path).is_none() {
            return Err(SpecError::Validation(format!(
                "sweep axis path `{}` does not exist in the scenario config",
                axis.path
            )));
        }
        if axis.values.is_empty() {
            return Err(SpecError::Validation(format!(
                "sweep axis `{}` has no values",
                axis.path
            )));
        }
    }
    // fail fast if any grid cell is unbuildable
    resolve_grid(&spec).map(|_| spec)
}

/// Expand the sweep axes (first axis slowest) and replicate seeds (innermost)
/// into runnable rows.
pub fn resolve_grid(spec: &ExperimentSpec) -> Result<Vec<ResolvedRow>, SpecError> {
    let base = serde_json::to_value(&spec.scenario)
        .map_err(|e| SpecError::Parse(e.to_string()))?;
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in &spec.sweep {
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for combo in &combos {
            for value in &axis.values {
                let mut extended = combo.clone();
                extended.push((axis.path.clone(), value.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }

    let mut rows = Vec::with_capacity(combos.len() * spec.seeds.len());
    for combo in &combos {
        let mut cell = base.clone();
        for (path, value) in combo {
            let slot = walk_mut(&mut cell, path).ok_or_else(|| {
                SpecError::Validation(format!("sweep axis path `{path}` vanished"))
            })?;
            *slot = value.clone();
        }
        for &seed in &spec.seeds {
            let mut with_seed = cell.clone();
            if let Some(slot) = walk_mut(&mut with_seed, "rng_seed") {
                *slot = Value::from(seed);
            }
            if spec.emit_traces {
                if let Some(slot) = walk_mut(&mut with_seed, "emit_traces") {
                    *slot = Value::from(true);
                }
            }
            // structural check only: a cell that deserializes but violates a
            // model invariant is captured per-row at run time instead of
            // aborting the sweep
            let config: ScenarioConfig = serde_json::from_value(with_seed).map_err(|e| {
                SpecError::Validation(format!(
                    "grid cell {:?} is not a valid scenario: {e}",
                    combo
                        .iter()
                        .map(|(p, v)| format!("{p}={v}"))
                        .collect::<Vec<_>>()
                ))
            })?;
            rows.push(ResolvedRow {
                index: rows.len(),
                axis_values: combo.clone(),
                seed,
                config,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let f = write_tmp(r#"{ "sweep": [{"path": "rates.lambda", "values": [0.5, 1.0]}] }"#);
        let spec = load_config(f.path()).unwrap();
        assert_eq!(spec.scenario.catalog.n_fragments, 1000);
        assert!((spec.scenario.catalog.fragment_size_bits - 1e7).abs() < 1.0);
        assert!((spec.scenario.radio.bandwidth_hz - 10e6).abs() < 1.0);
        assert!((spec.scenario.energy.amplifier_factor - 15.13).abs() < 1e-12);
        assert!((spec.scenario.radio.cell_radius_m - 350.0).abs() < 1e-12);
        assert_eq!(spec.seeds, vec![spec.scenario.rng_seed]);
        let rows = resolve_grid(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].config.rates.lambda - 0.5).abs() < 1e-12);
        assert!((rows[1].config.rates.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_field_is_a_parse_error_naming_the_field() {
        let f = write_tmp(r#"{ "scenario": { "cache_proportionn": 0.5 } }"#);
        match load_config(f.path()) {
            Err(SpecError::Parse(msg)) => assert!(msg.contains("cache_proportionn"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_value_is_a_validation_error() {
        let f = write_tmp(r#"{ "scenario": { "cache_proportion": 1.3 } }"#);
        match load_config(f.path()) {
            Err(SpecError::Validation(msg)) => assert!(msg.contains("cache_proportion"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_axis_path_rejected() {
        let f = write_tmp(r#"{ "sweep": [{"path": "rates.lambada", "values": [1.0]}] }"#);
        match load_config(f.path()) {
            Err(SpecError::Validation(msg)) => assert!(msg.contains("lambada"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn grid_is_axes_times_seeds_in_order() {
        let f = write_tmp(
            r#"{
                "sweep": [
                    {"path": "policy", "values": ["online", "none"]},
                    {"path": "rates.lambda", "values": [0.5, 1.0]}
                ],
                "seeds": [7, 8]
            }"#,
        );
        let spec = load_config(f.path()).unwrap();
        let rows = resolve_grid(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        // first axis slowest, seeds innermost
        assert_eq!(rows[0].seed, 7);
        assert_eq!(rows[1].seed, 8);
        assert!((rows[0].config.rates.lambda - 0.5).abs() < 1e-12);
        assert!((rows[2].config.rates.lambda - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].config.policy, vecache::Policy::Online);
        assert_eq!(rows[4].config.policy, vecache::Policy::None);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.index, i);
            assert_eq!(row.config.rng_seed, row.seed);
        }
    }
}
