use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::aggregate::Aggregate;
use super::config::{Preset, RunConfig};
use super::run::{run, RunResult};
use super::HarnessError;

pub const BASE_NAME: &str = "AEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub config: RunConfig,
}

/// The one-component variants of `base`, in table order. `base` is first
/// normalized to the main configuration.
pub fn ablation_variants(base: &RunConfig) -> Vec<AblationVariant> {
    let base = Preset::Ael.apply(base);
    let v = |name: &str, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        AblationVariant {
            name: name.to_string(),
            config: c,
        }
    };
    vec![
        v("- warm-up", &|c| c.flags.no_warm_up = true),
        AblationVariant {
            name: "- reflection (= +memory)".into(),
            config: Preset::Memory.apply(&base),
        },
        v("+ cold-start init", &|c| c.flags.cold_start = true),
        v("+ planner evolution", &|c| c.flags.planner_evolution = true),
        v("+ per-tool selection", &|c| c.flags.per_tool_selection = true),
        v("+ skill extraction", &|c| c.flags.skill_extraction = true),
        v("+ planner selection", &|c| c.flags.planner_selection = true),
        v("-> fcc credit", &|c| c.credit_method = "fcc".into()),
        v("-> llm-fcc credit", &|c| c.credit_method = "llm_fcc".into()),
    ]
}

fn leaves(prefix: String, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                leaves(format!("{prefix}/{k}"), x, out);
            }
        }
        other => {
            out.insert(prefix, other.clone());
        }
    }
}

/// Dotted paths of every leaf field that differs between two configs.
pub fn config_diff(a: &RunConfig, b: &RunConfig) -> Vec<String> {
    let (mut la, mut lb) = (BTreeMap::new(), BTreeMap::new());
    leaves(String::new(), &serde_json::to_value(a).expect("config serializes"), &mut la);
    leaves(String::new(), &serde_json::to_value(b).expect("config serializes"), &mut lb);
    let mut keys: Vec<&String> = la.keys().chain(lb.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter(|k| la.get(*k) != lb.get(*k))
        .map(|k| k.trim_start_matches('/').replace('/', "."))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub delta_sharpe: Option<f64>,
    /// The single config field changed from base; empty for the base row.
    pub changed: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(crate::canonical::format_float).unwrap_or_default()
}

impl AblationTable {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["configuration", "Sharpe", "Sortino", "ΔSharpe"])
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.configuration.clone(),
                fmt_opt(r.sharpe),
                fmt_opt(r.sortino),
                fmt_opt(r.delta_sharpe),
            ])
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Runtime(e.to_string()))
    }
}

/// Runs the base configuration and every variant on every seed. Results are
/// returned per row (base first) in seed order.
pub fn run_ablation(base: &RunConfig, seeds: &[u64]) -> Result<(AblationTable, Vec<Vec<RunResult>>), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("at least one seed is required".into()));
    }
    let base = Preset::Ael.apply(base);
    base.validate()?;
    let mut rows: Vec<(String, RunConfig, String)> = vec![(BASE_NAME.to_string(), base.clone(), String::new())];
    for v in ablation_variants(&base) {
        let diff = config_diff(&base, &v.config);
        if diff.len() != 1 {
            return Err(HarnessError::Config(format!(
                "variant `{}` changes {} fields: {diff:?}",
                v.name,
                diff.len()
            )));
        }
        rows.push((v.name, v.config, diff[0].clone()));
    }
    let jobs: Vec<(usize, RunConfig)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, (_, c, _))| seeds.iter().map(move |&s| (i, RunConfig { seed: s, ..c.clone() })))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|(_, c)| run(c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results: Vec<Vec<RunResult>> = vec![Vec::new(); rows.len()];
    for ((i, _), r) in jobs.iter().zip(flat) {
        results[*i].push(r);
    }
    let aggs: Vec<Aggregate> = results.iter().map(|r| Aggregate::from_results(r)).collect();
    let base_sharpe = aggs[0].mean_of("sharpe");
    let table = AblationTable {
        seeds: seeds.to_vec(),
        rows: rows
            .into_iter()
            .zip(aggs)
            .map(|((name, _, changed), a)| {
                let sharpe = a.mean_of("sharpe");
                AblationRow {
                    configuration: name,
                    sharpe,
                    sortino: a.mean_of("sortino"),
                    delta_sharpe: sharpe.zip(base_sharpe).map(|(s, b)| s - b),
                    changed,
                    aggregate: a,
                }
            })
            .collect(),
    };
    Ok((table, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_single_field_variants() {
        let base = RunConfig::default();
        let vs = ablation_variants(&base);
        assert_eq!(vs.len(), 9);
        for v in &vs {
            assert_eq!(config_diff(&base, &v.config).len(), 1, "{}", v.name);
        }
        assert_eq!(vs[1].config, Preset::Memory.apply(&base));
    }
}
