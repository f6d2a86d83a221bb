//! `sweep`: one run per value of a dotted config parameter.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail};
use rayon::prelude::*;
use serde_json::Value;

use crate::config::RunConfig;
use crate::runner::{execute, write_outputs};

/// Parses `a,b,c`; each entry as JSON when possible, else as a string.
pub fn parse_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

/// Replaces the value at a dotted path; the path must already exist.
pub fn set_param(root: &mut Value, dotted: &str, value: Value) -> anyhow::Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("parameter `{dotted}` is not addressable: `{}` is not an object", parts[..i].join(".")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| anyhow!("parameter `{dotted}` is not addressable: no key `{part}`"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    bail!("empty parameter name")
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: Value,
    pub status: String,
    pub metrics: Vec<f64>,
}

pub const METRICS: [&str; 8] = [
    "decay_alpha_psi",
    "decay_alpha_dpsi",
    "dissipation_C_fit",
    "mono_max_increment",
    "mono_violation",
    "smallness_margin",
    "final_psi_l2",
    "final_neumann0",
];

fn metric_row(summary: &Value, series: &orrlab_core::evolve::Trajectory) -> Vec<f64> {
    let get = |k: &str| summary.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
    let mono = summary["mono_max_increment_j"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::NAN);
    let last = |col: &str| series.column(col).and_then(|c| c.last().copied()).unwrap_or(f64::NAN);
    vec![
        get("decay_alpha_psi"),
        get("decay_alpha_dpsi"),
        get("dissipation_C_fit"),
        mono,
        if summary["mono_violation"].as_bool().unwrap_or(false) { 1.0 } else { 0.0 },
        summary["metadata"]["smallness_margin"].as_f64().unwrap_or(f64::NAN),
        last("psi_l2"),
        last("neumann0"),
    ]
}

/// `|m_{i-1} - m_{i-2}| / |m_i - m_{i-1}|`: about `2^p` for an order-`p`
/// quantity under grid doubling.
pub fn convergence_ratios(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            if i < 2 {
                f64::NAN
            } else {
                (values[i - 1] - values[i - 2]).abs() / (values[i] - values[i - 1]).abs()
            }
        })
        .collect()
}

pub fn sweep(base: &RunConfig, param: &str, values: &[Value], out: &Path) -> anyhow::Result<Vec<SweepRow>> {
    let template = serde_json::to_value(base)?;
    // reject unaddressable names even for an empty value list
    set_param(&mut template.clone(), param, Value::Null)?;
    fs::create_dir_all(out)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let cell = || -> anyhow::Result<Vec<f64>> {
                let mut doc = template.clone();
                set_param(&mut doc, param, v.clone())?;
                let dir = out.join(format!("cell_{i:03}"));
                doc["output"] = Value::String(dir.to_string_lossy().into_owned());
                let cfg: RunConfig = serde_json::from_value(doc)?;
                let outcome = execute(&cfg)?;
                write_outputs(&outcome, &dir)?;
                Ok(metric_row(&outcome.summary, &outcome.trajectory))
            };
            match cell() {
                Ok(metrics) => SweepRow { value: v.clone(), status: "ok".into(), metrics },
                Err(e) => SweepRow {
                    value: v.clone(),
                    status: format!("error: {e}").replace(',', ";"),
                    metrics: vec![f64::NAN; METRICS.len()],
                },
            }
        })
        .collect();
    write_csv(param, &rows, &out.join("sweep.csv"))?;
    Ok(rows)
}

fn write_csv(param: &str, rows: &[SweepRow], path: &Path) -> anyhow::Result<()> {
    let mut text = format!("{param},status,{},ratio_psi_l2,ratio_neumann0\n", METRICS.join(","));
    let psi: Vec<f64> = rows.iter().map(|r| r.metrics[6]).collect();
    let neu: Vec<f64> = rows.iter().map(|r| r.metrics[7]).collect();
    let (rp, rn) = (convergence_ratios(&psi), convergence_ratios(&neu));
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.metrics.iter().map(|m| m.to_string()).collect();
        let value = match &r.value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        text += &format!("{value},{},{},{},{}\n", r.status, cells.join(","), rp[i], rn[i]);
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_paths() {
        let mut v = json!({"a": {"b": 1}, "c": null});
        set_param(&mut v, "a.b", json!(2)).unwrap();
        set_param(&mut v, "c", json!("x")).unwrap();
        assert_eq!(v, json!({"a": {"b": 2}, "c": "x"}));
        assert!(set_param(&mut v, "a.z", json!(0)).is_err());
        assert!(set_param(&mut v, "a.b.c", json!(0)).is_err());
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1e-3, 2,abc"), vec![json!(0.001), json!(2), json!("abc")]);
        assert!(parse_values("").is_empty());
    }

    #[test]
    fn ratios_of_second_order_sequence() {
        let v: Vec<f64> = (0..4).map(|i| 1.0 + 0.25f64.powi(i)).collect();
        let r = convergence_ratios(&v);
        assert!((r[2] - 4.0).abs() < 1e-12 && (r[3] - 4.0).abs() < 1e-12);
    }
}
