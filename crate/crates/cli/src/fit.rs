//! `fit`: recompute decay, growth and Gevrey fits from a stored run.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use orrlab_core::evolve::Trajectory;
use serde_json::Value;

use crate::runner::apply_fits;

pub fn refit(dir: &Path, window: Option<[f64; 2]>, s: Option<f64>) -> anyhow::Result<Value> {
    let series_path = dir.join("series.csv");
    let file = fs::File::open(&series_path).with_context(|| format!("opening {}", series_path.display()))?;
    let traj = Trajectory::read_csv(BufReader::new(file))?;
    let summary_path = dir.join("summary.json");
    let summary: Value = match fs::read_to_string(&summary_path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Value::Object(Default::default()),
    };
    let j_max = (0..)
        .take_while(|j| traj.column_index(&format!("h{j}")).is_some())
        .count()
        .saturating_sub(1);
    let mut missing: Vec<String> =
        ["t", "psi_l2", "dpsi_l2", "h0"].iter().filter(|c| traj.column_index(c).is_none()).map(|c| c.to_string()).collect();
    if j_max < 2 {
        missing.extend((1..=2).map(|j| format!("h{j}")).filter(|c| traj.column_index(c).is_none()));
    }
    if !missing.is_empty() {
        bail!("series.csv lacks required columns: {}", missing.join(", "));
    }
    let window = match window {
        Some(w) => w,
        None => stored_window(&summary).ok_or_else(|| anyhow!("no fit window given and none stored"))?,
    };
    let s = s.or_else(|| summary.get("gevrey_s").and_then(Value::as_f64)).unwrap_or(1.0);
    let updated = apply_fits(summary, &traj, window, s, j_max);
    for key in ["decay_alpha_psi", "decay_alpha_dpsi"] {
        if updated[key].is_null() {
            let err = updated[format!("{key}_error")].as_str().unwrap_or("fit failed").to_string();
            bail!("{key}: {err}");
        }
    }
    fs::write(&summary_path, serde_json::to_string_pretty(&updated)? + "\n")?;
    Ok(updated)
}

fn stored_window(summary: &Value) -> Option<[f64; 2]> {
    let w = summary.get("fit_window")?.as_array()?;
    Some([w.first()?.as_f64()?, w.get(1)?.as_f64()?])
}

pub fn parse_window(text: &str) -> anyhow::Result<[f64; 2]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("window must be `a,b`, got `{text}`");
    }
    let a: f64 = parts[0].trim().parse()?;
    let b: f64 = parts[1].trim().parse()?;
    if !(a > 0.0 && b > a) {
        bail!("window needs 0 < a < b, got [{a}, {b}]");
    }
    Ok([a, b])
}
