//! `run`: simulate a configuration, evaluate diagnostics and write outputs.

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use orrlab_core::evolve::{run, Simulation, Trajectory};
use orrlab_core::lyapunov::{
    boundary_trace_growth, decay_fit, dissipation_residual, monotonicity_report, DiagnosticsConfig,
    GevreyFit, Recorder,
};
use orrlab_core::profiles::{smallness_margin, ShearProfile};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

/// Finite floats as numbers, the rest as strings (`"inf"`, `"-inf"`, `"nan"`).
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

pub struct RunOutcome {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub summary: Value,
    pub fatal: Vec<String>,
}

pub fn execute(cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        anyhow::bail!("invalid config: {}", errs.join("; "));
    }
    let channel = cfg.channel_config();
    let profile = Arc::new(ShearProfile::build(&cfg.profile, &channel)?);
    let grid = channel.grid()?;
    let materialized = cfg.materialize(profile.bilip_lower);
    let weights = materialized.weights.resolve(profile.bilip_lower);
    weights.validate()?;
    let ks = cfg.wavenumbers();
    let mut sim = Simulation::with_initial_data(profile.clone(), grid, &ks, &cfg.initial)?;
    let diag = DiagnosticsConfig {
        j_max: cfg.ladder.j_max,
        ladder_constant: cfg.ladder.constant,
        weights,
        station: cfg.dt * cfg.snapshot_every as f64,
        tail_fraction: cfg.diagnostics.tail_fraction,
        tail_tolerance: cfg.diagnostics.tail_tolerance,
        support_interval: cfg.channel.support_interval,
        vanish_order: cfg.channel.vanish_order,
        snapshot_stride: cfg.diagnostics.snapshot_stride,
    };
    let mut rec = Recorder::new(&sim, diag)?;
    run(&mut sim, cfg.dt, cfg.t_end, cfg.snapshot_every, |s| rec.observe(s))?;

    let mut ladders = vec![rec.ladder(cfg.ladder.constant)?];
    for &c in &cfg.ladder.extra_constants {
        ladders.push(rec.ladder(c)?);
    }
    let mut summary = Map::new();
    let margin = smallness_margin(&profile, &channel);
    let mut meta = json!({
        "config": serde_json::to_value(&materialized)?,
        "version": env!("CARGO_PKG_VERSION"),
        "wavenumbers": nums(&ks),
        "smallness_margin": num(margin),
        "margin_threshold": num(cfg.diagnostics.margin_threshold),
        "bilipschitz": [num(profile.bilip_lower), num(profile.bilip_upper)],
        "composite_norms": serde_json::to_value(&rec.table)?,
        "ladder_coefficients": nums(&rec.coefficients),
        "weights": serde_json::to_value(weights)?,
        "steps": (cfg.t_end / cfg.dt).round() as u64,
    });
    if let Some(wi) = &rec.weight_integral {
        let rays: Vec<f64> = sim
            .modes
            .iter()
            .flat_map(|m| sim.grid.eta().iter().map(move |e| e / m.k()))
            .collect();
        meta["weight_integral_bound"] = num(wi.sup_limit(rays)?);
    }
    summary.insert("metadata".into(), meta);

    let mut fatal = Vec::new();
    let traj = &rec.trajectory;
    let reports: Vec<Value> = ladders
        .iter()
        .map(|l| {
            let r = monotonicity_report(&l.times, &l.values, cfg.diagnostics.tol_mono);
            json!({
                "constant": num(l.constant),
                "max_increment_j": nums(&r.iter().map(|x| x.max_increment).collect::<Vec<_>>()),
                "first_violation_j": r.iter().map(|x| x.first_violation.map_or(Value::Null, num)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let primary = monotonicity_report(&ladders[0].times, &ladders[0].values, cfg.diagnostics.tol_mono);
    let violated = primary.iter().any(|r| r.first_violation.is_some());
    summary.insert(
        "mono_max_increment_j".into(),
        nums(&primary.iter().map(|r| r.max_increment).collect::<Vec<_>>()),
    );
    summary.insert("mono_violation".into(), json!(violated));
    summary.insert("mono_by_constant".into(), Value::Array(reports));
    if violated && margin <= cfg.diagnostics.margin_threshold {
        fatal.push(format!(
            "energy ladder increased although the smallness margin {margin:.3e} is below the threshold"
        ));
    }

    let times = traj.times();
    let e0 = ladders[0].series(0);
    let hm1 = traj.column("hm1_sq").expect("hm1 column");
    match dissipation_residual(&times, &e0, &hm1) {
        Ok(d) => {
            summary.insert("dissipation_C_fit".into(), num(d.c_fit));
            summary.insert("dissipation_fd_error".into(), num(d.fd_error));
            summary.insert(
                "dissipation_max_residual".into(),
                num(d.residual.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            );
        }
        Err(e) => {
            summary.insert("dissipation_C_fit".into(), Value::Null);
            summary.insert("dissipation_error".into(), json!(e.to_string()));
        }
    }

    let lower = traj.column("lower_ratio").expect("lower_ratio column");
    let upper = traj.column("upper_ratio").expect("upper_ratio column");
    let sandwich_ok = lower.iter().all(|v| *v >= 1.0 - 1e-10) && upper.iter().all(|v| *v <= 1.0 + 1e-10);
    summary.insert("sandwich_ok".into(), json!(sandwich_ok));
    if !sandwich_ok {
        fatal.push("energy sandwich bounds violated".into());
    }
    let trusted = traj.column("trusted_orders").expect("trusted column");
    let trusted_min = trusted.iter().copied().fold(f64::INFINITY, f64::min);
    summary.insert("trusted_orders_min".into(), num(trusted_min));
    summary.insert("ladder_underresolved".into(), json!(trusted_min < (cfg.ladder.j_max + 1) as f64));

    if let Some(drift) = traj.column("support_drift") {
        let worst = drift.iter().copied().fold(0.0, f64::max);
        summary.insert("support_drift_max".into(), num(worst));
        if worst > cfg.diagnostics.support_tolerance {
            fatal.push(format!("support drift {worst:.3e} exceeds {:.1e}", cfg.diagnostics.support_tolerance));
        }
    }
    if let Some(v) = traj.column("vanish_ok") {
        let ok = v.iter().all(|x| *x == 1.0);
        summary.insert("vanishing_preserved".into(), json!(ok));
        if !ok {
            fatal.push("vanishing order of ω(t) - ω₀ not preserved".into());
        }
    }

    let mut summary =
        apply_fits(Value::Object(summary), traj, cfg.fit_window(), cfg.diagnostics.gevrey_s, cfg.ladder.j_max);
    summary["fatal"] = json!(fatal);
    Ok(RunOutcome { config: materialized, trajectory: rec.trajectory, summary, fatal })
}

/// Decay, growth and Gevrey fits from the stored series; these are the keys
/// `fit` recomputes.
pub fn apply_fits(mut summary: Value, traj: &Trajectory, window: [f64; 2], s: f64, j_max: usize) -> Value {
    let times = traj.times();
    let fit_key = |summary: &mut Value, key: &str, col: &str| {
        if let Some(v) = traj.column(col) {
            match decay_fit(&times, &v, window) {
                Ok(f) => {
                    summary[key] = num(f.alpha);
                    summary[format!("{key}_residual")] = num(f.residual);
                }
                Err(e) => {
                    summary[key] = Value::Null;
                    summary[format!("{key}_error")] = json!(e.to_string());
                }
            }
        }
    };
    fit_key(&mut summary, "decay_alpha_psi", "psi_l2");
    fit_key(&mut summary, "decay_alpha_dpsi", "dpsi_l2");
    fit_key(&mut summary, "neumann_decay_alpha", "neumann0");
    if let Some(h2) = traj.column("h2_grid") {
        match boundary_trace_growth(&times, &h2, window) {
            Ok(f) => summary["h2_growth_slope"] = num(f.alpha),
            Err(e) => summary["h2_growth_error"] = json!(e.to_string()),
        }
    }
    summary["fit_window"] = nums(&window);
    let norms: Option<Vec<Vec<f64>>> = (0..traj.len())
        .map(|i| {
            (0..=j_max)
                .map(|j| traj.column_index(&format!("h{j}")).map(|c| traj.rows[i][c]))
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    if let Some(norms) = norms {
        let g = GevreyFit::new(s, &times, &norms);
        summary["gevrey_s"] = num(s);
        summary["gevrey_C_of_t"] = nums(&g.constants);
        summary["gevrey_C_ratio_max"] = num(g.max_ratio());
    }
    summary
}

pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.materialized.json"), outcome.config.to_json() + "\n")?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&outcome.summary)? + "\n")?;
    let f = fs::File::create(dir.join("series.csv"))?;
    outcome.trajectory.write_csv(BufWriter::new(f))?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let channel = outcome.config.channel_config();
    let z = orrlab_core::profiles::channel_nodes(&channel);
    for (i, snap) in outcome.trajectory.snapshots.iter().enumerate() {
        let f = fs::File::create(snap_dir.join(format!("omega_{i:05}.csv")))?;
        snap.write_csv(&z, BufWriter::new(f))?;
    }
    Ok(())
}
