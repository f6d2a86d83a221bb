use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use orrlab::{fit, sweep, verify};
use orrlab_core::spectral::WeightParams;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orrlab"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "schema_version": 1,
        "profile": {"name": "sine", "amplitude": 0.02},
        "channel": {"kind": "finite", "n_grid": 65},
        "initial": {"kind": "sine", "mode": 1, "amplitude": 1.0},
        "dt": 0.05, "t_end": 4.0, "snapshot_every": 4,
        "ladder": {"j_max": 2},
        "output": dir.join("run").to_string_lossy()
    });
    let path = dir.join("small.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn couette_example_reports_orr_rates_and_refits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("couette");
    let status = bin().arg("run").arg(example("couette.json")).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    for f in ["summary.json", "series.csv", "config.materialized.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(out.join("snapshots").is_dir());
    let s = summary(&out);
    let a = s["decay_alpha_psi"].as_f64().unwrap();
    let b = s["decay_alpha_dpsi"].as_f64().unwrap();
    assert!((a + 2.0).abs() < 0.2 && (b + 1.0).abs() < 0.2, "{a} {b}");

    let refit = fit::refit(&out, Some([20.0, 100.0]), None).unwrap();
    assert!((refit["decay_alpha_psi"].as_f64().unwrap() - a).abs() < 0.05);
    assert_eq!(refit["fit_window"], json!([20.0, 100.0]));
    let s2 = fit::refit(&out, None, Some(2.0)).unwrap();
    let r1 = s["gevrey_C_ratio_max"].as_f64().unwrap();
    let r2 = s2["gevrey_C_ratio_max"].as_f64().unwrap();
    assert!(r2.is_finite() && r2 <= 2.0, "{r1} {r2}");
}

#[test]
fn finite_compact_example_has_bounded_gevrey_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fc");
    let status = bin().arg("run").arg(example("finite_compact.json")).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let s = summary(&out);
    assert!(s["gevrey_C_ratio_max"].as_f64().unwrap() <= 2.0);
    assert_eq!(s["support_drift_max"].as_f64().unwrap(), 0.0);
    assert!(fs::read_dir(out.join("snapshots")).unwrap().count() > 0);
}

#[test]
fn malformed_config_gives_single_line_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(small_config(tmp.path())).unwrap().replace("\"dt\":0.05", "\"dt\":-0.05");
    let path = tmp.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("dt"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(small_config(tmp.path())).unwrap().replace("\"dt\":", "\"dtt\":1,\"dt\":");
    let path = tmp.path().join("typo.json");
    fs::write(&path, text).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("dtt"));
}

#[test]
fn replay_is_bit_identical_and_materialized_config_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&a).status().unwrap().success());
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&b).status().unwrap().success());
    let stored = a.join("config.materialized.json");
    assert!(bin().arg("run").arg(&stored).arg("--out").arg(&c).status().unwrap().success());
    let series = |d: &Path| fs::read(d.join("series.csv")).unwrap();
    assert_eq!(series(&a), series(&b));
    assert_eq!(series(&a), series(&c));
    let materialized: Value = serde_json::from_str(&fs::read_to_string(&stored).unwrap()).unwrap();
    assert!(materialized["weights"]["c_low"].is_number());
    assert!(materialized["diagnostics"]["fit_window"].is_array());
}

#[test]
fn sweep_writes_one_row_per_value_with_convergence_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = orrlab::config::RunConfig::load(&small_config(tmp.path())).unwrap();
    let out = tmp.path().join("sweep");
    let rows = sweep::sweep(&cfg, "channel.n_grid", &sweep::parse_values("33,65,129,257"), &out).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.status == "ok"));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "ratio_psi_l2").unwrap();
    let ratio: f64 = lines[4].split(',').nth(col).unwrap().parse().unwrap();
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    for i in 0..4 {
        assert!(out.join(format!("cell_{i:03}")).join("summary.json").exists());
    }
}

#[test]
fn sweep_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = orrlab::config::RunConfig::load(&small_config(tmp.path())).unwrap();
    let out = tmp.path().join("empty");
    let rows = sweep::sweep(&cfg, "profile.amplitude", &[], &out).unwrap();
    assert!(rows.is_empty());
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("profile.amplitude,status,"));
    assert!(sweep::sweep(&cfg, "profile.no_such_key", &[json!(1)], &tmp.path().join("bad")).is_err());
}

#[test]
fn fit_rejects_zero_series_and_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("series.csv"), "t,psi_l2,dpsi_l2,h0,h1,h2\n1,0,0,0,0,0\n2,0,0,0,0,0\n3,0,0,0,0,0\n").unwrap();
    let err = fit::refit(dir, Some([1.0, 3.0]), None).unwrap_err().to_string();
    assert!(err.contains("decay_alpha_psi"), "{err}");

    fs::write(dir.join("series.csv"), "t,l2\n1,1\n2,1\n").unwrap();
    let err = fit::refit(dir, Some([1.0, 2.0]), None).unwrap_err().to_string();
    for c in ["psi_l2", "dpsi_l2", "h0", "h1", "h2"] {
        assert!(err.contains(c), "{err}");
    }
}

#[test]
fn quick_verify_passes() {
    let checks = verify::quick();
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.to_string()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn tampered_weight_sign_fails_loudly() {
    let tampered = WeightParams::unchecked(-0.5, 1.0, 0.25, 0.25, 0.1);
    let checks = verify::quick_with(&tampered);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.invariant).collect();
    assert!(failed.iter().any(|i| i.contains("A(t) non-increasing")), "{failed:?}");
    assert!(failed.iter().any(|i| i.contains("ladder")), "{failed:?}");
    assert!(failed.iter().any(|i| i.contains("⟨u, A u⟩")), "{failed:?}");
}
