//! Run configuration: a versioned JSON document with strict keys.

use std::path::{Path, PathBuf};

use orrlab_core::evolve::InitialData;
use orrlab_core::grid::ChannelKind;
use orrlab_core::profiles::{ChannelConfig, ProfileSpec};
use orrlab_core::spectral::WeightParams;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    #[serde(default = "two_pi")]
    pub circumference: f64,
    /// Half width `Z` of the periodic box (infinite channel only).
    #[serde(default)]
    pub half_width: Option<f64>,
    pub n_grid: usize,
    #[serde(default)]
    pub support_interval: Option<[f64; 2]>,
    #[serde(default)]
    pub vanish_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(default = "half")]
    pub c_exp: f64,
    /// Defaults to the lower bilipschitz bound of the profile.
    #[serde(default)]
    pub c_low: Option<f64>,
    #[serde(default = "quarter")]
    pub beta: f64,
    #[serde(default = "quarter")]
    pub gamma: f64,
    #[serde(default = "tenth")]
    pub delta: f64,
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec { c_exp: 0.5, c_low: None, beta: 0.25, gamma: 0.25, delta: 0.1 }
    }
}

impl WeightsSpec {
    pub fn resolve(&self, bilip_lower: f64) -> WeightParams {
        WeightParams::unchecked(self.c_exp, self.c_low.unwrap_or(bilip_lower), self.beta, self.gamma, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    #[serde(default = "four")]
    pub j_max: usize,
    #[serde(default = "one")]
    pub constant: f64,
    /// Further ladder constants whose monotonicity is reported.
    #[serde(default = "robustness_constants")]
    pub extra_constants: Vec<f64>,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec { j_max: 4, constant: 1.0, extra_constants: robustness_constants() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "tol_mono")]
    pub tol_mono: f64,
    #[serde(default = "tail_fraction")]
    pub tail_fraction: f64,
    #[serde(default = "tail_tolerance")]
    pub tail_tolerance: f64,
    /// Keep field dumps of every n-th snapshot (`0` disables).
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Window for the decay and growth fits; defaults to the last 90% of the run.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "one")]
    pub gevrey_s: f64,
    /// Threshold compared against the smallness margin.
    #[serde(default = "margin_threshold")]
    pub margin_threshold: f64,
    /// Maximum support drift outside the support interval before the run is
    /// flagged.
    #[serde(default = "support_tol")]
    pub support_tolerance: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            tol_mono: tol_mono(),
            tail_fraction: tail_fraction(),
            tail_tolerance: tail_tolerance(),
            snapshot_stride: 0,
            fit_window: None,
            gevrey_s: 1.0,
            margin_threshold: margin_threshold(),
            support_tolerance: support_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub profile: ProfileSpec,
    pub channel: ChannelSpec,
    /// Integer multiples of `2π/L`.
    #[serde(default = "default_modes")]
    pub modes: Vec<i64>,
    pub initial: InitialData,
    pub dt: f64,
    pub t_end: f64,
    /// Diagnostics every this many steps.
    #[serde(default = "ten")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default)]
    pub ladder: LadderSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}
fn tenth() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn four() -> usize {
    4
}
fn ten() -> usize {
    10
}
fn robustness_constants() -> Vec<f64> {
    vec![0.5, 2.0]
}
fn tol_mono() -> f64 {
    1e-8
}
fn tail_fraction() -> f64 {
    0.8
}
fn tail_tolerance() -> f64 {
    0.01
}
fn margin_threshold() -> f64 {
    0.1
}
fn support_tol() -> f64 {
    1e-8
}
fn default_modes() -> Vec<i64> {
    vec![1]
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    /// Every violated constraint, one message each.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version: expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt: must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) {
            errs.push(format!("t_end: must be positive, got {}", self.t_end));
        }
        if self.dt > 0.0 && self.t_end > 0.0 {
            let steps = self.t_end / self.dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                errs.push(format!("t_end: {} is not a whole number of steps of dt = {}", self.t_end, self.dt));
            }
        }
        if self.snapshot_every == 0 {
            errs.push("snapshot_every: must be at least 1".into());
        }
        if self.modes.is_empty() {
            errs.push("modes: at least one mode is required".into());
        }
        if self.modes.contains(&0) {
            errs.push("modes: the zero mode carries no dynamics and is not supported".into());
        }
        if let Err(e) = self.channel_config().validate() {
            errs.push(format!("channel: {e}"));
        }
        match self.channel.kind {
            ChannelKind::Infinite if self.channel.half_width.is_none() => {
                errs.push("channel.half_width: required for the infinite channel".into())
            }
            ChannelKind::Finite if self.channel.half_width.is_some() => {
                errs.push("channel.half_width: only meaningful for the infinite channel".into())
            }
            _ => {}
        }
        let w = &self.weights;
        if let Err(e) = WeightParams::new(w.c_exp, w.c_low.unwrap_or(1.0), w.beta, w.gamma, w.delta) {
            errs.push(format!("weights: {e}"));
        }
        if self.ladder.j_max > orrlab_core::profiles::DEFAULT_J_MAX + 1 {
            errs.push(format!(
                "ladder.j_max: at most {} supported, got {}",
                orrlab_core::profiles::DEFAULT_J_MAX + 1,
                self.ladder.j_max
            ));
        }
        if !(self.ladder.constant > 0.0) || self.ladder.extra_constants.iter().any(|c| !(*c > 0.0)) {
            errs.push("ladder: constants must be positive".into());
        }
        let d = &self.diagnostics;
        if !(d.tail_fraction > 0.0 && d.tail_fraction < 1.0) {
            errs.push(format!("diagnostics.tail_fraction: must lie in (0,1), got {}", d.tail_fraction));
        }
        if !(d.gevrey_s >= 1.0) {
            errs.push(format!("diagnostics.gevrey_s: must be at least 1, got {}", d.gevrey_s));
        }
        if let Some([a, b]) = d.fit_window {
            if !(a > 0.0 && b > a) {
                errs.push(format!("diagnostics.fit_window: need 0 < a < b, got [{a}, {b}]"));
            }
        }
        errs
    }

    pub fn channel_config(&self) -> ChannelConfig {
        let c = &self.channel;
        let mut ch = match c.kind {
            ChannelKind::Finite => ChannelConfig::finite(c.circumference, c.n_grid),
            ChannelKind::Infinite => {
                ChannelConfig::infinite(c.circumference, c.half_width.unwrap_or(0.0), c.n_grid)
            }
        };
        ch.support_interval = c.support_interval;
        ch.vanish_order = c.vanish_order;
        ch
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        let unit = 2.0 * std::f64::consts::PI / self.channel.circumference;
        self.modes.iter().map(|&m| m as f64 * unit).collect()
    }

    pub fn fit_window(&self) -> [f64; 2] {
        self.diagnostics.fit_window.unwrap_or([0.1 * self.t_end, self.t_end])
    }

    /// The stored copy: every default spelled out, `c_low` resolved.
    pub fn materialize(&self, bilip_lower: f64) -> RunConfig {
        let mut m = self.clone();
        m.weights.c_low = Some(self.weights.c_low.unwrap_or(bilip_lower));
        m.diagnostics.fit_window = Some(self.fit_window());
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "profile": {"name": "couette"},
        "channel": {"kind": "finite", "n_grid": 64},
        "initial": {"kind": "sine", "mode": 1, "amplitude": 1.0},
        "dt": 0.1,
        "t_end": 1.0
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.modes, vec![1]);
        assert_eq!(cfg.ladder.j_max, 4);
        let m = cfg.materialize(0.75);
        assert_eq!(m.weights.c_low, Some(0.75));
        let back = RunConfig::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("\"dt\": 0.1", "\"dt\": 0.1, \"dtt\": 3");
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn all_violations_listed() {
        let text = MINIMAL.replace("\"dt\": 0.1", "\"dt\": -0.1").replace("\"n_grid\": 64", "\"n_grid\": 3");
        let cfg = RunConfig::from_json(&text).unwrap();
        let errs = cfg.validate();
        assert!(errs.iter().any(|e| e.starts_with("dt:")));
        assert!(errs.iter().any(|e| e.starts_with("channel:")));
    }
}
