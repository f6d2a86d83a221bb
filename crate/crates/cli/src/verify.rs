//! `verify`: invariant checks over every module with fixed seeds.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use orrlab_core::elliptic::{
    assemble_conjugated_operator, h1t_norm_grid, homogeneous_solutions, neumann_data_integral, LambdaSolver,
};
use orrlab_core::evolve::{run, InitialData, Simulation};
use orrlab_core::grid::Grid;
use orrlab_core::lyapunov::{decay_fit, monotonicity_report, DiagnosticsConfig, Recorder};
use orrlab_core::profiles::{composite_norm, ChannelConfig, ProfileSpec, ShearProfile};
use orrlab_core::spectral::{
    a_infinite_factor, a_infinite_rate, hm1t_weight_norm, ModeField, Multiplier, WeightIntegral, WeightParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::acceptance::{self, CriterionResult};
use crate::config::RunConfig;
use crate::runner::execute;

const PI: f64 = std::f64::consts::PI;
const SEED: u64 = 20_240_611;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub module: &'static str,
    pub invariant: &'static str,
    pub pass: bool,
    pub observed: String,
    pub bound: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<9} {}: observed {}, bound {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.module,
            self.invariant,
            self.observed,
            self.bound
        )
    }
}

/// `observed ≤ bound` (or an error, which fails).
fn at_most(
    module: &'static str,
    invariant: &'static str,
    bound: f64,
    observed: anyhow::Result<f64>,
) -> CheckResult {
    let (pass, observed) = match observed {
        Ok(v) => (v <= bound, format!("{v:.3e}")),
        Err(e) => (false, format!("error: {e:#}")),
    };
    CheckResult { module, invariant, pass, observed, bound: format!("≤ {bound:.1e}") }
}

fn random_table(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..=8).map(|_| rng.gen_range(0.0..3.0)).collect()
}

fn profiles_checks(out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let sub = (|| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let d = random_table(&mut rng);
            let norms = (0..=8).map(|j| composite_norm(&d, j)).collect::<Result<Vec<_>, _>>()?;
            for j1 in 1..=8 {
                for j2 in 1..=8 - j1 {
                    if norms[j1 + j2] > 0.0 {
                        worst = worst.max(norms[j1] * norms[j2] / norms[j1 + j2]);
                    }
                }
            }
        }
        Ok(worst - 1.0)
    })();
    out.push(at_most("profiles", "submultiplicativity ‖f‖_a‖f‖_b ≤ ‖f‖_{a+b} (excess)", 1e-12, sub));

    let gbounds = (|| {
        let mut worst = 0.0f64;
        let channel = ChannelConfig::finite(2.0 * PI, 257);
        for spec in [ProfileSpec::bump(0.02, 0.5, 0.2), ProfileSpec::sine(0.05), ProfileSpec::vanishing(0.5, 1)] {
            let p = ShearProfile::build(&spec, &channel)?;
            let g = p.sample_g(&orrlab_core::profiles::channel_nodes(&channel));
            for v in g {
                worst = worst.max(p.bilip_lower - v).max(v - p.bilip_upper);
            }
        }
        Ok(worst.max(0.0))
    })();
    out.push(at_most("profiles", "g samples within bilipschitz bounds (excess)", 1e-12, gbounds));
}

fn spectral_checks(out: &mut Vec<CheckResult>, w: &WeightParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let parseval = (|| {
        let grid = Grid::infinite(8.0, 128)?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let vals: Vec<Complex64> =
                (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = ModeField::new(grid.clone(), 1.0, 0.0, vals)?;
            worst = worst.max((f.l2_norm() - f.spectrum().l2_norm()).abs() / f.l2_norm());
        }
        Ok(worst)
    })();
    out.push(at_most("spectral", "Parseval (relative)", 1e-12, parseval));

    let mut inc = 0.0f64;
    let mut neg_rate = 0.0f64;
    for k in [-2.0, -1.0, 1.0, 3.0] {
        for i in 0..=80 {
            let eta = -20.0 + 0.5 * i as f64;
            for s in 0..200 {
                let t = 0.25 * s as f64;
                let a = a_infinite_factor(k, eta, t, w);
                let b = a_infinite_factor(k, eta, t + 0.25, w);
                inc = inc.max((b - a) / a);
                neg_rate = neg_rate.max(-a_infinite_rate(k, eta, t, w));
            }
        }
    }
    out.push(at_most("spectral", "A(t) non-increasing (max relative increment)", 0.0, Ok(inc)));
    out.push(at_most("spectral", "-dA/dt ≥ 0 (max negative rate)", 0.0, Ok(neg_rate)));

    let wmono = (|| {
        let wi = WeightIntegral::new(w.beta, w.gamma, 0.5)?;
        let mut worst = 0.0f64;
        for a in [-3.0, 0.0, 2.0, 7.5] {
            let mut prev = 0.0;
            for s in 0..=40 {
                let v = wi.value(a, 0.5 * s as f64)?;
                worst = worst.max(prev - v);
                prev = v;
            }
            worst = worst.max(prev - wi.limit(a)?);
        }
        Ok(worst)
    })();
    out.push(at_most("spectral", "W(t) non-decreasing and below its limit", 1e-12, wmono));

    let frozen = (|| {
        let grid = Grid::infinite(10.0, 128)?;
        let u = ModeField::from_fn(grid, 1.0, 0.0, |z| Complex64::new((-z * z).exp(), 0.3 * z * (-z * z).exp()));
        let spec = u.spectrum();
        let mult = Multiplier::Infinite(*w);
        let mut worst = f64::NEG_INFINITY;
        for s in 0..100 {
            let t = 0.2 * s as f64;
            let e0 = mult.quadratic_form(&spec, t)?;
            let e1 = mult.quadratic_form(&spec, t + 0.2)?;
            worst = worst.max((e1 - e0) / (0.2 * hm1t_weight_norm(&spec, t, w).powi(2)));
        }
        Ok(worst)
    })();
    out.push(at_most("spectral", "⟨u, A u⟩ decreasing for frozen u (max rate / H^-1)", 0.0, frozen));
}

fn elliptic_checks(out: &mut Vec<CheckResult>, w: &WeightParams) {
    let round_trip = (|| {
        let mut worst = 0.0f64;
        for channel in [ChannelConfig::finite(2.0 * PI, 257), ChannelConfig::infinite(2.0 * PI, 10.0, 256)] {
            let grid = channel.grid()?;
            let spec = if channel.kind == orrlab_core::ChannelKind::Finite {
                ProfileSpec::sine(0.05)
            } else {
                ProfileSpec::bump(0.05, 0.0, 2.0)
            };
            let p = ShearProfile::build(&spec, &channel)?;
            let op = assemble_conjugated_operator(&p, &grid, 1.0)?;
            let omega = ModeField::from_fn(grid.clone(), 1.0, 3.0, |z| {
                Complex64::new((-(z - 0.5) * (z - 0.5) * 4.0).exp(), 0.0)
            });
            let psi = op.solve(&omega, 3.0)?;
            let back = op.apply(&psi.values, 3.0)?;
            let n = grid.len();
            let range = if grid.kind == orrlab_core::ChannelKind::Finite { 1..n - 1 } else { 0..n };
            for i in range {
                worst = worst.max((back[i] - omega.values[i]).norm());
            }
        }
        Ok(worst)
    })();
    out.push(at_most("elliptic", "solve then apply reproduces ω", 1e-9, round_trip));

    let couette = (|| {
        let channel = ChannelConfig::finite(2.0 * PI, 513);
        let grid = channel.grid()?;
        let p = ShearProfile::build(&ProfileSpec::couette(), &channel)?;
        let omega = ModeField::from_fn(grid.clone(), 1.0, 0.0, |y| Complex64::new((PI * y).sin(), 0.0));
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 0.0)?;
        let d = neumann_data_integral(&omega, &u0, &u1, &p)?;
        Ok((d.neumann_0.re + PI / (1.0 + PI * PI)).abs())
    })();
    out.push(at_most("elliptic", "Couette Neumann data -π/(1+π²)", 1e-4, couette));

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let duality = (|| {
        let grid = Grid::finite(129)?;
        let lam = LambdaSolver::new(&grid, 1.0, w)?;
        let (mut ratio, mut mismatch) = (0.0f64, 0.0f64);
        for i in 0..20 {
            let t = 0.5 * i as f64;
            let mut field = || {
                let c: Vec<Complex64> =
                    (1..=6).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                ModeField::from_fn(grid.clone(), 1.0, t, move |y| {
                    c.iter().enumerate().map(|(m, a)| a * ((m + 1) as f64 * PI * y).sin()).sum()
                })
            };
            let (u, v) = (field(), field());
            let d = lam.dual_norm(&u, t)?;
            ratio = ratio.max(u.inner(&v).norm() / (d.value * h1t_norm_grid(&v, t, w.c_low)));
            mismatch = mismatch.max((d.value - d.via_h1t).abs() / d.value);
        }
        Ok((ratio, mismatch))
    })();
    let (ratio, mismatch) = match duality {
        Ok((r, m)) => (Ok(r - 1.0), Ok(m)),
        Err(e) => (Err(anyhow::anyhow!("{e:#}")), Err(e)),
    };
    out.push(at_most("elliptic", "duality |⟨u,v⟩| ≤ ‖u‖_{-1,t}‖v‖_{1,t} (excess)", 1e-10, ratio));
    out.push(at_most("elliptic", "Λ_t pairing equals ‖Λ_t u‖_{H^1_t}", 1e-8, mismatch));
}

fn evolve_checks(out: &mut Vec<CheckResult>) {
    let couette = (|| {
        let channel = ChannelConfig::finite(2.0 * PI, 129);
        let p = Arc::new(ShearProfile::build(&ProfileSpec::couette(), &channel)?);
        let mut sim =
            Simulation::with_initial_data(p, channel.grid()?, &[1.0], &InitialData::Sine { mode: 2, amplitude: 1.0 })?;
        run(&mut sim, 0.1, 10.0, 100, |_| Ok(()))?;
        Ok(sim.deviation()[0].iter().map(|c| c.norm()).fold(0.0, f64::max))
    })();
    out.push(at_most("evolve", "Couette vorticity frozen", 0.0, couette));

    let conj = (|| {
        let channel = ChannelConfig::infinite(2.0 * PI, 10.0, 128);
        let p = Arc::new(ShearProfile::build(&ProfileSpec::sine(0.05), &channel)?);
        let data = InitialData::Gaussian { center: 0.5, width: 1.0, amplitude: 1.0 };
        let mut sim = Simulation::with_initial_data(p, channel.grid()?, &[1.0, -1.0], &data)?;
        run(&mut sim, 0.05, 2.0, 40, |_| Ok(()))?;
        let (a, b) = (&sim.modes[0].omega.values, &sim.modes[1].omega.values);
        Ok(a.iter().zip(b).map(|(x, y)| (x.conj() - y).norm()).fold(0.0, f64::max))
    })();
    out.push(at_most("evolve", "modes ±k stay complex conjugate", 1e-12, conj));

    let support = (|| {
        let channel = ChannelConfig::finite(2.0 * PI, 257);
        let p = Arc::new(ShearProfile::build(&ProfileSpec::bump(0.02, 0.5, 0.15), &channel)?);
        let data = InitialData::Bump { center: 0.5, width: 0.15, amplitude: 1.0 };
        let mut sim = Simulation::with_initial_data(p, channel.grid()?, &[1.0], &data)?;
        run(&mut sim, 0.05, 5.0, 100, |_| Ok(()))?;
        Ok(sim.support_drift([0.34, 0.66]))
    })();
    out.push(at_most("evolve", "ω - ω₀ supported where f is", 1e-14, support));
}

fn lyapunov_checks(out: &mut Vec<CheckResult>, w: &WeightParams) {
    let ladder = (|| {
        let channel = ChannelConfig::infinite(2.0 * PI, 10.0, 128);
        let p = Arc::new(ShearProfile::build(&ProfileSpec::couette(), &channel)?);
        let data = InitialData::Gaussian { center: 0.0, width: 1.0, amplitude: 1.0 };
        let mut sim = Simulation::with_initial_data(p, channel.grid()?, &[1.0], &data)?;
        let cfg = DiagnosticsConfig { weights: *w, ..DiagnosticsConfig::default() };
        let mut rec = Recorder::new(&sim, cfg)?;
        run(&mut sim, 0.1, 20.0, 2, |s| rec.observe(s))?;
        let l = rec.ladder(1.0)?;
        let rep = monotonicity_report(&l.times, &l.values, 0.0);
        let sandwich = rec.trajectory.column("lower_ratio").unwrap_or_default().iter().all(|v| *v >= 1.0 - 1e-12);
        if !sandwich {
            anyhow::bail!("lower energy sandwich bound violated");
        }
        Ok(rep.iter().map(|r| r.max_increment).fold(f64::NEG_INFINITY, f64::max))
    })();
    out.push(at_most("lyapunov", "Couette energy ladder non-increasing", 1e-12, ladder));

    let fit = (|| {
        let times: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let v: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-2.0)).collect();
        Ok((decay_fit(&times, &v, [1.0, 50.0])?.alpha + 2.0).abs())
    })();
    out.push(at_most("lyapunov", "decay_fit recovers t^-2", 1e-10, fit));
}

fn cli_checks(out: &mut Vec<CheckResult>) {
    let replay = (|| {
        let cfg: RunConfig = serde_json::from_value(json!({
            "schema_version": crate::config::SCHEMA_VERSION,
            "profile": {"name": "sine", "amplitude": 0.02},
            "channel": {"kind": "finite", "n_grid": 65},
            "initial": {"kind": "sine", "mode": 1, "amplitude": 1.0},
            "dt": 0.05, "t_end": 2.0, "snapshot_every": 4,
            "ladder": {"j_max": 2}
        }))?;
        let csv = |c: &RunConfig| -> anyhow::Result<Vec<u8>> {
            let mut buf = Vec::new();
            execute(c)?.trajectory.write_csv(&mut buf)?;
            Ok(buf)
        };
        let first = csv(&cfg)?;
        let again = csv(&cfg)?;
        let materialized = RunConfig::from_json(&execute(&cfg)?.config.to_json())?;
        let stored = csv(&materialized)?;
        Ok(if first == again && first == stored { 0.0 } else { 1.0 })
    })();
    out.push(at_most("cli", "replay and materialized config reproduce series.csv bytes", 0.0, replay));
}

/// The quick suite under the given weight parameters (normally the
/// defaults; the mutation check passes tampered ones).
pub fn quick_with(w: &WeightParams) -> Vec<CheckResult> {
    let mut out = Vec::new();
    profiles_checks(&mut out);
    spectral_checks(&mut out, w);
    elliptic_checks(&mut out, w);
    evolve_checks(&mut out);
    lyapunov_checks(&mut out, w);
    cli_checks(&mut out);
    out
}

pub fn quick() -> Vec<CheckResult> {
    quick_with(&WeightParams::default())
}

pub struct Report {
    pub checks: Vec<CheckResult>,
    pub acceptance: Vec<CriterionResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.acceptance.iter().all(|c| c.pass)
    }
}

pub fn verify(full: bool) -> Report {
    Report { checks: quick(), acceptance: if full { acceptance::run_all() } else { Vec::new() } }
}
