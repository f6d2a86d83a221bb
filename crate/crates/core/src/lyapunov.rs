//! Recursive energy ladders `E_j`, their monotonicity and dissipation checks,
//! algebraic decay fits, Gevrey constants and per-snapshot diagnostics.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{
    homogeneous_solutions, neumann_data_fd, neumann_data_integral, sheared_derivative, LambdaSolver,
};
use crate::error::{OrrError, Result};
use crate::evolve::{Simulation, Snapshot, Trajectory};
use crate::grid::{ChannelKind, Grid};
use crate::profiles::{vanishing_order, CompositeNormTable};
use crate::spectral::{
    hj_norm, hm1t_weight_norm, Multiplier, Spectrum, WeightIntegral, WeightParams,
};

/// `top_j = Σ_k Σ_η A_k(η, t) η^{2j} |ω̂_k(η)|² = ⟨∂^j ω, A ∂^j ω⟩`, `j ≤ j_max`.
pub fn ladder_tops(spectra: &[Spectrum], mult: &Multiplier, t: f64, j_max: usize) -> Result<Vec<f64>> {
    let mut tops = vec![0.0; j_max + 1];
    for spec in spectra {
        for (c, &eta) in spec.coeffs.iter().zip(spec.eta()) {
            let n = c.norm_sqr();
            if n == 0.0 {
                continue;
            }
            let a = mult.factor(spec.k, eta, t)? * n;
            let e2 = eta * eta;
            let mut p = 1.0;
            for top in tops.iter_mut() {
                *top += a * p;
                p *= e2;
            }
        }
    }
    Ok(tops)
}

/// Plain `‖∂^j ω‖²` for `j ≤ j_max`, summed over modes.
pub fn derivative_norms_sq(spectra: &[Spectrum], j_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; j_max + 1];
    for spec in spectra {
        for (j, o) in out.iter_mut().enumerate() {
            *o += spec.weighted_sum(|eta| eta.powi(2 * j as i32));
        }
    }
    out
}

/// Ladder coefficients `4C ‖(f,g)‖_{j}²` for `j < j_max`.
pub fn ladder_coefficients(table: &CompositeNormTable, constant: f64, j_max: usize) -> Result<Vec<f64>> {
    (0..j_max).map(|j| Ok(4.0 * constant * table.pair_norm(j)?.powi(2))).collect()
}

/// `E_0 = top_0`, `E_{j+1} = 2 top_{j+1} + 4C Σ_{j1+j2=j} ‖(f,g)‖_{j1}² E_{j2}`.
pub fn energy_ladder(tops: &[f64], table: &CompositeNormTable, constant: f64) -> Result<Vec<f64>> {
    if tops.is_empty() {
        return Ok(Vec::new());
    }
    let coef = ladder_coefficients(table, constant, tops.len() - 1)?;
    Ok(ladder_from_coefficients(tops, &coef))
}

fn ladder_from_coefficients(tops: &[f64], coef: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(tops.len());
    e.push(tops[0]);
    for j in 0..tops.len() - 1 {
        let lower: f64 = (0..=j).map(|j1| coef[j1] * e[j - j1]).sum();
        e.push(2.0 * tops[j + 1] + lower);
    }
    e
}

/// Ladder values along a run, recomputable for any constant from stored tops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyLadder {
    pub j_max: usize,
    pub constant: f64,
    pub coefficients: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl EnergyLadder {
    pub fn from_tops(
        times: &[f64],
        tops: &[Vec<f64>],
        table: &CompositeNormTable,
        constant: f64,
    ) -> Result<Self> {
        if times.len() != tops.len() {
            return Err(OrrError::LengthMismatch { expected: times.len(), got: tops.len() });
        }
        let j_max = tops.first().map_or(0, |t| t.len() - 1);
        let coefficients = ladder_coefficients(table, constant, j_max)?;
        let values = tops.iter().map(|t| ladder_from_coefficients(t, &coefficients)).collect();
        Ok(EnergyLadder { j_max, constant, coefficients, times: times.to_vec(), values })
    }

    pub fn series(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }
}

/// Number of leading orders `j` whose derivative spectrum keeps less than
/// `tol` of its energy above `frac · η_Nyquist`.
pub fn trusted_orders(spectra: &[Spectrum], j_max: usize, frac: f64, tol: f64) -> usize {
    for j in 0..=j_max {
        let w = |eta: f64| eta.powi(2 * j as i32);
        let mut total = 0.0;
        let mut tail = 0.0;
        for s in spectra {
            let cut = frac * s.grid.nyquist();
            total += s.weighted_sum(w);
            tail += s.weighted_sum(|eta| if eta.abs() > cut { w(eta) } else { 0.0 });
        }
        if total > 0.0 && tail >= tol * total {
            return j;
        }
    }
    j_max + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub j: usize,
    /// Largest `(E_j(t+Δ) - E_j(t)) / E_j(t)` over consecutive snapshots.
    pub max_increment: f64,
    pub first_violation: Option<f64>,
}

/// `values[i][j]` is `E_j` at `times[i]`.
pub fn monotonicity_report(times: &[f64], values: &[Vec<f64>], tol: f64) -> Vec<MonotonicityReport> {
    let j_max = values.first().map_or(0, |v| v.len());
    (0..j_max)
        .map(|j| {
            let mut max_increment = f64::NEG_INFINITY;
            let mut first_violation = None;
            for i in 1..values.len() {
                let (a, b) = (values[i - 1][j], values[i][j]);
                let inc = if a > 0.0 {
                    (b - a) / a
                } else if b > a {
                    f64::INFINITY
                } else {
                    0.0
                };
                max_increment = max_increment.max(inc);
                if inc > tol && first_violation.is_none() {
                    first_violation = Some(times[i]);
                }
            }
            if values.len() < 2 {
                max_increment = 0.0;
            }
            MonotonicityReport { j, max_increment, first_violation }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissipationReport {
    pub times: Vec<f64>,
    pub derivative: Vec<f64>,
    pub residual: Vec<f64>,
    /// Largest `C ≥ 0` keeping `dE_0/dt + C ‖ω‖²_{H^{-1}_t} ≤ 0`; `+∞` when
    /// the dual norm vanishes throughout, negative when `E_0` increases.
    pub c_fit: f64,
    /// Relative error estimate of the centred differences.
    pub fd_error: f64,
}

/// Centred differences of `E_0` compared with `‖ω‖²_{H^{-1}_t}` (`hm1_sq`).
pub fn dissipation_residual(times: &[f64], e0: &[f64], hm1_sq: &[f64]) -> Result<DissipationReport> {
    let n = times.len();
    if e0.len() != n || hm1_sq.len() != n {
        return Err(OrrError::LengthMismatch { expected: n, got: e0.len().min(hm1_sq.len()) });
    }
    if n < 5 {
        return Err(OrrError::CadenceTooCoarse(f64::INFINITY));
    }
    let idx: Vec<usize> = (2..n - 2).collect();
    let d1: Vec<f64> =
        idx.iter().map(|&i| (e0[i + 1] - e0[i - 1]) / (times[i + 1] - times[i - 1])).collect();
    let d2: Vec<f64> =
        idx.iter().map(|&i| (e0[i + 2] - e0[i - 2]) / (times[i + 2] - times[i - 2])).collect();
    let scale = d1.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let err = d1.iter().zip(&d2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 3.0;
    let fd_error = if scale > 0.0 { err / scale } else { 0.0 };
    if fd_error > 0.1 {
        return Err(OrrError::CadenceTooCoarse(fd_error));
    }
    let mut c_fit = f64::INFINITY;
    for (k, &i) in idx.iter().enumerate() {
        let h = hm1_sq[i];
        if h > 0.0 {
            c_fit = c_fit.min(-d1[k] / h);
        } else if d1[k] > 0.0 {
            c_fit = f64::NEG_INFINITY;
        }
    }
    let c_res = if c_fit.is_finite() { c_fit } else { 0.0 };
    let residual = idx.iter().zip(&d1).map(|(&i, d)| d + c_res * hm1_sq[i]).collect();
    Ok(DissipationReport {
        times: idx.iter().map(|&i| times[i]).collect(),
        derivative: d1,
        residual,
        c_fit,
        fd_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub count: usize,
}

/// Least-squares fit `log v = α log t + b` over `t ∈ [a, b]`.
pub fn decay_fit(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let [a, b] = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= a && t <= b {
            if !(v > 0.0) || !(t > 0.0) {
                return Err(OrrError::NonPositive { t, value: v });
            }
            xs.push(t.ln());
            ys.push(v.ln());
        }
    }
    let count = xs.len();
    if count < 2 {
        return Err(OrrError::EmptyWindow { a, b, count });
    }
    let nf = count as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(OrrError::EmptyWindow { a, b, count: 1 });
    }
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let residual =
        (xs.iter().zip(&ys).map(|(x, y)| (y - alpha * x - intercept).powi(2)).sum::<f64>() / nf).sqrt();
    Ok(DecayFit { alpha, intercept, residual, count })
}

/// Smallest `C` with `norms[j] ≤ C^{1+j} (1+j)^{js}` for every `j`.
pub fn gevrey_constant_fit(norms: &[f64], s: f64) -> f64 {
    norms
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let jf = j as f64;
            (n / (1.0 + jf).powf(jf * s)).powf(1.0 / (1.0 + jf))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevreyFit {
    pub s: f64,
    pub times: Vec<f64>,
    pub constants: Vec<f64>,
}

impl GevreyFit {
    /// `norms[i][j] = ‖ω(t_i)‖_{H^j}`.
    pub fn new(s: f64, times: &[f64], norms: &[Vec<f64>]) -> Self {
        GevreyFit { s, times: times.to_vec(), constants: norms.iter().map(|n| gevrey_constant_fit(n, s)).collect() }
    }

    /// `max_t C(t) / C(0)`.
    pub fn max_ratio(&self) -> f64 {
        let c0 = self.constants.first().copied().unwrap_or(0.0);
        if c0 == 0.0 {
            return if self.constants.iter().all(|c| *c == 0.0) { 1.0 } else { f64::INFINITY };
        }
        self.constants.iter().fold(0.0f64, |m, c| m.max(c / c0))
    }
}

/// `log Σ_k Σ_η exp(λ⟨ξ⟩^{1/s}) |f̂|²`, `⟨ξ⟩ = sqrt(1 + k² + η²)`, per `λ`.
pub fn gevrey_radius_scan(spectra: &[Spectrum], s: f64, lambdas: &[f64]) -> Vec<(f64, f64)> {
    lambdas
        .iter()
        .map(|&lambda| {
            let terms: Vec<f64> = spectra
                .iter()
                .flat_map(|sp| {
                    sp.coeffs.iter().zip(sp.eta()).filter(|(c, _)| c.norm_sqr() > 0.0).map(move |(c, &eta)| {
                        let xi = (1.0 + sp.k * sp.k + eta * eta).sqrt();
                        lambda * xi.powf(1.0 / s) + c.norm_sqr().ln()
                    })
                })
                .collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = if m == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
            };
            (lambda, log_sum)
        })
        .collect()
}

/// Log-log growth slope of `‖ω(t)‖_{H²}` over a window.
pub fn boundary_trace_growth(times: &[f64], h2: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    decay_fit(times, h2, window)
}

/// Grid `H²` norm on the finite channel from second-order differences:
/// `(1+k²)²‖ω‖² + 2(1+k²)‖∂ω‖² + ‖∂²ω‖²`.
pub fn h2_norm_grid(grid: &Grid, k: f64, omega: &[Complex64]) -> f64 {
    let n = omega.len();
    let h = grid.h;
    let d1: Vec<Complex64> = (0..n)
        .map(|i| {
            if i == 0 {
                (omega[0] * -3.0 + omega[1] * 4.0 - omega[2]) / (2.0 * h)
            } else if i == n - 1 {
                (omega[n - 1] * 3.0 - omega[n - 2] * 4.0 + omega[n - 3]) / (2.0 * h)
            } else {
                (omega[i + 1] - omega[i - 1]) / (2.0 * h)
            }
        })
        .collect();
    let d2: Vec<Complex64> = (0..n)
        .map(|i| {
            let j = i.clamp(1, n - 2);
            let c = (omega[j - 1] - omega[j] * 2.0 + omega[j + 1]) / (h * h);
            if i == j {
                c
            } else {
                // second-order one-sided at the walls
                let s = if i == 0 { [0, 1, 2, 3] } else { [n - 1, n - 2, n - 3, n - 4] };
                (omega[s[0]] * 2.0 - omega[s[1]] * 5.0 + omega[s[2]] * 4.0 - omega[s[3]]) / (h * h)
            }
        })
        .collect();
    let a = 1.0 + k * k;
    (a * a * grid.l2_norm(omega).powi(2) + 2.0 * a * grid.l2_norm(&d1).powi(2) + grid.l2_norm(&d2).powi(2))
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    /// `min_j E_j / (w_j a_min ‖∂^jω‖²)` with `w_0 = 1`, `w_j = 2`.
    pub lower_ratio: f64,
    /// `max_j (E_j - ladder terms) / (w_j a_max ‖∂^jω‖²)`.
    pub upper_ratio: f64,
}

impl SandwichCheck {
    pub fn holds(&self) -> bool {
        self.lower_ratio >= 1.0 - 1e-12 && self.upper_ratio <= 1.0 + 1e-12
    }
}

/// Checks `w_j a_min ‖∂^jω‖² ≤ E_j ≤ w_j a_max ‖∂^jω‖² + ladder terms`.
pub fn sandwich_check(
    energies: &[f64],
    plain: &[f64],
    coefficients: &[f64],
    a_min: f64,
    a_max: f64,
) -> SandwichCheck {
    let mut lower_ratio = f64::INFINITY;
    let mut upper_ratio: f64 = 0.0;
    for j in 0..energies.len() {
        let w = if j == 0 { 1.0 } else { 2.0 };
        let lower_terms: f64 =
            if j == 0 { 0.0 } else { (0..j).map(|j1| coefficients[j1] * energies[j - 1 - j1]).sum() };
        if plain[j] > 0.0 {
            lower_ratio = lower_ratio.min(energies[j] / (w * a_min * plain[j]));
            upper_ratio = upper_ratio.max((energies[j] - lower_terms) / (w * a_max * plain[j]));
        }
    }
    SandwichCheck { lower_ratio, upper_ratio }
}

/// Ratios `-∂_t⟨u, A u⟩ / Σ_η weight(η, t) |û|²` for a frozen spectrum at the
/// given times, with `∂_t` by a centred difference of step `dt`.
pub fn frozen_dissipation_ratios(
    spec: &Spectrum,
    mult: &Multiplier,
    times: &[f64],
    dt: f64,
    weight: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let lo = (t - dt).max(0.0);
            let hi = t + dt;
            let rate = -(mult.quadratic_form(spec, hi)? - mult.quadratic_form(spec, lo)?) / (hi - lo);
            let w = spec.weighted_sum(|eta| weight(eta, t));
            Ok(if w > 0.0 { rate / w } else { f64::INFINITY })
        })
        .collect()
}

/// Dissipation weight of the finite-channel multiplier:
/// `1/(1+(η/k-t)²) + ⟨t⟩^{-2β} (1+(η/k-t)²)^{-2γ}`.
pub fn finite_dissipation_weight(k: f64, eta: f64, t: f64, w: &WeightParams) -> f64 {
    let x = 1.0 + (eta / k - t).powi(2);
    1.0 / x + (1.0 + t * t).powf(-w.beta) * x.powf(-2.0 * w.gamma)
}

/// What a [`Recorder`] evaluates at each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub j_max: usize,
    pub ladder_constant: f64,
    pub weights: WeightParams,
    /// Spacing of the cached stations of the finite-channel weight integral.
    pub station: f64,
    pub tail_fraction: f64,
    pub tail_tolerance: f64,
    pub support_interval: Option<[f64; 2]>,
    pub vanish_order: Option<usize>,
    /// Keep the field samples of every `snapshot_stride`-th observation
    /// (`0` keeps none).
    pub snapshot_stride: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            j_max: 4,
            ladder_constant: 1.0,
            weights: WeightParams::default(),
            station: 0.1,
            tail_fraction: 0.8,
            tail_tolerance: 0.01,
            support_interval: None,
            vanish_order: None,
            snapshot_stride: 0,
        }
    }
}

/// Evaluates per-snapshot diagnostics and accumulates them in a
/// [`Trajectory`].
pub struct Recorder {
    pub config: DiagnosticsConfig,
    pub table: CompositeNormTable,
    pub coefficients: Vec<f64>,
    pub trajectory: Trajectory,
    pub weight_integral: Option<Arc<WeightIntegral>>,
    lambda: Vec<LambdaSolver>,
    kind: ChannelKind,
    n_modes: usize,
    observed: usize,
    cached_bounds: (f64, f64),
    /// `(time, tops)` per snapshot.
    pub tops: Vec<Vec<f64>>,
    /// `‖ω‖_{H^j}` (inhomogeneous) per snapshot.
    pub sobolev: Vec<Vec<f64>>,
}

impl Recorder {
    pub fn new(sim: &Simulation, config: DiagnosticsConfig) -> Result<Self> {
        config.weights.validate()?;
        let table = sim.profile.composite_table()?;
        if config.j_max > table.j_max + 1 {
            return Err(OrrError::IndexOutOfRange { index: config.j_max, max: table.j_max + 1 });
        }
        let coefficients = ladder_coefficients(&table, config.ladder_constant, config.j_max)?;
        let kind = sim.grid.kind;
        let (weight_integral, lambda) = match kind {
            ChannelKind::Finite => {
                let wi = Arc::new(WeightIntegral::from_params(&config.weights, config.station)?);
                let lam = sim
                    .modes
                    .iter()
                    .map(|m| LambdaSolver::new(&sim.grid, m.k(), &config.weights))
                    .collect::<Result<Vec<_>>>()?;
                (Some(wi), lam)
            }
            ChannelKind::Infinite => (None, Vec::new()),
        };
        let n_modes = sim.modes.len();
        let j = config.j_max;
        let mut columns = vec!["t".to_string(), "l2".to_string()];
        columns.extend((0..=j).map(|i| format!("h{i}")));
        columns.extend((0..=j).map(|i| format!("top{i}")));
        columns.extend((0..=j).map(|i| format!("E{i}")));
        columns.extend(
            ["psi_l2", "dpsi_l2", "hm1_sq", "trusted_orders", "lower_ratio", "upper_ratio"]
                .iter()
                .map(|s| s.to_string()),
        );
        if kind == ChannelKind::Finite {
            columns.extend(
                ["neumann0", "neumann1", "neumann0_fd", "neumann1_fd", "fpsi_trace0", "fpsi_trace1", "h2_grid"]
                    .iter()
                    .map(|s| s.to_string()),
            );
        }
        if config.support_interval.is_some() {
            columns.push("support_drift".into());
        }
        if config.vanish_order.is_some() {
            columns.push("vanish_ok".into());
        }
        if n_modes > 1 {
            for m in 0..n_modes {
                columns.extend((0..=j).map(|i| format!("h{i}_m{m}")));
                columns.push(format!("psi_l2_m{m}"));
            }
        }
        Ok(Recorder {
            config,
            table,
            coefficients,
            trajectory: Trajectory::new(columns),
            weight_integral,
            lambda,
            kind,
            n_modes,
            observed: 0,
            cached_bounds: (0.0, 0.0),
            tops: Vec::new(),
            sobolev: Vec::new(),
        })
    }

    pub fn multiplier(&self) -> Multiplier<'_> {
        match &self.weight_integral {
            Some(wi) => Multiplier::Finite(wi),
            None => Multiplier::Infinite(self.config.weights),
        }
    }

    /// Bounds `(a_min, a_max)` of the multiplier.
    pub fn multiplier_bounds(&self, spectra: &[Spectrum]) -> Result<(f64, f64)> {
        use std::f64::consts::FRAC_PI_2;
        match &self.weight_integral {
            None => {
                let c = self.config.weights.c_exp;
                Ok(((-c * FRAC_PI_2).exp(), (c * FRAC_PI_2).exp()))
            }
            Some(wi) => {
                let rays = spectra.iter().flat_map(|s| s.eta().iter().map(move |&e| e / s.k));
                let sup = wi.sup_limit(rays)?;
                Ok(((-FRAC_PI_2 - sup).exp(), FRAC_PI_2.exp()))
            }
        }
    }

    pub fn observe(&mut self, sim: &Simulation) -> Result<()> {
        let t = sim.t;
        let j_max = self.config.j_max;
        let spectra: Vec<Spectrum> = sim.modes.iter().map(|m| m.omega.spectrum()).collect();
        let mult = self.multiplier();
        let tops = ladder_tops(&spectra, &mult, t, j_max)?;
        let energies = ladder_from_coefficients(&tops, &self.coefficients);
        let plain = derivative_norms_sq(&spectra, j_max);
        let bounds = if self.observed == 0 || self.kind == ChannelKind::Infinite {
            self.multiplier_bounds(&spectra)?
        } else {
            self.cached_bounds
        };
        self.cached_bounds = bounds;
        let sandwich = sandwich_check(&energies, &plain, &self.coefficients, bounds.0, bounds.1);

        let per_mode_h: Vec<Vec<f64>> = spectra
            .iter()
            .map(|s| (0..=j_max).map(|j| hj_norm(s, j as i32, false)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let h: Vec<f64> = (0..=j_max)
            .map(|j| per_mode_h.iter().map(|v| v[j] * v[j]).sum::<f64>().sqrt())
            .collect();

        let psi = sim.stream()?;
        let psi_l2: Vec<f64> = psi.iter().map(|p| p.l2_norm()).collect();
        let dpsi_l2 = psi
            .iter()
            .map(|p| sim.grid.l2_norm(&sheared_derivative(p, t)).powi(2))
            .sum::<f64>()
            .sqrt();
        let hm1_sq = match self.kind {
            ChannelKind::Infinite => {
                spectra.iter().map(|s| hm1t_weight_norm(s, t, &self.config.weights).powi(2)).sum()
            }
            ChannelKind::Finite => {
                let mut acc = 0.0;
                for (lam, m) in self.lambda.iter().zip(&sim.modes) {
                    acc += lam.dual_norm(&m.omega, t)?.value.powi(2);
                }
                acc
            }
        };

        let mut row = vec![t, sim.l2_norm()];
        row.extend(&h);
        row.extend(&tops);
        row.extend(&energies);
        row.extend([
            psi_l2.iter().map(|v| v * v).sum::<f64>().sqrt(),
            dpsi_l2,
            hm1_sq,
            trusted_orders(&spectra, j_max, self.config.tail_fraction, self.config.tail_tolerance) as f64,
            sandwich.lower_ratio,
            sandwich.upper_ratio,
        ]);
        if self.kind == ChannelKind::Finite {
            let mut n_int = [0.0; 2];
            let mut n_fd = [0.0; 2];
            let mut fpsi = [0.0; 2];
            let f0 = sim.profile.f_at(0.0);
            let f1 = sim.profile.f_at(1.0);
            let per_mode: Vec<_> = sim
                .modes
                .par_iter()
                .zip(&psi)
                .map(|(m, p)| -> Result<_> {
                    let (u0, u1) = homogeneous_solutions(&sim.profile, &sim.grid, m.k(), t)?;
                    let int = neumann_data_integral(&m.omega, &u0, &u1, &sim.profile)?;
                    let fd = neumann_data_fd(p)?;
                    Ok((m.k(), int, fd))
                })
                .collect::<Result<_>>()?;
            for (k, int, fd) in per_mode {
                n_int[0] += int.neumann_0.norm_sqr();
                n_int[1] += int.neumann_1.norm_sqr();
                n_fd[0] += fd.neumann_0.norm_sqr();
                n_fd[1] += fd.neumann_1.norm_sqr();
                fpsi[0] += (k * f0 * int.neumann_0.norm()).powi(2);
                fpsi[1] += (k * f1 * int.neumann_1.norm()).powi(2);
            }
            let h2 = sim
                .modes
                .iter()
                .map(|m| h2_norm_grid(&sim.grid, m.k(), &m.omega.values).powi(2))
                .sum::<f64>()
                .sqrt();
            row.extend(n_int.iter().chain(&n_fd).chain(&fpsi).map(|v| v.sqrt()));
            row.push(h2);
        }
        if let Some(interval) = self.config.support_interval {
            row.push(sim.support_drift(interval));
        }
        if let Some(order) = self.config.vanish_order {
            let mut ok = true;
            for dev in sim.deviation() {
                ok &= vanishing_order(&dev, order, 1e-6)?.iter().all(|b| *b);
            }
            row.push(if ok { 1.0 } else { 0.0 });
        }
        if self.n_modes > 1 {
            for (hm, p) in per_mode_h.iter().zip(&psi_l2) {
                row.extend(hm);
                row.push(*p);
            }
        }
        self.trajectory.push(row)?;
        let stride = self.config.snapshot_stride;
        if stride > 0 && self.observed % stride == 0 {
            self.trajectory.snapshots.push(Snapshot::of(sim));
        }
        self.observed += 1;
        self.tops.push(tops);
        self.sobolev.push(h);
        Ok(())
    }

    pub fn ladder(&self, constant: f64) -> Result<EnergyLadder> {
        EnergyLadder::from_tops(&self.trajectory.times(), &self.tops, &self.table, constant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{run, InitialData};
    use crate::grid::Grid;
    use crate::profiles::{ChannelConfig, ProfileSpec, ShearProfile};
    use std::f64::consts::PI;

    fn couette_table() -> CompositeNormTable {
        let mut g = vec![0.0; 9];
        g[0] = 1.0;
        CompositeNormTable::new(&[0.0; 9], &g, 8).unwrap()
    }

    fn box_spectrum(k: f64, entries: &[(f64, f64)]) -> Spectrum {
        let grid = Grid::infinite(PI, 32).unwrap();
        let coeffs = grid
            .eta()
            .iter()
            .map(|&eta| {
                let v = entries.iter().find(|(e, _)| *e == eta).map_or(0.0, |(_, c)| *c);
                Complex64::new(v, 0.0)
            })
            .collect();
        Spectrum::from_coeffs(grid, k, 0.0, coeffs).unwrap()
    }

    #[test]
    fn zero_field_has_zero_ladder() {
        let s = box_spectrum(1.0, &[]);
        let w = WeightParams::default();
        let tops = ladder_tops(&[s], &Multiplier::Infinite(w), 3.0, 4).unwrap();
        let e = energy_ladder(&tops, &couette_table(), 1.0).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn critical_time_has_unit_multiplier() {
        let s = box_spectrum(1.0, &[(2.0, 0.5)]);
        let w = WeightParams::default();
        let tops = ladder_tops(&[s], &Multiplier::Infinite(w), 2.0, 0).unwrap();
        assert!((tops[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn first_ladder_rung_by_hand() {
        // two coefficients at η = 1 and η = -2, t = 0, k = 1, c = 1/2, C = 1
        let s = box_spectrum(1.0, &[(1.0, 1.0), (-2.0, 0.5)]);
        let w = WeightParams::default();
        let tops = ladder_tops(&[s], &Multiplier::Infinite(w), 0.0, 1).unwrap();
        let a1 = (0.5 * 1f64.atan()).exp();
        let a2 = (0.5 * (-2f64).atan()).exp();
        let e0 = a1 + 0.25 * a2;
        let top1 = a1 + 0.25 * a2 * 4.0;
        // Couette: ‖(f,g)‖_0 = (1 + 0)(1 + 1) = 2
        let e = energy_ladder(&tops, &couette_table(), 1.0).unwrap();
        assert!((e[0] - e0).abs() < 1e-14);
        assert!((e[1] - (2.0 * top1 + 4.0 * 4.0 * e0)).abs() < 1e-13);
    }

    #[test]
    fn decay_fit_recovers_power_law() {
        let t: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * t.powi(-2)).collect();
        let fit = decay_fit(&t, &v, [10.0, 100.0]).unwrap();
        assert!((fit.alpha + 2.0).abs() < 1e-12);
        assert_eq!(fit.count, 91);
        let zeros = vec![0.0; 100];
        assert!(matches!(decay_fit(&t, &zeros, [10.0, 100.0]), Err(OrrError::NonPositive { .. })));
        assert!(matches!(decay_fit(&t, &v, [200.0, 300.0]), Err(OrrError::EmptyWindow { .. })));
    }

    #[test]
    fn gevrey_fit_examples() {
        assert_eq!(gevrey_constant_fit(&[1.0; 5], 1.0), 1.0);
        let norms: Vec<f64> =
            (0..5).map(|j| 2f64.powi(1 + j) * (1.0 + j as f64).powi(j)).collect();
        assert!((gevrey_constant_fit(&norms, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn radius_scan_examples() {
        let s = box_spectrum(1.0, &[(1.0, 1.0), (-2.0, 0.5)]);
        let scan = gevrey_radius_scan(std::slice::from_ref(&s), 1.0, &[0.0, 1.0, 100.0]);
        assert!((scan[0].1.exp() - 1.25).abs() < 1e-14);
        assert!(scan[1].1 < scan[2].1 && scan[2].1.is_finite());
        let z = box_spectrum(1.0, &[]);
        assert_eq!(gevrey_radius_scan(&[z], 1.0, &[1.0])[0].1, f64::NEG_INFINITY);
    }

    #[test]
    fn radius_scan_threshold_on_exponential_tail() {
        // |f̂(η)|² = e^{-2|η|}: finite for λ < 2, bandwidth-dependent above
        let scan_at = |n: usize, lambda: f64| {
            let grid = Grid::infinite(PI, n).unwrap();
            let coeffs = grid.eta().iter().map(|e| Complex64::new((-e.abs()).exp(), 0.0)).collect();
            let s = Spectrum::from_coeffs(grid, 1e-9, 0.0, coeffs).unwrap();
            gevrey_radius_scan(&[s], 1.0, &[lambda])[0].1
        };
        assert!((scan_at(64, 1.0) - scan_at(128, 1.0)).abs() < 1e-10);
        assert!(scan_at(128, 3.0) - scan_at(64, 3.0) > 10.0);
    }

    #[test]
    fn monotonicity_flags_increase() {
        let times = [0.0, 1.0, 2.0];
        let vals = vec![vec![1.0, 2.0], vec![0.9, 2.2], vec![0.8, 2.1]];
        let r = monotonicity_report(&times, &vals, 1e-8);
        assert!(r[0].max_increment < 0.0 && r[0].first_violation.is_none());
        assert!((r[1].max_increment - 0.1).abs() < 1e-12);
        assert_eq!(r[1].first_violation, Some(1.0));
    }

    #[test]
    fn dissipation_of_zero_field() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let z = vec![0.0; 10];
        let r = dissipation_residual(&t, &z, &z).unwrap();
        assert_eq!(r.c_fit, f64::INFINITY);
        assert!(r.residual.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dissipation_matches_single_mode_derivative() {
        // frozen single coefficient: E_0 = exp(c atan(η - t)), H = 1/(1 + (η - t)²)
        let c = 0.5;
        let eta = 5.0;
        let t: Vec<f64> = (0..=400).map(|i| i as f64 * 0.025).collect();
        let e0: Vec<f64> = t.iter().map(|t| (c * (eta - t).atan()).exp()).collect();
        let h: Vec<f64> = t.iter().map(|t| 1.0 / (1.0 + (eta - t).powi(2))).collect();
        let r = dissipation_residual(&t, &e0, &h).unwrap();
        for (i, &ti) in r.times.iter().enumerate() {
            let exact = -c * (c * (eta - ti).atan()).exp() / (1.0 + (eta - ti).powi(2));
            assert!((r.derivative[i] - exact).abs() < 5e-4);
        }
        assert!((r.c_fit - c * (-c * PI / 2.0).exp()).abs() < 0.05);
        let coarse: Vec<f64> = t.iter().step_by(80).copied().collect();
        let e_coarse: Vec<f64> = e0.iter().step_by(80).copied().collect();
        let h_coarse: Vec<f64> = h.iter().step_by(80).copied().collect();
        assert!(dissipation_residual(&coarse, &e_coarse, &h_coarse).is_err());
    }

    #[test]
    fn finite_weight_frozen_dissipation_positive() {
        let grid = Grid::finite(65).unwrap();
        let u = crate::spectral::ModeField::from_fn(grid, 2.0 * PI, 0.0, |z| {
            Complex64::new((-(z - 0.5).powi(2) * 40.0).exp(), 0.0)
        });
        let spec = u.spectrum();
        let w = WeightParams::default();
        let wi = WeightIntegral::from_params(&w, 0.05).unwrap();
        let times: Vec<f64> = (1..20).map(|i| i as f64 * 0.5).collect();
        let ratios = frozen_dissipation_ratios(&spec, &Multiplier::Finite(&wi), &times, 1e-3, |eta, t| {
            finite_dissipation_weight(spec.k, eta, t, &w)
        })
        .unwrap();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(lo > 0.0, "{ratios:?}");
    }

    #[test]
    fn couette_run_ladder_is_nonincreasing() {
        let ch = ChannelConfig::infinite(2.0 * PI, 10.0, 128);
        let p = Arc::new(ShearProfile::build(&ProfileSpec::couette(), &ch).unwrap());
        let data = InitialData::Gaussian { center: 0.0, width: 1.0, amplitude: 1.0 };
        let mut sim = Simulation::with_initial_data(p, ch.grid().unwrap(), &[1.0], &data).unwrap();
        let mut rec = Recorder::new(&sim, DiagnosticsConfig::default()).unwrap();
        run(&mut sim, 0.05, 5.0, 4, |s| rec.observe(s)).unwrap();
        let ladder = rec.ladder(1.0).unwrap();
        for r in monotonicity_report(&ladder.times, &ladder.values, 0.0) {
            assert!(r.first_violation.is_none(), "{r:?}");
        }
        let lower = rec.trajectory.column("lower_ratio").unwrap();
        let upper = rec.trajectory.column("upper_ratio").unwrap();
        assert!(lower.iter().all(|v| *v >= 1.0) && upper.iter().all(|v| *v <= 1.0 + 1e-12));
    }
}
