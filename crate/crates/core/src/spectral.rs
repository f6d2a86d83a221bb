//! Mode-resolved fields, transforms, Sobolev and time-adapted dual norms and
//! the arctan multiplier weights `A(t)`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OrrError, Result};
use crate::grid::{ChannelKind, Grid};
use crate::quadrature;

/// Samples of one x-Fourier mode `k` on the z-grid.
#[derive(Debug, Clone)]
pub struct ModeField {
    pub k: f64,
    pub t: f64,
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl ModeField {
    pub fn new(grid: Arc<Grid>, k: f64, t: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(OrrError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(ModeField { k, t, grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, k: f64, t: f64, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.z.iter().map(|&z| f(z)).collect();
        ModeField { k, t, grid, values }
    }

    pub fn zeros(grid: Arc<Grid>, k: f64, t: f64) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        ModeField { k, t, grid, values }
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            k: self.k,
            t: self.t,
            coeffs: self.grid.forward(&self.values),
            grid: self.grid.clone(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    pub fn inner(&self, other: &ModeField) -> Complex64 {
        self.grid.inner(&self.values, &other.values)
    }
}

/// Unitary Fourier coefficients of a [`ModeField`] (see [`crate::grid`] for
/// the normalization).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub k: f64,
    pub t: f64,
    pub grid: Arc<Grid>,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_coeffs(grid: Arc<Grid>, k: f64, t: f64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_periodic() {
            return Err(OrrError::LengthMismatch { expected: grid.n_periodic(), got: coeffs.len() });
        }
        Ok(Spectrum { k, t, grid, coeffs })
    }

    pub fn eta(&self) -> &[f64] {
        self.grid.eta()
    }

    pub fn to_field(&self) -> ModeField {
        ModeField {
            k: self.k,
            t: self.t,
            grid: self.grid.clone(),
            values: self.grid.inverse(&self.coeffs),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ_η w(η) |c_η|²`.
    pub fn weighted_sum(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.eta())
            .map(|(c, &eta)| w(eta) * c.norm_sqr())
            .sum()
    }

    /// Pointwise multiplication by `m(η)`.
    pub fn map(&self, m: impl Fn(f64) -> Complex64) -> Spectrum {
        let coeffs = self.coeffs.iter().zip(self.eta()).map(|(c, &eta)| c * m(eta)).collect();
        Spectrum { coeffs, ..self.clone() }
    }

    /// Spectrum of `∂_z^j u`.
    pub fn derivative(&self, j: u32) -> Spectrum {
        self.map(|eta| Complex64::new(0.0, eta).powu(j))
    }

    /// `Σ conj(a_η) b_η`, the L² pairing by Parseval.
    pub fn inner(&self, other: &Spectrum) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }

    /// Fraction of `‖u‖²` carried by `|η| > frac · η_Nyquist`.
    pub fn tail_fraction(&self, frac: f64) -> f64 {
        let cut = frac * self.grid.nyquist();
        let total = self.l2_norm().powi(2);
        if total == 0.0 {
            return 0.0;
        }
        self.weighted_sum(|eta| if eta.abs() > cut { 1.0 } else { 0.0 }) / total
    }
}

pub fn to_spectrum(field: &ModeField) -> Spectrum {
    field.spectrum()
}

pub fn from_spectrum(spectrum: &Spectrum) -> ModeField {
    spectrum.to_field()
}

/// Multiplier and norm constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    /// Exponent `c ∈ (0,1)` of the infinite-channel arctan weight.
    pub c_exp: f64,
    /// Lower bound `C` of `g` used in `H^1_t` and `H^{-1}_t`.
    pub c_low: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams { c_exp: 0.5, c_low: 1.0, beta: 0.25, gamma: 0.25, delta: 0.1 }
    }
}

impl WeightParams {
    pub fn new(c_exp: f64, c_low: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let w = WeightParams { c_exp, c_low, beta, gamma, delta };
        w.validate()?;
        Ok(w)
    }

    /// Bypasses validation; used by mutation checks that deliberately break
    /// the weight.
    #[doc(hidden)]
    pub fn unchecked(c_exp: f64, c_low: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        WeightParams { c_exp, c_low, beta, gamma, delta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OrrError::InvalidParameter(m));
        if !(self.c_exp > 0.0 && self.c_exp < 1.0) {
            return bad(format!("c_exp = {} must lie in (0,1)", self.c_exp));
        }
        if !(self.c_low > 0.0) {
            return bad(format!("c_low = {} must be positive", self.c_low));
        }
        if !(self.beta > 0.0 && self.gamma > 0.0) {
            return bad(format!("beta = {}, gamma = {} must be positive", self.beta, self.gamma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0,1)", self.delta));
        }
        Ok(())
    }
}

/// `‖u‖_{H^j}`: `Σ (k²+η²)^j |û|²` (homogeneous) or `Σ (1+k²+η²)^j |û|²`.
pub fn hj_norm(spec: &Spectrum, j: i32, homogeneous: bool) -> Result<f64> {
    if j < 0 {
        return Err(OrrError::NegativeSobolevIndex(j));
    }
    let base = if homogeneous { spec.k * spec.k } else { 1.0 + spec.k * spec.k };
    Ok(spec.weighted_sum(|eta| (base + eta * eta).powi(j)).sqrt())
}

/// `‖u‖_{H^1_t}² = Σ (k² + C²(η-kt)²) |û|²`.
pub fn h1t_norm(spec: &Spectrum, t: f64, w: &WeightParams) -> f64 {
    let k = spec.k;
    let c2 = w.c_low * w.c_low;
    spec.weighted_sum(|eta| k * k + c2 * (eta - k * t).powi(2)).sqrt()
}

/// `‖u‖_{H^{-1}_t}² = Σ |û|² / (k² + C²(η-kt)²)`.
pub fn hm1t_weight_norm(spec: &Spectrum, t: f64, w: &WeightParams) -> f64 {
    let k = spec.k;
    let c2 = w.c_low * w.c_low;
    spec.weighted_sum(|eta| 1.0 / (k * k + c2 * (eta - k * t).powi(2))).sqrt()
}

/// Couette velocity multiplier `k / (k² + (η - kt)²)`.
pub fn orr_multiplier(k: f64, eta: f64, t: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(OrrError::ZeroWavenumber);
    }
    Ok(k / (k * k + (eta - k * t).powi(2)))
}

/// Infinite-channel weight `exp(c · sgn(k) · arctan(C(η - kt)))`.
///
/// The `sgn(k)` keeps the weight non-increasing in `t` for negative modes and
/// makes `A_{-k}(-η) = A_k(η)`.
pub fn a_infinite_factor(k: f64, eta: f64, t: f64, w: &WeightParams) -> f64 {
    (w.c_exp * k.signum() * (w.c_low * (eta - k * t)).atan()).exp()
}

/// `-∂_t` of [`a_infinite_factor`].
pub fn a_infinite_rate(k: f64, eta: f64, t: f64, w: &WeightParams) -> f64 {
    let x = w.c_low * (eta - k * t);
    a_infinite_factor(k, eta, t, w) * w.c_exp * w.c_low * k.abs() / (1.0 + x * x)
}

pub fn apply_a_infinite(spec: &Spectrum, t: f64, w: &WeightParams) -> Spectrum {
    let k = spec.k;
    spec.map(|eta| Complex64::new(a_infinite_factor(k, eta, t, w), 0.0))
}

/// The time integral `W(t; a) = ∫_0^t ⟨τ⟩^{-2β} (1 + (a - τ)²)^{-2γ} dτ`,
/// cached per ray `a = η/k` as cumulative values at uniformly spaced
/// stations; values between stations add the exact remainder integral.
#[derive(Debug)]
pub struct WeightIntegral {
    pub beta: f64,
    pub gamma: f64,
    station: f64,
    tol: f64,
    cache: Mutex<HashMap<u64, Vec<f64>>>,
}

impl WeightIntegral {
    pub fn new(beta: f64, gamma: f64, station: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma > 0.0) {
            return Err(OrrError::InvalidParameter(format!(
                "beta = {beta}, gamma = {gamma} must be positive"
            )));
        }
        if !(station > 0.0) {
            return Err(OrrError::InvalidParameter(format!("station spacing {station} <= 0")));
        }
        Ok(WeightIntegral { beta, gamma, station, tol: 1e-9, cache: Mutex::new(HashMap::new()) })
    }

    pub fn from_params(w: &WeightParams, station: f64) -> Result<Self> {
        Self::new(w.beta, w.gamma, station)
    }

    /// Integrand `⟨τ⟩^{-2β} (1 + (a - τ)²)^{-2γ}`, i.e. `∂_t W`.
    pub fn rate(&self, a: f64, tau: f64) -> f64 {
        (1.0 + tau * tau).powf(-self.beta) * (1.0 + (a - tau).powi(2)).powf(-2.0 * self.gamma)
    }

    fn piece(&self, a: f64, lo: f64, hi: f64) -> Result<f64> {
        quadrature::integrate(|tau| self.rate(a, tau), lo, hi, self.tol * 1e-3)
    }

    pub fn value(&self, a: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(OrrError::InvalidParameter(format!("weight integral at t = {t} < 0")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let idx = (t / self.station).floor() as usize;
        let base = {
            let mut cache = self.cache.lock().expect("weight cache poisoned");
            let entry = cache.entry(a.to_bits()).or_insert_with(|| vec![0.0]);
            while entry.len() <= idx {
                let i = entry.len();
                let lo = (i - 1) as f64 * self.station;
                let hi = i as f64 * self.station;
                let next = entry[i - 1] + self.piece(a, lo, hi)?;
                entry.push(next);
            }
            entry[idx]
        };
        let s = idx as f64 * self.station;
        Ok(base + self.piece(a, s, t)?)
    }

    /// `W(∞; a)`, infinite when `2β + 4γ ≤ 1`.
    pub fn limit(&self, a: f64) -> Result<f64> {
        let p = 2.0 * self.beta + 4.0 * self.gamma;
        if p <= 1.0 {
            return Ok(f64::INFINITY);
        }
        let t_split = 2.0 * a.abs() + 100.0;
        let head = quadrature::integrate(|tau| self.rate(a, tau), 0.0, t_split, self.tol)?;
        // τ = T e^u turns the algebraic tail into an exponentially decaying one
        let u_max = 40.0 / (p - 1.0);
        let tail = quadrature::integrate(
            |u| {
                let tau = t_split * u.exp();
                self.rate(a, tau) * tau
            },
            0.0,
            u_max,
            self.tol,
        )?;
        let rest = (t_split * u_max.exp()).powf(1.0 - p) / (p - 1.0);
        Ok(head + tail + rest)
    }

    /// Largest `W(∞; a)` over the given rays.
    pub fn sup_limit(&self, rays: impl IntoIterator<Item = f64>) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for a in rays {
            sup = sup.max(self.limit(a)?);
        }
        Ok(sup)
    }
}

/// Finite-channel weight `exp(arctan(η/k - t) - W(t; η/k))`.
pub fn a_finite_factor(k: f64, eta: f64, t: f64, wi: &WeightIntegral) -> Result<f64> {
    if k == 0.0 {
        return Err(OrrError::ZeroWavenumber);
    }
    let a = eta / k;
    Ok(((a - t).atan() - wi.value(a, t)?).exp())
}

/// `-∂_t` of [`a_finite_factor`]: the factor times
/// `1/(1+(η/k-t)²) + ⟨t⟩^{-2β}(1+(η/k-t)²)^{-2γ}`.
pub fn a_finite_rate(k: f64, eta: f64, t: f64, wi: &WeightIntegral) -> Result<f64> {
    let a = eta / k;
    let x = a - t;
    Ok(a_finite_factor(k, eta, t, wi)? * (1.0 / (1.0 + x * x) + wi.rate(a, t)))
}

pub fn apply_a_finite(spec: &Spectrum, t: f64, wi: &WeightIntegral) -> Result<Spectrum> {
    let k = spec.k;
    let factors = spec
        .eta()
        .iter()
        .map(|&eta| a_finite_factor(k, eta, t, wi))
        .collect::<Result<Vec<_>>>()?;
    let coeffs = spec.coeffs.iter().zip(factors).map(|(c, a)| c * a).collect();
    Ok(Spectrum { coeffs, ..spec.clone() })
}

/// Channel-appropriate multiplier `A(t)`.
#[derive(Debug, Clone, Copy)]
pub enum Multiplier<'a> {
    Infinite(WeightParams),
    Finite(&'a WeightIntegral),
}

impl Multiplier<'_> {
    pub fn factor(&self, k: f64, eta: f64, t: f64) -> Result<f64> {
        match self {
            Multiplier::Infinite(w) => Ok(a_infinite_factor(k, eta, t, w)),
            Multiplier::Finite(wi) => a_finite_factor(k, eta, t, wi),
        }
    }

    /// `-∂_t A(t)` at frequency `η`.
    pub fn rate(&self, k: f64, eta: f64, t: f64) -> Result<f64> {
        match self {
            Multiplier::Infinite(w) => Ok(a_infinite_rate(k, eta, t, w)),
            Multiplier::Finite(wi) => a_finite_rate(k, eta, t, wi),
        }
    }

    /// `⟨u, A(t) u⟩ = Σ A(η)|û|²`.
    pub fn quadratic_form(&self, spec: &Spectrum, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (c, &eta) in spec.coeffs.iter().zip(spec.eta()) {
            let n = c.norm_sqr();
            if n != 0.0 {
                acc += self.factor(spec.k, eta, t)? * n;
            }
        }
        Ok(acc)
    }

    pub fn kind(&self) -> ChannelKind {
        match self {
            Multiplier::Infinite(_) => ChannelKind::Infinite,
            Multiplier::Finite(_) => ChannelKind::Finite,
        }
    }
}

/// Writes `eta,re,im` rows preceded by a comment line stating the
/// normalization.
pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# k={} t={} period={} normalization: unitary, sum |c|^2 = integral of |u|^2 over one period; u(z) = sum c exp(i eta z)/sqrt(period)",
        spec.k, spec.t, spec.grid.period
    )?;
    writeln!(out, "eta,re,im")?;
    let mut order: Vec<usize> = (0..spec.coeffs.len()).collect();
    order.sort_by(|&a, &b| spec.eta()[a].total_cmp(&spec.eta()[b]));
    for i in order {
        let c = spec.coeffs[i];
        writeln!(out, "{},{},{}", spec.eta()[i], c.re, c.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn box_grid() -> Arc<Grid> {
        Grid::infinite(PI, 32).unwrap()
    }

    fn single_mode(grid: &Arc<Grid>, k: f64, eta0: f64) -> ModeField {
        // unit spectral amplitude: u = e^{iη₀z}/sqrt(P)
        let s = 1.0 / grid.period.sqrt();
        ModeField::from_fn(grid.clone(), k, 0.0, |z| Complex64::from_polar(s, eta0 * z))
    }

    #[test]
    fn constant_field_has_only_zero_frequency() {
        let g = box_grid();
        let f = ModeField::from_fn(g.clone(), 1.0, 0.0, |_| Complex64::new(2.0, -1.0));
        let s = f.spectrum();
        for (c, &eta) in s.coeffs.iter().zip(s.eta()) {
            if eta == 0.0 {
                assert!((c - Complex64::new(2.0, -1.0) * g.period.sqrt()).norm() < 1e-13);
            } else {
                assert!(c.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn plane_wave_has_single_coefficient() {
        let g = box_grid();
        let s = single_mode(&g, 1.0, 3.0).spectrum();
        for (c, &eta) in s.coeffs.iter().zip(s.eta()) {
            let want = if eta == 3.0 { 1.0 } else { 0.0 };
            assert!((c - want).norm() < 1e-13, "eta={eta} c={c}");
        }
    }

    #[test]
    fn hj_norm_examples() {
        let g = box_grid();
        let s0 = single_mode(&g, 1.0, 0.0).spectrum();
        assert!((hj_norm(&s0, 2, true).unwrap() - 1.0).abs() < 1e-12);
        let s2 = single_mode(&g, 1.0, 2.0).spectrum();
        assert!((hj_norm(&s2, 2, true).unwrap() - 5.0).abs() < 1e-12);
        assert!((hj_norm(&s2, 0, true).unwrap() - s2.to_field().l2_norm()).abs() < 1e-12);
        assert_eq!(hj_norm(&s2, -1, true), Err(OrrError::NegativeSobolevIndex(-1)));
    }

    #[test]
    fn time_adapted_norms_single_mode() {
        let g = box_grid();
        let w = WeightParams::default();
        let s0 = single_mode(&g, 1.0, 0.0).spectrum();
        assert!((h1t_norm(&s0, 0.0, &w) - 1.0).abs() < 1e-12);
        let s = single_mode(&g, 2.0, 4.0).spectrum();
        // critical time t = η/k
        assert!((h1t_norm(&s, 2.0, &w) - 2.0).abs() < 1e-12);
        assert!((hm1t_weight_norm(&s, 2.0, &w) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orr_multiplier_examples() {
        assert_eq!(orr_multiplier(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(orr_multiplier(1.0, 2.0, 2.0).unwrap(), 1.0);
        assert!((orr_multiplier(1.0, 0.0, 10.0).unwrap() - 1.0 / 101.0).abs() < 1e-16);
        assert_eq!(orr_multiplier(0.0, 1.0, 1.0), Err(OrrError::ZeroWavenumber));
    }

    #[test]
    fn infinite_weight_bounds() {
        let w = WeightParams::default();
        assert_eq!(a_infinite_factor(1.0, 3.0, 3.0, &w), 1.0);
        let lo = (-w.c_exp * PI / 2.0).exp();
        let hi = (w.c_exp * PI / 2.0).exp();
        for i in -200..=200 {
            let eta = i as f64 * 0.37;
            for t in [0.0, 1.0, 17.5, 1e3] {
                let a = a_infinite_factor(1.0, eta, t, &w);
                assert!(a > lo && a < hi);
                assert!(a >= (-w.c_exp * PI).exp() && a <= (w.c_exp * PI).exp());
            }
        }
    }

    #[test]
    fn weight_integral_basic() {
        let wi = WeightIntegral::new(0.25, 0.25, 0.1).unwrap();
        assert_eq!(wi.value(0.0, 0.0).unwrap(), 0.0);
        let w1 = wi.value(1.5, 3.05).unwrap();
        let direct = quadrature::integrate(|tau| wi.rate(1.5, tau), 0.0, 3.05, 1e-13).unwrap();
        assert!((w1 - direct).abs() < 1e-10);
        assert!(wi.value(0.0, -1.0).is_err());
    }

    #[test]
    fn weight_integral_limit_against_riemann_sum() {
        let wi = WeightIntegral::new(0.25, 0.25, 0.5).unwrap();
        let t = 50.0;
        let n = 400_000;
        let h = t / n as f64;
        let riemann: f64 = (0..n).map(|i| wi.rate(0.0, (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((wi.value(0.0, t).unwrap() - riemann).abs() < 1e-6);
        // the integrand decays like τ^{-3/2}: the remaining mass beyond t is ~2/sqrt(t)
        let lim = wi.limit(0.0).unwrap();
        assert!(lim > riemann);
        assert!((lim - riemann - 2.0 / t.sqrt()).abs() < 0.01);
    }

    #[test]
    fn finite_weight_bounds() {
        let wi = WeightIntegral::new(0.25, 0.25, 0.25).unwrap();
        assert_eq!(a_finite_factor(1.0, 0.0, 0.0, &wi).unwrap(), 1.0);
        let sup_w = wi.sup_limit((-20..=20).map(|m| 2.0 * PI * m as f64)).unwrap();
        for m in -20..=20 {
            let eta = 2.0 * PI * m as f64;
            for t in [0.0, 0.5, 5.0, 40.0] {
                let a = a_finite_factor(1.0, eta, t, &wi).unwrap();
                assert!(a <= (PI / 2.0).exp());
                assert!(a >= (-PI / 2.0 - sup_w).exp());
            }
        }
    }

    #[test]
    fn spectrum_csv_header() {
        let g = box_grid();
        let s = single_mode(&g, 1.0, 1.0).spectrum();
        let mut buf = Vec::new();
        write_spectrum_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# k=1"));
        assert_eq!(lines.next().unwrap(), "eta,re,im");
        assert_eq!(text.lines().count(), 2 + 32);
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = box_grid();
        assert!(ModeField::new(g.clone(), 1.0, 0.0, vec![Complex64::default(); 3]).is_err());
        assert!(Spectrum::from_coeffs(g, 1.0, 0.0, vec![Complex64::default(); 3]).is_err());
    }
}
