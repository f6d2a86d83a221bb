//! Shear profiles `U(y)`, their Lagrangian-coordinate coefficients
//! `f = U''∘U^{-1}` and `g = U'∘U^{-1}`, derivative sup-norm tables and the
//! composite norms built from them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OrrError, Result};
use crate::grid::ChannelKind;
use crate::jet::Jet;
use crate::stencil;

/// Highest derivative order tabulated for `f` and `g` by default.
pub const DEFAULT_J_MAX: usize = 8;

/// Channel geometry and resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Circumference `L` of the periodic x-direction.
    pub circumference: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n_grid: usize,
    /// Closed interval `I` strictly inside the channel holding the supports of
    /// `f` and `ω₀`.
    pub support_interval: Option<[f64; 2]>,
    /// Order `N` of the boundary vanishing condition.
    pub vanish_order: Option<usize>,
}

impl ChannelConfig {
    pub fn finite(circumference: f64, n_grid: usize) -> Self {
        ChannelConfig {
            kind: ChannelKind::Finite,
            circumference,
            z_min: 0.0,
            z_max: 1.0,
            n_grid,
            support_interval: None,
            vanish_order: None,
        }
    }

    /// Periodic box `[-Z, Z)` standing in for the infinite channel.
    pub fn infinite(circumference: f64, half_width: f64, n_grid: usize) -> Self {
        ChannelConfig {
            kind: ChannelKind::Infinite,
            circumference,
            z_min: -half_width,
            z_max: half_width,
            n_grid,
            support_interval: None,
            vanish_order: None,
        }
    }

    pub fn with_support(mut self, a: f64, b: f64) -> Self {
        self.support_interval = Some([a, b]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OrrError::InvalidChannel(m));
        if !(self.circumference > 0.0) || !self.circumference.is_finite() {
            return bad(format!("circumference must be positive, got {}", self.circumference));
        }
        match self.kind {
            ChannelKind::Finite => {
                if self.z_min != 0.0 || self.z_max != 1.0 {
                    return bad(format!(
                        "finite channel requires z_min = 0, z_max = 1 (got {}, {})",
                        self.z_min, self.z_max
                    ));
                }
                if self.n_grid < 6 {
                    return bad(format!("n_grid = {} < 6", self.n_grid));
                }
            }
            ChannelKind::Infinite => {
                if !(self.z_max > 0.0) || self.z_min != -self.z_max {
                    return bad(format!(
                        "infinite box must be symmetric [-Z, Z] with Z > 0 (got [{}, {}])",
                        self.z_min, self.z_max
                    ));
                }
                if self.n_grid < 8 {
                    return bad(format!("n_grid = {} < 8", self.n_grid));
                }
            }
        }
        if let Some([a, b]) = self.support_interval {
            if !(self.z_min < a && a <= b && b < self.z_max) {
                return bad(format!(
                    "support interval [{a}, {b}] is not strictly inside ({}, {})",
                    self.z_min, self.z_max
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<std::sync::Arc<crate::grid::Grid>> {
        self.validate()?;
        match self.kind {
            ChannelKind::Finite => crate::grid::Grid::finite(self.n_grid),
            ChannelKind::Infinite => crate::grid::Grid::infinite(self.z_max, self.n_grid),
        }
    }

    /// Spacing of the lowest x-wavenumber, `2π/L`.
    pub fn k_unit(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.circumference
    }
}

/// Registry entry: name plus parameter map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub name: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_center")]
    pub center: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Phase of the sine family; `0` gives `U = y + ε sin(2πy)`.
    #[serde(default)]
    pub phase: f64,
    /// Vanishing order `N` of the polynomial family.
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_center() -> f64 {
    0.5
}
fn default_width() -> f64 {
    0.2
}
fn default_order() -> usize {
    1
}

impl ProfileSpec {
    pub fn couette() -> Self {
        Self::named("couette", 0.0)
    }

    pub fn bump(amplitude: f64, center: f64, width: f64) -> Self {
        ProfileSpec { center, width, ..Self::named("bump", amplitude) }
    }

    pub fn sine(amplitude: f64) -> Self {
        Self::named("sine", amplitude)
    }

    pub fn vanishing(amplitude: f64, order: usize) -> Self {
        ProfileSpec { order, ..Self::named("vanishing", amplitude) }
    }

    fn named(name: &str, amplitude: f64) -> Self {
        ProfileSpec {
            name: name.to_string(),
            amplitude,
            center: default_center(),
            width: default_width(),
            phase: 0.0,
            order: default_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Couette,
    /// `U = y + ε exp(-1/(1-x²))`, `x = (y-y0)/w`.
    Bump { eps: f64, center: f64, width: f64 },
    /// `U = y + ε (sin(2πy + φ) - sin φ)`.
    Sine { eps: f64, phase: f64 },
    /// `U = y + ε P(y)` with `P'' = (y(1-y))^{N+1}`, `P(0) = P(1) = 0`.
    Polynomial { eps: f64, coeffs: Vec<f64> },
}

impl Family {
    fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        let eps = spec.amplitude;
        if !eps.is_finite() {
            return Err(OrrError::InvalidParameter(format!("amplitude {eps} is not finite")));
        }
        Ok(match spec.name.as_str() {
            "couette" => Family::Couette,
            "bump" => {
                if !(spec.width > 0.0) {
                    return Err(OrrError::InvalidParameter(format!(
                        "bump width must be positive, got {}",
                        spec.width
                    )));
                }
                Family::Bump { eps, center: spec.center, width: spec.width }
            }
            "sine" => Family::Sine { eps, phase: spec.phase },
            "vanishing" => Family::Polynomial { eps, coeffs: vanishing_polynomial(spec.order) },
            other => return Err(OrrError::UnknownProfile(other.to_string())),
        })
    }

    /// Jet of `U` at `y`.
    fn jet(&self, y: f64, order: usize) -> Jet {
        let id = Jet::variable(y, order);
        match self {
            Family::Couette => id,
            Family::Bump { eps, center, width } => {
                let x = (y - center) / width;
                if x.abs() >= 1.0 {
                    return id;
                }
                let xj = Jet::variable(y, order).add_scalar(-center).scale(1.0 / width);
                let q = (&xj * &xj).scale(-1.0).add_scalar(1.0);
                let b = q.recip().scale(-1.0).exp();
                &id + &b.scale(*eps)
            }
            Family::Sine { eps, phase } => {
                let arg = Jet::variable(y, order)
                    .scale(2.0 * std::f64::consts::PI)
                    .add_scalar(*phase);
                let (s, _) = arg.sin_cos();
                &id + &s.add_scalar(-phase.sin()).scale(*eps)
            }
            Family::Polynomial { eps, coeffs } => {
                let mut acc = Jet::constant(0.0, order);
                for c in coeffs.iter().rev() {
                    acc = (&acc * &id).add_scalar(*c);
                }
                &id + &acc.scale(*eps)
            }
        }
    }

    fn is_trivial(&self) -> bool {
        match self {
            Family::Couette => true,
            Family::Bump { eps, .. } | Family::Sine { eps, .. } | Family::Polynomial { eps, .. } => {
                *eps == 0.0
            }
        }
    }
}

/// Coefficients (ascending powers) of `P` with `P'' = (y - y²)^{N+1}`,
/// `P(0) = P(1) = 0`.
fn vanishing_polynomial(order: usize) -> Vec<f64> {
    let p = order + 1;
    let mut coeffs = vec![0.0; 2 * p + 3];
    let mut binom = 1.0;
    for i in 0..=p {
        let power = p + i;
        let c = if i % 2 == 0 { binom } else { -binom };
        coeffs[power + 2] = c / ((power + 1) as f64 * (power + 2) as f64);
        binom = binom * (p - i) as f64 / (i + 1) as f64;
    }
    let at_one: f64 = coeffs.iter().sum();
    coeffs[1] = -at_one;
    coeffs
}

/// A bilipschitz shear profile with its Lagrangian coefficients sampled on
/// the solver grid.
#[derive(Debug, Clone)]
pub struct ShearProfile {
    pub name: String,
    family: Family,
    pub z: Vec<f64>,
    pub f_samples: Vec<f64>,
    pub g_samples: Vec<f64>,
    /// `f_sup[i] = ‖∂_z^i f‖_∞`.
    pub f_sup: Vec<f64>,
    /// `g_sup[i] = ‖∂_z^i g‖_∞`.
    pub g_sup: Vec<f64>,
    pub bilip_lower: f64,
    pub bilip_upper: f64,
}

impl ShearProfile {
    /// Builds the profile on the nodes of `channel`, with derivative tables up
    /// to [`DEFAULT_J_MAX`].
    pub fn build(spec: &ProfileSpec, channel: &ChannelConfig) -> Result<Self> {
        Self::build_with_order(spec, channel, DEFAULT_J_MAX)
    }

    pub fn build_with_order(
        spec: &ProfileSpec,
        channel: &ChannelConfig,
        j_max: usize,
    ) -> Result<Self> {
        channel.validate()?;
        let family = Family::from_spec(spec)?;
        let (y_lo, y_hi) = (channel.z_min, channel.z_max);

        // bilipschitz check on a fine y-sampling of the physical channel
        let n_fine = (8 * channel.n_grid).max(4096);
        let mut u_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        for i in 0..=n_fine {
            let y = y_lo + (y_hi - y_lo) * i as f64 / n_fine as f64;
            let d = family.jet(y, 1).derivative(1);
            u_min = u_min.min(d);
            u_max = u_max.max(d);
        }
        if !(u_min >= 0.5 && u_max <= 2.0) {
            return Err(OrrError::NotBilipschitz { min: u_min, max: u_max });
        }
        if channel.kind == ChannelKind::Finite {
            let u0 = family.jet(0.0, 0).value();
            let u1 = family.jet(1.0, 0).value();
            if u0.abs() > 1e-12 || (u1 - 1.0).abs() > 1e-12 {
                return Err(OrrError::ChannelEndpoints { u0, u1 });
            }
        }

        let mut profile = ShearProfile {
            name: spec.name.clone(),
            family,
            z: Vec::new(),
            f_samples: Vec::new(),
            g_samples: Vec::new(),
            f_sup: vec![0.0; j_max + 1],
            g_sup: vec![0.0; j_max + 1],
            bilip_lower: u_min,
            bilip_upper: u_max,
        };

        let nodes = channel_nodes(channel);
        profile.f_samples = nodes.iter().map(|&z| profile.f_at(z)).collect();
        profile.g_samples = nodes.iter().map(|&z| profile.g_at(z)).collect();
        profile.z = nodes;
        for &g in &profile.g_samples {
            profile.bilip_lower = profile.bilip_lower.min(g);
            profile.bilip_upper = profile.bilip_upper.max(g);
        }

        if profile.family.is_trivial() {
            profile.g_sup[0] = 1.0;
        } else {
            for i in 0..=n_fine {
                let z = channel.z_min + (channel.z_max - channel.z_min) * i as f64 / n_fine as f64;
                let (fj, gj) = profile.z_jets(z, j_max);
                for d in 0..=j_max {
                    profile.f_sup[d] = profile.f_sup[d].max(fj.derivative(d).abs());
                    profile.g_sup[d] = profile.g_sup[d].max(gj.derivative(d).abs());
                }
            }
        }
        Ok(profile)
    }

    /// Jet of `U` at physical coordinate `y`.
    pub fn u_jet(&self, y: f64, order: usize) -> Jet {
        self.family.jet(y, order)
    }

    pub fn u(&self, y: f64) -> f64 {
        self.family.jet(y, 0).value()
    }

    pub fn du(&self, y: f64) -> f64 {
        self.family.jet(y, 1).derivative(1)
    }

    pub fn d2u(&self, y: f64) -> f64 {
        self.family.jet(y, 2).derivative(2)
    }

    /// `U^{-1}(z)` by safeguarded Newton iteration.
    pub fn inverse(&self, z: f64) -> f64 {
        if self.family.is_trivial() {
            return z;
        }
        let mut lo = z - 1.0;
        while self.u(lo) > z {
            lo -= 2.0 * (z - lo);
        }
        let mut hi = z + 1.0;
        while self.u(hi) < z {
            hi += 2.0 * (hi - z);
        }
        let mut y = z.clamp(lo, hi);
        for _ in 0..100 {
            let j = self.family.jet(y, 1);
            let r = j.value() - z;
            if r == 0.0 {
                break;
            }
            if r > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let mut next = y - r / j.derivative(1);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-16 * (1.0 + y.abs()) {
                y = next;
                break;
            }
            y = next;
        }
        y
    }

    pub fn f_at(&self, z: f64) -> f64 {
        self.d2u(self.inverse(z))
    }

    pub fn g_at(&self, z: f64) -> f64 {
        self.du(self.inverse(z))
    }

    /// Jets of `f` and `g` in the Lagrangian variable `z`, up to `order`.
    pub fn z_jets(&self, z: f64, order: usize) -> (Jet, Jet) {
        let y = self.inverse(z);
        let uj = self.family.jet(y, order + 2);
        let up = uj.differentiate();
        let upp = up.differentiate();
        let mut shifted = uj.truncate(order);
        shifted = shifted.add_scalar(-shifted.value());
        let delta = shifted.revert();
        let fj = upp.truncate(order).compose(&delta);
        let gj = up.truncate(order).compose(&delta);
        (fj, gj)
    }

    /// Samples of `f` and `g` at arbitrary nodes.
    pub fn sample_f(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&z| self.f_at(z)).collect()
    }

    pub fn sample_g(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&z| self.g_at(z)).collect()
    }

    pub fn j_max(&self) -> usize {
        self.f_sup.len() - 1
    }

    pub fn composite_table(&self) -> Result<CompositeNormTable> {
        CompositeNormTable::new(&self.f_sup, &self.g_sup, self.j_max())
    }

    /// `‖1/g‖_{C¹} = sup|1/g| + sup|g'/g²|`.
    pub fn inv_g_c1(&self) -> f64 {
        (1.0 / self.bilip_lower) + self.g_sup[1] / (self.bilip_lower * self.bilip_lower)
    }
}

/// Grid nodes of a channel: `[0,1]` with endpoints, or the periodic box.
pub fn channel_nodes(channel: &ChannelConfig) -> Vec<f64> {
    let n = channel.n_grid;
    match channel.kind {
        ChannelKind::Finite => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        ChannelKind::Infinite => {
            let h = (channel.z_max - channel.z_min) / n as f64;
            (0..n).map(|j| channel.z_min + j as f64 * h).collect()
        }
    }
}

/// `‖f‖_j`: the largest product `Π d_{j_i}` over compositions of `j` into
/// positive parts; `‖f‖_0 = d_0`.
pub fn composite_norm(d: &[f64], j: usize) -> Result<f64> {
    if j >= d.len() {
        return Err(OrrError::IndexOutOfRange { index: j, max: d.len().saturating_sub(1) });
    }
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(OrrError::NegativeNorm { index, value });
    }
    if j == 0 {
        return Ok(d[0]);
    }
    let mut m = vec![0.0; j + 1];
    m[0] = 1.0;
    for n in 1..=j {
        m[n] = (1..=n).map(|i| d[i] * m[n - i]).fold(0.0, f64::max);
    }
    Ok(m[j].max(d[j]))
}

/// Composite norms `‖f‖_j`, `‖g‖_j` and `‖(f,g)‖_j` for `j ≤ j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeNormTable {
    pub j_max: usize,
    pub f_norms: Vec<f64>,
    pub g_norms: Vec<f64>,
    pub pair_norms: Vec<f64>,
}

impl CompositeNormTable {
    pub fn new(f_sup: &[f64], g_sup: &[f64], j_max: usize) -> Result<Self> {
        let f_norms = (0..=j_max)
            .map(|j| composite_norm(f_sup, j))
            .collect::<Result<Vec<_>>>()?;
        let g_norms = (0..=j_max)
            .map(|j| composite_norm(g_sup, j))
            .collect::<Result<Vec<_>>>()?;
        let mut table = CompositeNormTable { j_max, f_norms, g_norms, pair_norms: Vec::new() };
        table.pair_norms = (0..=j_max).map(|j| table.pair_sum(j)).collect();
        Ok(table)
    }

    fn pair_sum(&self, j: usize) -> f64 {
        (0..=j)
            .map(|j1| (1.0 + self.f_norms[j1]) * (1.0 + self.g_norms[j - j1]))
            .sum()
    }

    /// `‖(f,g)‖_j = Σ_{j1+j2=j} (1 + ‖f‖_{j1})(1 + ‖g‖_{j2})`.
    pub fn pair_norm(&self, j: usize) -> Result<f64> {
        if j > self.j_max {
            return Err(OrrError::IndexOutOfRange { index: j, max: self.j_max });
        }
        Ok(self.pair_sum(j))
    }
}

/// `(‖f‖_∞ + ‖f'‖_∞) · L`, to be compared against a configured threshold.
pub fn smallness_margin(profile: &ShearProfile, channel: &ChannelConfig) -> f64 {
    (profile.f_sup[0] + profile.f_sup[1]) * channel.circumference
}

/// Minimum grid size for [`vanishing_order`] with order `n`.
pub fn vanishing_min_grid(n: usize) -> usize {
    2 * (n + vanishing_accuracy(n)) + 2
}

fn vanishing_accuracy(n: usize) -> usize {
    (n + 2).max(4)
}

/// Tests condition (V_N) on samples over `[0,1]`: entry `j` is true iff the
/// one-sided `j`-th derivative estimates at both endpoints are below
/// `tol · max|h|`.
pub fn vanishing_order<T>(samples: &[T], n: usize, tol: f64) -> Result<Vec<bool>>
where
    T: Copy + Into<Complex64>,
{
    let required = vanishing_min_grid(n);
    if samples.len() < required {
        return Err(OrrError::GridTooCoarse { order: n, required, got: samples.len() });
    }
    let v: Vec<Complex64> = samples.iter().map(|&s| s.into()).collect();
    let h = 1.0 / (v.len() - 1) as f64;
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(vec![true; n + 1]);
    }
    let p = vanishing_accuracy(n);
    Ok((0..=n)
        .map(|j| {
            let w = stencil::one_sided(j, j + p, h);
            let left = stencil::apply_one_sided(&v, &w, j, true).norm();
            let right = stencil::apply_one_sided(&v, &w, j, false).norm();
            left.max(right) <= tol * scale
        })
        .collect())
}
