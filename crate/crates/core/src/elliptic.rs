//! Stream-function solves for `L_t` and `Λ_t`, the homogeneous kernel
//! solutions and boundary Neumann data.
//!
//! Finite channel: with `ψ = e^{iktz} φ` the operator
//! `-k² + (g(∂_z - ikt))²` becomes the `t`-independent `-k² + g ∂_z(g ∂_z ·)`.
//! Dividing each row by `g_i` gives a real symmetric tridiagonal matrix
//! (midpoint values of `g`, Dirichlet closure) that is factored once.
//!
//! Infinite channel: the periodic box is solved pseudo-spectrally by
//! preconditioned conjugate gradients on `(k²/g + D* g D) ψ = -ω/g`,
//! `D = ∂_z - ikt`, with the constant-coefficient symbol as preconditioner.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{OrrError, Result};
use crate::grid::{ChannelKind, Grid};
use crate::jet::Jet;
use crate::profiles::ShearProfile;
use crate::spectral::{ModeField, WeightParams};
use crate::stencil;

const PCG_TOL: f64 = 1e-14;
const PCG_MAX_ITER: usize = 400;

#[derive(Debug, Clone)]
enum Backend {
    Dirichlet {
        /// `g` at the midpoints `z_{i+1/2}`, `i = 0..n-2`.
        g_mid: Vec<f64>,
        /// `LDLᵀ` factors of the negated scaled interior matrix.
        d: Vec<f64>,
        l: Vec<f64>,
    },
    Periodic {
        inv_g: Vec<f64>,
        mean_g: f64,
        mean_inv_g: f64,
    },
}

/// The conjugated elliptic operator of one mode, factorized.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    pub k: f64,
    pub grid: Arc<Grid>,
    /// `g` at the grid nodes.
    pub g: Vec<f64>,
    backend: Backend,
}

pub fn assemble_conjugated_operator(
    profile: &ShearProfile,
    grid: &Arc<Grid>,
    k: f64,
) -> Result<EllipticOperator> {
    let g = profile.sample_g(&grid.z);
    let g_mid = match grid.kind {
        ChannelKind::Finite => grid.z.windows(2).map(|w| profile.g_at(0.5 * (w[0] + w[1]))).collect(),
        ChannelKind::Infinite => Vec::new(),
    };
    EllipticOperator::from_samples(grid, k, g, g_mid)
}

impl EllipticOperator {
    /// Operator with constant coefficient `g ≡ c`.
    pub fn constant(grid: &Arc<Grid>, k: f64, c: f64) -> Result<Self> {
        let n = grid.len();
        let g_mid = match grid.kind {
            ChannelKind::Finite => vec![c; n - 1],
            ChannelKind::Infinite => Vec::new(),
        };
        Self::from_samples(grid, k, vec![c; n], g_mid)
    }

    fn from_samples(grid: &Arc<Grid>, k: f64, g: Vec<f64>, g_mid: Vec<f64>) -> Result<Self> {
        if k == 0.0 {
            return Err(OrrError::ZeroWavenumber);
        }
        if let Some(bad) = g.iter().chain(&g_mid).find(|v| !(**v > 0.0)) {
            return Err(OrrError::InvalidParameter(format!("g = {bad} must be positive")));
        }
        let backend = match grid.kind {
            ChannelKind::Finite => {
                let n = grid.len();
                let h2 = grid.h * grid.h;
                // negated scaled interior matrix, rows 1..=n-2
                let m = n - 2;
                let diag: Vec<f64> = (1..=m)
                    .map(|i| (g_mid[i - 1] + g_mid[i]) / h2 + k * k / g[i])
                    .collect();
                let off: Vec<f64> = (1..m).map(|i| -g_mid[i] / h2).collect();
                let mut d = vec![0.0; m];
                let mut l = vec![0.0; m.saturating_sub(1)];
                d[0] = diag[0];
                for i in 0..m - 1 {
                    if !(d[i] > 0.0) {
                        return Err(OrrError::Singular(i + 1));
                    }
                    l[i] = off[i] / d[i];
                    d[i + 1] = diag[i + 1] - l[i] * off[i];
                }
                if !(d[m - 1] > 0.0) {
                    return Err(OrrError::Singular(m));
                }
                Backend::Dirichlet { g_mid, d, l }
            }
            ChannelKind::Infinite => {
                let n = g.len() as f64;
                let inv_g: Vec<f64> = g.iter().map(|v| 1.0 / v).collect();
                let mean_g = g.iter().sum::<f64>() / n;
                let mean_inv_g = inv_g.iter().sum::<f64>() / n;
                Backend::Periodic { inv_g, mean_g, mean_inv_g }
            }
        };
        Ok(EllipticOperator { k, grid: grid.clone(), g, backend })
    }

    pub fn kind(&self) -> ChannelKind {
        self.grid.kind
    }

    /// Unscaled conjugated stencil `(lower, diag, upper)` of interior row `i`
    /// of the finite-channel operator.
    pub fn stencil_row(&self, i: usize) -> Result<(f64, f64, f64)> {
        match &self.backend {
            Backend::Dirichlet { g_mid, .. } => {
                let n = self.grid.len();
                if i == 0 || i + 1 >= n {
                    return Err(OrrError::IndexOutOfRange { index: i, max: n - 2 });
                }
                let h2 = self.grid.h * self.grid.h;
                let gi = self.g[i];
                Ok((
                    gi * g_mid[i - 1] / h2,
                    -gi * (g_mid[i - 1] + g_mid[i]) / h2 - self.k * self.k,
                    gi * g_mid[i] / h2,
                ))
            }
            Backend::Periodic { .. } => Err(OrrError::WrongChannel { expected: "finite" }),
        }
    }

    fn check_field(&self, f: &ModeField) -> Result<()> {
        if !Arc::ptr_eq(&f.grid, &self.grid) && f.grid.z != self.grid.z {
            return Err(OrrError::OperatorMismatch("field lives on a different grid".into()));
        }
        if f.k != self.k {
            return Err(OrrError::OperatorMismatch(format!(
                "operator built for k = {}, field has k = {}",
                self.k, f.k
            )));
        }
        Ok(())
    }

    /// `(-k² + (g(∂_z - ikt))²) ψ` on the grid. Finite channel: boundary rows
    /// return `ψ` itself (Dirichlet closure).
    pub fn apply(&self, psi: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        let n = self.grid.len();
        if psi.len() != n {
            return Err(OrrError::LengthMismatch { expected: n, got: psi.len() });
        }
        match &self.backend {
            Backend::Dirichlet { .. } => {
                let kt = self.k * t;
                let phi: Vec<Complex64> = psi
                    .iter()
                    .zip(&self.grid.z)
                    .map(|(p, &z)| p * Complex64::from_polar(1.0, -kt * z))
                    .collect();
                let mut out = psi.to_vec();
                for i in 1..n - 1 {
                    let (a, b, c) = self.stencil_row(i)?;
                    let row = phi[i - 1] * a + phi[i] * b + phi[i + 1] * c;
                    out[i] = row * Complex64::from_polar(1.0, kt * self.grid.z[i]);
                }
                Ok(out)
            }
            Backend::Periodic { .. } => {
                let m = self.periodic_apply(psi, t);
                Ok(m.iter().zip(&self.g).map(|(v, g)| -v * g).collect())
            }
        }
    }

    /// `M ψ = k² ψ/g + D*(g D ψ)`.
    fn periodic_apply(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        let Backend::Periodic { inv_g, .. } = &self.backend else {
            unreachable!("periodic_apply on a Dirichlet operator")
        };
        let kt = self.k * t;
        let grid = &self.grid;
        let symbol = grid.sheared_symbol(kt);
        let dpsi_hat: Vec<Complex64> =
            grid.forward(psi).iter().zip(&symbol).map(|(c, &s)| c * Complex64::new(0.0, s)).collect();
        let gdpsi: Vec<Complex64> =
            grid.inverse(&dpsi_hat).iter().zip(&self.g).map(|(v, g)| v * g).collect();
        let second: Vec<Complex64> =
            grid.forward(&gdpsi).iter().zip(&symbol).map(|(c, &s)| c * Complex64::new(0.0, -s)).collect();
        let second = grid.inverse(&second);
        let k2 = self.k * self.k;
        psi.iter()
            .zip(inv_g)
            .zip(second)
            .map(|((p, ig), s)| p * (k2 * ig) + s)
            .collect()
    }

    fn periodic_precondition(&self, r: &[Complex64], t: f64) -> Vec<Complex64> {
        let Backend::Periodic { mean_g, mean_inv_g, .. } = &self.backend else {
            unreachable!("periodic_precondition on a Dirichlet operator")
        };
        let kt = self.k * t;
        let k2 = self.k * self.k;
        let hat: Vec<Complex64> = self
            .grid
            .forward(r)
            .iter()
            .zip(self.grid.sheared_symbol(kt))
            .map(|(c, s)| c / (k2 * mean_inv_g + mean_g * s * s))
            .collect();
        self.grid.inverse(&hat)
    }

    fn solve_periodic(&self, omega: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        let Backend::Periodic { inv_g, .. } = &self.backend else {
            unreachable!()
        };
        let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
            a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
        };
        let b: Vec<Complex64> = omega.iter().zip(inv_g).map(|(w, ig)| -w * ig).collect();
        let b_norm = dot(&b, &b).re.sqrt();
        if b_norm == 0.0 {
            return Ok(vec![Complex64::new(0.0, 0.0); b.len()]);
        }
        let mut x = self.periodic_precondition(&b, t);
        let ax = self.periodic_apply(&x, t);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let mut res = dot(&r, &r).re.sqrt();
        if res <= PCG_TOL * b_norm {
            return Ok(x);
        }
        let mut z = self.periodic_precondition(&r, t);
        let mut p = z.clone();
        let mut rz = dot(&r, &z).re;
        for _ in 0..PCG_MAX_ITER {
            let ap = self.periodic_apply(&p, t);
            let alpha = rz / dot(&p, &ap).re;
            for i in 0..x.len() {
                x[i] += p[i] * alpha;
                r[i] -= ap[i] * alpha;
            }
            res = dot(&r, &r).re.sqrt();
            if res <= PCG_TOL * b_norm {
                return Ok(x);
            }
            z = self.periodic_precondition(&r, t);
            let rz_new = dot(&r, &z).re;
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..p.len() {
                p[i] = z[i] + p[i] * beta;
            }
        }
        // round-off floor: accept a residual close to machine precision
        if res <= 1e-11 * b_norm {
            return Ok(x);
        }
        Err(OrrError::NoConvergence { residual: res / b_norm, iterations: PCG_MAX_ITER })
    }

    fn solve_dirichlet(&self, omega: &[Complex64], t: f64) -> Vec<Complex64> {
        let Backend::Dirichlet { d, l, .. } = &self.backend else {
            unreachable!()
        };
        let n = self.grid.len();
        let kt = self.k * t;
        let z = &self.grid.z;
        // negated scaled right-hand side for the positive definite system
        let mut y: Vec<Complex64> =
            (1..n - 1).map(|i| -omega[i] * Complex64::from_polar(1.0 / self.g[i], -kt * z[i])).collect();
        let m = y.len();
        for i in 1..m {
            let prev = y[i - 1];
            y[i] -= prev * l[i - 1];
        }
        for i in 0..m {
            y[i] /= d[i];
        }
        for i in (0..m - 1).rev() {
            let next = y[i + 1];
            y[i] -= next * l[i];
        }
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        for i in 1..n - 1 {
            psi[i] = y[i - 1] * Complex64::from_polar(1.0, kt * z[i]);
        }
        psi
    }

    /// `ψ = L_t ω`.
    pub fn solve(&self, omega: &ModeField, t: f64) -> Result<ModeField> {
        self.check_field(omega)?;
        let values = self.solve_values(&omega.values, t)?;
        Ok(ModeField { k: self.k, t, grid: self.grid.clone(), values })
    }

    /// [`EllipticOperator::solve`] on raw samples.
    pub fn solve_values(&self, omega: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        if omega.len() != self.grid.len() {
            return Err(OrrError::LengthMismatch { expected: self.grid.len(), got: omega.len() });
        }
        match self.backend {
            Backend::Dirichlet { .. } => Ok(self.solve_dirichlet(omega, t)),
            Backend::Periodic { .. } => self.solve_periodic(omega, t),
        }
    }
}

pub fn solve_stream(op: &EllipticOperator, omega: &ModeField, t: f64) -> Result<ModeField> {
    op.solve(omega, t)
}

/// `(∂_z - ikt) ψ`: spectral on the box, second-order differences (one-sided
/// at the walls) in the finite channel.
pub fn sheared_derivative(psi: &ModeField, t: f64) -> Vec<Complex64> {
    let grid = &psi.grid;
    let kt = psi.k * t;
    match grid.kind {
        ChannelKind::Infinite => {
            let hat: Vec<Complex64> = grid
                .forward(&psi.values)
                .iter()
                .zip(grid.sheared_symbol(kt))
                .map(|(c, s)| c * Complex64::new(0.0, s))
                .collect();
            grid.inverse(&hat)
        }
        ChannelKind::Finite => {
            let n = grid.len();
            let h = grid.h;
            let v = &psi.values;
            (0..n)
                .map(|i| {
                    let d = if i == 0 {
                        (v[0] * -3.0 + v[1] * 4.0 - v[2]) / (2.0 * h)
                    } else if i == n - 1 {
                        (v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) / (2.0 * h)
                    } else {
                        (v[i + 1] - v[i - 1]) / (2.0 * h)
                    };
                    d - v[i] * Complex64::new(0.0, kt)
                })
                .collect()
        }
    }
}

/// The kernel elements `u_0`, `u_1` with `u_0(0) = -1`, `u_1(1) = 1`, i.e.
/// `u_0 = -(g(0)/g) sinh(k(s - s_1))/sinh(k(s_0 - s_1)) e^{ikty}` and
/// `u_1 = -(g(1)/g) sinh(k(s - s_0))/sinh(k(s_0 - s_1)) e^{ikt(y-1)}`, where
/// `s = U^{-1}`.
pub fn homogeneous_solutions(
    profile: &ShearProfile,
    grid: &Arc<Grid>,
    k: f64,
    t: f64,
) -> Result<(ModeField, ModeField)> {
    if grid.kind != ChannelKind::Finite {
        return Err(OrrError::WrongChannel { expected: "finite" });
    }
    if k == 0.0 {
        return Err(OrrError::ZeroWavenumber);
    }
    let s0 = profile.inverse(0.0);
    let s1 = profile.inverse(1.0);
    let denom = (k * (s0 - s1)).sinh();
    if !(denom.abs() > f64::MIN_POSITIVE) || !denom.is_finite() {
        return Err(OrrError::InvalidParameter(format!(
            "sinh(k(s0 - s1)) = {denom} cannot normalize the kernel solutions"
        )));
    }
    let g0 = profile.g_at(0.0);
    let g1 = profile.g_at(1.0);
    let mut u0 = Vec::with_capacity(grid.len());
    let mut u1 = Vec::with_capacity(grid.len());
    for &y in &grid.z {
        let s = profile.inverse(y);
        let gy = profile.g_at(y);
        let a0 = -(g0 / gy) * (k * (s - s1)).sinh() / denom;
        let a1 = -(g1 / gy) * (k * (s - s0)).sinh() / denom;
        u0.push(Complex64::from_polar(a0, k * t * y));
        u1.push(Complex64::from_polar(a1, k * t * (y - 1.0)));
    }
    Ok((
        ModeField { k, t, grid: grid.clone(), values: u0 },
        ModeField { k, t, grid: grid.clone(), values: u1 },
    ))
}

/// Largest interior residual of the kernel equation `(g(gχ)')' = k² χ`,
/// `χ = e^{-ikty} u`, relative to `k² max|χ|`, evaluated by fourth-order
/// centred differences on nodes `4..=n-5`.
pub fn homogeneous_residual(profile: &ShearProfile, u: &ModeField) -> Result<f64> {
    let grid = &u.grid;
    let n = grid.len();
    if n < 10 {
        return Err(OrrError::GridTooCoarse { order: 4, required: 10, got: n });
    }
    let kt = u.k * u.t;
    let h = grid.h;
    let g = profile.sample_g(&grid.z);
    let chi: Vec<Complex64> = u
        .values
        .iter()
        .zip(&grid.z)
        .map(|(v, &z)| v * Complex64::from_polar(1.0, -kt * z))
        .collect();
    let d1 = |v: &[Complex64], i: usize| -> Complex64 {
        (v[i - 2] - v[i - 1] * 8.0 + v[i + 1] * 8.0 - v[i + 2]) / (12.0 * h)
    };
    let q: Vec<Complex64> = chi.iter().zip(&g).map(|(c, g)| c * g).collect();
    let mut gq = vec![Complex64::new(0.0, 0.0); n];
    for i in 2..n - 2 {
        gq[i] = d1(&q, i) * g[i];
    }
    let scale = u.k * u.k * chi.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 4..=n - 5 {
        let r = d1(&gq, i) - chi[i] * (u.k * u.k);
        worst = worst.max(r.norm());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeumannMethod {
    FiniteDifference,
    Integral,
}

/// `∂_y L_t ω` at `y = 0` and `y = 1`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryData {
    pub neumann_0: Complex64,
    pub neumann_1: Complex64,
    pub t: f64,
    pub method: NeumannMethod,
}

/// Fourth-order one-sided five-point differences at both walls.
pub fn neumann_data_fd(psi: &ModeField) -> Result<BoundaryData> {
    let n = psi.values.len();
    if n < 6 {
        return Err(OrrError::GridTooCoarse { order: 4, required: 6, got: n });
    }
    let w = stencil::one_sided(1, 5, psi.grid.h);
    Ok(BoundaryData {
        neumann_0: stencil::apply_one_sided(&psi.values, &w, 1, true),
        neumann_1: stencil::apply_one_sided(&psi.values, &w, 1, false),
        t: psi.t,
        method: NeumannMethod::FiniteDifference,
    })
}

/// `∫_0^1 e^{-iθy} F(y) dy` with `F` linearly interpolated between nodes and
/// the exponential integrated exactly (Filon–trapezoid). Reduces to the
/// trapezoid rule for `θ = 0`.
fn filon_linear(z: &[f64], f: &[Complex64], theta: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..z.len() - 1 {
        let h = z[i + 1] - z[i];
        let x = theta * h;
        let (i0, i1) = if x.abs() < 1e-3 {
            let x2 = x * x;
            (
                Complex64::new(1.0 - x2 / 6.0, -x / 2.0 + x * x2 / 24.0),
                Complex64::new(0.5 - x2 / 8.0, -x / 3.0 + x * x2 / 30.0),
            )
        } else {
            let e = Complex64::from_polar(1.0, -x);
            let ix = Complex64::new(0.0, x);
            let i0 = (Complex64::new(1.0, 0.0) - e) / ix;
            (i0, -e / ix + i0 / ix)
        };
        let phase = Complex64::from_polar(h, -theta * z[i]);
        acc += phase * (f[i] * (i0 - i1) + f[i + 1] * i1);
    }
    acc
}

/// `neumann_0 = ⟨u_0, ω⟩ / g(0)²`, `neumann_1 = ⟨u_1, ω⟩ / g(1)²`, with
/// `⟨u, ω⟩ = ∫ conj(u) ω`. The `e^{ikty}` modulation of the kernel
/// solutions is integrated exactly.
pub fn neumann_data_integral(
    omega: &ModeField,
    u0: &ModeField,
    u1: &ModeField,
    profile: &ShearProfile,
) -> Result<BoundaryData> {
    let grid = &omega.grid;
    if grid.kind != ChannelKind::Finite {
        return Err(OrrError::WrongChannel { expected: "finite" });
    }
    for u in [u0, u1] {
        if u.values.len() != omega.values.len() {
            return Err(OrrError::LengthMismatch { expected: omega.values.len(), got: u.values.len() });
        }
    }
    let kt = u0.k * u0.t;
    let z = &grid.z;
    let demod = |u: &ModeField| -> Vec<Complex64> {
        u.values
            .iter()
            .zip(&omega.values)
            .zip(z)
            .map(|((a, w), &y)| a.conj() * w * Complex64::from_polar(1.0, kt * y))
            .collect()
    };
    let i0 = filon_linear(z, &demod(u0), kt);
    let i1 = filon_linear(z, &demod(u1), kt);
    let g0 = profile.g_at(0.0);
    let g1 = profile.g_at(1.0);
    Ok(BoundaryData {
        neumann_0: i0 / (g0 * g0),
        neumann_1: i1 / (g1 * g1),
        t: omega.t,
        method: NeumannMethod::Integral,
    })
}

/// `Λ_t`: the finite-channel solve with `g` replaced by the constant `C_low`.
#[derive(Debug, Clone)]
pub struct LambdaSolver {
    pub op: EllipticOperator,
    pub c: f64,
}

/// `‖u‖_{H^{-1}_t}` evaluated as `sqrt(-Re⟨Λ_t u, u⟩)` together with the
/// alternative `‖Λ_t u‖_{H^1_t}`.
#[derive(Debug, Clone, Copy)]
pub struct DualNorm {
    pub value: f64,
    pub via_h1t: f64,
}

impl LambdaSolver {
    pub fn new(grid: &Arc<Grid>, k: f64, w: &WeightParams) -> Result<Self> {
        if grid.kind != ChannelKind::Finite {
            return Err(OrrError::WrongChannel { expected: "finite" });
        }
        Ok(LambdaSolver { op: EllipticOperator::constant(grid, k, w.c_low)?, c: w.c_low })
    }

    pub fn solve(&self, u: &ModeField, t: f64) -> Result<ModeField> {
        self.op.solve(u, t)
    }

    pub fn dual_norm(&self, u: &ModeField, t: f64) -> Result<DualNorm> {
        let lam = self.solve(u, t)?;
        let pairing = -lam.inner(u).re;
        let scale = u.l2_norm().powi(2);
        if pairing < -1e-12 * scale.max(1e-300) {
            return Err(OrrError::NegativeDualNorm(pairing));
        }
        Ok(DualNorm { value: pairing.max(0.0).sqrt(), via_h1t: h1t_norm_grid(&lam, t, self.c) })
    }
}

pub fn lambda_solve(u: &ModeField, t: f64, w: &WeightParams) -> Result<ModeField> {
    LambdaSolver::new(&u.grid, u.k, w)?.solve(u, t)
}

pub fn hm1t_dual_norm(u: &ModeField, t: f64, w: &WeightParams) -> Result<DualNorm> {
    LambdaSolver::new(&u.grid, u.k, w)?.dual_norm(u, t)
}

/// Grid `H^1_t` norm on the finite channel:
/// `k²‖u‖² + c² h Σ |(φ_{i+1} - φ_i)/h|²` with `φ = e^{-iktz} u`.
pub fn h1t_norm_grid(u: &ModeField, t: f64, c: f64) -> f64 {
    let grid = &u.grid;
    let kt = u.k * t;
    let phi: Vec<Complex64> =
        u.values.iter().zip(&grid.z).map(|(v, &z)| v * Complex64::from_polar(1.0, -kt * z)).collect();
    let grad: f64 = phi.windows(2).map(|w| ((w[1] - w[0]) / grid.h).norm_sqr()).sum::<f64>() * grid.h;
    (u.k * u.k * u.l2_norm().powi(2) + c * c * grad).sqrt()
}

/// Boundary traces `∂_y^j ψ` for `j = 0..=j_max` at `y = 0` (index 0) and
/// `y = 1` (index 1), from the first trace and the kernel recursion
/// `(g D)^{j} ψ = k² (g D)^{j-2} ψ + (g D)^{j-2} ω`, `D = ∂_y - ikt`.
/// Derivatives of `ω` at the wall come from one-sided differences.
pub fn boundary_traces(
    first: &BoundaryData,
    omega: &ModeField,
    profile: &ShearProfile,
    j_max: usize,
) -> Result<Vec<[Complex64; 2]>> {
    let grid = &omega.grid;
    if grid.kind != ChannelKind::Finite {
        return Err(OrrError::WrongChannel { expected: "finite" });
    }
    let n = grid.len();
    let points = j_max + 4;
    if n < points + 1 {
        return Err(OrrError::GridTooCoarse { order: j_max, required: points + 1, got: n });
    }
    let k = omega.k;
    let kt = k * omega.t;
    let mut out = vec![[Complex64::new(0.0, 0.0); 2]; j_max + 1];
    for (side, (y0, dpsi)) in [(0.0, first.neumann_0), (1.0, first.neumann_1)].into_iter().enumerate() {
        let left = side == 0;
        let sign = if left { 1.0 } else { -1.0 };
        // ω̃ = e^{-ikty} ω near the wall, derivatives by one-sided stencils
        let omega_t: Vec<Complex64> = (0..points)
            .map(|m| {
                let i = if left { m } else { n - 1 - m };
                omega.values[i] * Complex64::from_polar(1.0, -kt * grid.z[i])
            })
            .collect();
        let nodes: Vec<f64> = (0..points).map(|m| sign * m as f64 * grid.h).collect();
        let w = stencil::fornberg(0.0, &nodes, j_max);
        let d_omega: Vec<Complex64> = (0..=j_max)
            .map(|d| omega_t.iter().zip(&w[d]).map(|(v, c)| v * c).sum())
            .collect();
        let (_, gj) = profile.z_jets(y0, j_max + 1);
        // (g∂)^m = Σ_l c[m][l] ∂^l, coefficients as jets at the wall
        let mut c: Vec<Vec<Jet>> = vec![vec![Jet::constant(1.0, j_max + 1)]];
        for m in 0..j_max {
            let prev = &c[m];
            let mut next = vec![Jet::constant(0.0, j_max + 1); m + 2];
            for (l, cl) in prev.iter().enumerate() {
                next[l] = &next[l] + &(&gj * &cl.differentiate().truncate(j_max + 1));
                next[l + 1] = &next[l + 1] + &(&gj * cl);
            }
            c.push(next);
        }
        // Q_m = (g∂)^m ω̃ at the wall
        let q: Vec<Complex64> = (0..=j_max)
            .map(|m| c[m].iter().enumerate().map(|(l, cl)| d_omega[l] * cl.value()).sum())
            .collect();
        // T_m = (g∂)^m φ at the wall, φ = e^{-ikty} ψ
        let phase = Complex64::from_polar(1.0, -kt * y0);
        let mut tr = vec![Complex64::new(0.0, 0.0); j_max + 1];
        if j_max >= 1 {
            tr[1] = gj.value() * dpsi * phase;
        }
        for m in 2..=j_max {
            tr[m] = tr[m - 2] * (k * k) + q[m - 2];
        }
        // invert the triangular relation T_m = Σ_l c[m][l] φ^{(l)}
        let mut dphi = vec![Complex64::new(0.0, 0.0); j_max + 1];
        for m in 1..=j_max {
            let mut acc = tr[m];
            for l in 0..m {
                acc -= dphi[l] * c[m][l].value();
            }
            dphi[m] = acc / c[m][m].value();
        }
        // ∂^j ψ = e^{ikty} Σ_l binom(j,l) (ikt)^{j-l} φ^{(l)}
        let ikt = Complex64::new(0.0, kt);
        for j in 0..=j_max {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut binom = 1.0;
            for l in 0..=j {
                acc += dphi[l] * binom * ikt.powu((j - l) as u32);
                binom = binom * (j - l) as f64 / (l + 1) as f64;
            }
            out[j][side] = acc / phase;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{ChannelConfig, ProfileSpec};
    use std::f64::consts::PI;

    fn finite_profile(spec: &ProfileSpec, n: usize) -> (ShearProfile, Arc<Grid>) {
        let ch = ChannelConfig::finite(2.0 * PI, n);
        (ShearProfile::build(spec, &ch).unwrap(), Grid::finite(n).unwrap())
    }

    fn sine_mode(grid: &Arc<Grid>, k: f64) -> ModeField {
        ModeField::from_fn(grid.clone(), k, 0.0, |y| Complex64::new((PI * y).sin(), 0.0))
    }

    #[test]
    fn constant_coefficient_stencil() {
        let grid = Grid::finite(11).unwrap();
        let op = EllipticOperator::constant(&grid, 1.0, 1.0).unwrap();
        let h2 = grid.h * grid.h;
        let (a, b, c) = op.stencil_row(5).unwrap();
        assert!((a - 1.0 / h2).abs() < 1e-12);
        assert!((b + 2.0 / h2 + 1.0).abs() < 1e-12);
        assert!((c - 1.0 / h2).abs() < 1e-12);
    }

    #[test]
    fn couette_sine_solution() {
        let (p, grid) = finite_profile(&ProfileSpec::couette(), 513);
        let op = assemble_conjugated_operator(&p, &grid, 1.0).unwrap();
        let psi = op.solve(&sine_mode(&grid, 1.0), 0.0).unwrap();
        for (v, &y) in psi.values.iter().zip(&grid.z) {
            assert!((v.re + (PI * y).sin() / (1.0 + PI * PI)).abs() < 1e-5);
        }
        let bd = neumann_data_fd(&psi).unwrap();
        assert!((bd.neumann_0.re + PI / (1.0 + PI * PI)).abs() < 1e-5);
        assert!((bd.neumann_1.re - PI / (1.0 + PI * PI)).abs() < 1e-5);
    }

    #[test]
    fn apply_solve_round_trip() {
        let (p, grid) = finite_profile(&ProfileSpec::bump(0.05, 0.5, 0.2), 101);
        let op = assemble_conjugated_operator(&p, &grid, 2.0).unwrap();
        let mut omega = ModeField::from_fn(grid.clone(), 2.0, 0.0, |y| {
            Complex64::new((3.0 * y).cos(), (7.0 * y * y).sin())
        });
        omega.values[0] = Complex64::new(0.0, 0.0);
        omega.values[100] = Complex64::new(0.0, 0.0);
        for t in [0.0, 3.7, 40.0] {
            let psi = op.solve(&omega, t).unwrap();
            let back = op.apply(&psi.values, t).unwrap();
            let err: f64 = back.iter().zip(&omega.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "t = {t}: {err}");
        }
    }

    #[test]
    fn periodic_couette_is_diagonal() {
        let grid = Grid::infinite(PI, 64).unwrap();
        let op = EllipticOperator::constant(&grid, 1.0, 1.0).unwrap();
        let s = 1.0 / grid.period.sqrt();
        let omega = ModeField::from_fn(grid.clone(), 1.0, 0.0, |z| Complex64::from_polar(s, 3.0 * z));
        let t = 1.5;
        let psi = op.solve(&omega, t).unwrap();
        let want = -1.0 / (1.0 + (3.0 - t).powi(2));
        for (a, b) in psi.values.iter().zip(&omega.values) {
            assert!((a - b * want).norm() < 1e-14);
        }
    }

    #[test]
    fn periodic_variable_coefficient_round_trip() {
        let ch = ChannelConfig::infinite(2.0 * PI, 8.0, 256);
        let p = ShearProfile::build(&ProfileSpec::bump(0.05, 0.0, 1.0), &ch).unwrap();
        let grid = Grid::infinite(8.0, 256).unwrap();
        let op = assemble_conjugated_operator(&p, &grid, 1.0).unwrap();
        let omega = ModeField::from_fn(grid.clone(), 1.0, 0.0, |z| Complex64::new((-z * z).exp(), 0.0));
        for t in [0.0, 5.0] {
            let psi = op.solve(&omega, t).unwrap();
            let back = op.apply(&psi.values, t).unwrap();
            let err: f64 = back.iter().zip(&omega.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "t = {t}: {err}");
        }
    }

    #[test]
    fn kernel_solution_normalization() {
        let (p, grid) = finite_profile(&ProfileSpec::couette(), 65);
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 0.0).unwrap();
        assert!((u0.values[0].re + 1.0).abs() < 1e-14);
        assert!(u0.values[64].norm() < 1e-14);
        assert!((u1.values[64].re - 1.0).abs() < 1e-14);
        assert!(u1.values[0].norm() < 1e-14);
        // u_1 = sinh(y)/sinh(1) for Couette
        assert!((u1.values[32].re - 0.5f64.sinh() / 1f64.sinh()).abs() < 1e-14);
        let (v0, _) = homogeneous_solutions(&p, &grid, 1.0, 7.0).unwrap();
        for (a, b) in u0.values.iter().zip(&v0.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_residual_small() {
        let (p, grid) = finite_profile(&ProfileSpec::sine(0.05), 2049);
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 2.0).unwrap();
        assert!(homogeneous_residual(&p, &u0).unwrap() < 1e-8);
        assert!(homogeneous_residual(&p, &u1).unwrap() < 1e-8);
    }

    #[test]
    fn kernel_residual_converges_on_bump() {
        let res = |n: usize| {
            let (p, grid) = finite_profile(&ProfileSpec::bump(0.05, 0.5, 0.2), n);
            let (u0, _) = homogeneous_solutions(&p, &grid, 1.0, 0.0).unwrap();
            homogeneous_residual(&p, &u0).unwrap()
        };
        let ratio = res(513) / res(1025);
        assert!(ratio > 8.0, "ratio {ratio}");
    }

    #[test]
    fn neumann_methods_agree() {
        let (p, grid) = finite_profile(&ProfileSpec::couette(), 512);
        let omega = sine_mode(&grid, 1.0);
        let op = assemble_conjugated_operator(&p, &grid, 1.0).unwrap();
        let fd = neumann_data_fd(&op.solve(&omega, 0.0).unwrap()).unwrap();
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 0.0).unwrap();
        let int = neumann_data_integral(&omega, &u0, &u1, &p).unwrap();
        assert!((fd.neumann_0 - int.neumann_0).norm() < 1e-4);
        assert!((fd.neumann_1 - int.neumann_1).norm() < 1e-4);
        assert!((int.neumann_0.re + PI / (1.0 + PI * PI)).abs() < 1e-5);
    }

    #[test]
    fn neumann_methods_agree_on_bump() {
        let (p, grid) = finite_profile(&ProfileSpec::bump(0.1, 0.4, 0.3), 801);
        let omega = ModeField::from_fn(grid.clone(), 1.0, 0.0, |y| {
            Complex64::new(y * (1.0 - y) * (2.0 * y).exp(), 0.3 * (PI * y).sin())
        });
        let op = assemble_conjugated_operator(&p, &grid, 1.0).unwrap();
        for t in [0.0, 2.0, 10.0] {
            let fd = neumann_data_fd(&op.solve(&omega, t).unwrap()).unwrap();
            let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, t).unwrap();
            let int = neumann_data_integral(&omega, &u0, &u1, &p).unwrap();
            let scale = int.neumann_0.norm().max(int.neumann_1.norm());
            assert!((fd.neumann_0 - int.neumann_0).norm() < 1e-3 * scale, "t={t}");
            assert!((fd.neumann_1 - int.neumann_1).norm() < 1e-3 * scale, "t={t}");
        }
    }

    #[test]
    fn zero_data_gives_zero_traces() {
        let (p, grid) = finite_profile(&ProfileSpec::couette(), 64);
        let zero = ModeField::zeros(grid.clone(), 1.0, 0.0);
        let fd = neumann_data_fd(&zero).unwrap();
        assert_eq!(fd.neumann_0, Complex64::new(0.0, 0.0));
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 0.0).unwrap();
        let int = neumann_data_integral(&zero, &u0, &u1, &p).unwrap();
        assert_eq!(int.neumann_1, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn lambda_eigenfunction() {
        let grid = Grid::finite(1025).unwrap();
        let w = WeightParams::default();
        let u = sine_mode(&grid, 1.0);
        let lam = lambda_solve(&u, 0.0, &w).unwrap();
        assert!((lam.values[512].re + 1.0 / (1.0 + PI * PI)).abs() < 1e-5);
        let dn = hm1t_dual_norm(&u, 0.0, &w).unwrap();
        let want = (1.0 / (2.0 * (1.0 + PI * PI))).sqrt();
        assert!((dn.value - want).abs() < 1e-5);
        assert!((dn.value - dn.via_h1t).abs() < 1e-8 * dn.value);
    }

    #[test]
    fn traces_of_couette_layer() {
        // ψ = -sin(πy)/(1+π²) at t = 0: ∂²ψ(0) = 0, ∂³ψ(0) = π³/(1+π²)
        let (p, grid) = finite_profile(&ProfileSpec::couette(), 1025);
        let omega = sine_mode(&grid, 1.0);
        let (u0, u1) = homogeneous_solutions(&p, &grid, 1.0, 0.0).unwrap();
        let first = neumann_data_integral(&omega, &u0, &u1, &p).unwrap();
        let tr = boundary_traces(&first, &omega, &p, 3).unwrap();
        let c = 1.0 / (1.0 + PI * PI);
        assert!(tr[0][0].norm() < 1e-14);
        assert!((tr[1][0].re + PI * c).abs() < 1e-5);
        assert!(tr[2][0].norm() < 1e-4);
        assert!((tr[3][0].re - PI.powi(3) * c).abs() < 1e-3);
        assert!((tr[3][1].re + PI.powi(3) * c).abs() < 1e-3);
    }
}
