//! Time integration of `∂_t ω_k = -ik f(z) ψ_k`, `ψ_k = L_t ω_k`, in the
//! Lagrangian frame.

use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{assemble_conjugated_operator, EllipticOperator};
use crate::error::{OrrError, Result};
use crate::grid::{ChannelKind, Grid};
use crate::profiles::ShearProfile;
use crate::spectral::ModeField;

/// Registry of initial vorticity shapes; every mode starts from the same
/// shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `a · exp(-((z - c)/w)²)`.
    Gaussian { center: f64, width: f64, amplitude: f64 },
    /// `a · e^{iηz} / sqrt(P)`: a single Fourier coefficient of size `a`.
    PlaneWave { eta: f64, amplitude: f64 },
    /// `a · sin(mπz)`.
    Sine { mode: u32, amplitude: f64 },
    /// `a · (offset + cos(mπz))`.
    Cosine { mode: u32, offset: f64, amplitude: f64 },
    /// `a · exp(-1/(1-x²))`, `x = (z - c)/w`, supported in `(c - w, c + w)`.
    Bump { center: f64, width: f64, amplitude: f64 },
    /// `a · z^{N+1} (1-z)^{N+1} (1 + cos(πz)/2)`.
    Vanishing { order: usize, amplitude: f64 },
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |m: String| Err(OrrError::InvalidParameter(m));
        match *self {
            InitialData::Gaussian { width, .. } | InitialData::Bump { width, .. } if !(width > 0.0) => {
                bad(format!("initial data width {width} must be positive"))
            }
            InitialData::PlaneWave { eta, .. } => {
                let m = eta * grid.period / (2.0 * std::f64::consts::PI);
                if (m - m.round()).abs() > 1e-9 {
                    return bad(format!("eta = {eta} is not a frequency of the period {}", grid.period));
                }
                if eta.abs() >= grid.nyquist() {
                    return bad(format!("eta = {eta} is not resolved (Nyquist {})", grid.nyquist()));
                }
                Ok(())
            }
            InitialData::Sine { .. } | InitialData::Cosine { .. } | InitialData::Vanishing { .. }
                if grid.kind != ChannelKind::Finite =>
            {
                Err(OrrError::WrongChannel { expected: "finite" })
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: f64, period: f64) -> Complex64 {
        use std::f64::consts::PI;
        let re = |v: f64| Complex64::new(v, 0.0);
        match *self {
            InitialData::Zero => re(0.0),
            InitialData::Gaussian { center, width, amplitude } => {
                re(amplitude * (-((z - center) / width).powi(2)).exp())
            }
            InitialData::PlaneWave { eta, amplitude } => {
                Complex64::from_polar(amplitude / period.sqrt(), eta * z)
            }
            InitialData::Sine { mode, amplitude } => re(amplitude * (mode as f64 * PI * z).sin()),
            InitialData::Cosine { mode, offset, amplitude } => {
                re(amplitude * (offset + (mode as f64 * PI * z).cos()))
            }
            InitialData::Bump { center, width, amplitude } => {
                let x = (z - center) / width;
                if x.abs() < 1.0 {
                    re(amplitude * (-1.0 / (1.0 - x * x)).exp())
                } else {
                    re(0.0)
                }
            }
            InitialData::Vanishing { order, amplitude } => {
                let p = (order + 1) as i32;
                re(amplitude * z.powi(p) * (1.0 - z).powi(p) * (1.0 + 0.5 * (PI * z).cos()))
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> Vec<Complex64> {
        grid.z.iter().map(|&z| self.eval(z, grid.period)).collect()
    }
}

/// One evolving mode with its factorized operator.
#[derive(Debug, Clone)]
pub struct ModeState {
    pub omega: ModeField,
    pub omega0: Vec<Complex64>,
    pub op: EllipticOperator,
}

impl ModeState {
    pub fn k(&self) -> f64 {
        self.omega.k
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub t: f64,
    pub profile: Arc<ShearProfile>,
    pub grid: Arc<Grid>,
    /// `f` at the grid nodes.
    pub f: Vec<f64>,
    pub modes: Vec<ModeState>,
    frozen: bool,
}

impl Simulation {
    /// Builds the state at `t = 0` with `initial[i]` as the samples of mode
    /// `ks[i]`.
    pub fn new(
        profile: Arc<ShearProfile>,
        grid: Arc<Grid>,
        ks: &[f64],
        initial: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if ks.len() != initial.len() {
            return Err(OrrError::LengthMismatch { expected: ks.len(), got: initial.len() });
        }
        let f = profile.sample_f(&grid.z);
        let frozen = f.iter().all(|v| *v == 0.0);
        let modes = ks
            .par_iter()
            .zip(initial)
            .map(|(&k, values)| {
                let op = assemble_conjugated_operator(&profile, &grid, k)?;
                let omega = ModeField::new(grid.clone(), k, 0.0, values)?;
                Ok(ModeState { omega0: omega.values.clone(), omega, op })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation { t: 0.0, profile, grid, f, modes, frozen })
    }

    /// Same initial shape for every mode.
    pub fn with_initial_data(
        profile: Arc<ShearProfile>,
        grid: Arc<Grid>,
        ks: &[f64],
        data: &InitialData,
    ) -> Result<Self> {
        data.validate(&grid)?;
        let samples = data.sample(&grid);
        Self::new(profile, grid, ks, vec![samples; ks.len()])
    }

    pub fn ks(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.k()).collect()
    }

    fn mode_rhs(&self, op: &EllipticOperator, omega: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        if self.frozen {
            return Ok(vec![Complex64::new(0.0, 0.0); omega.len()]);
        }
        let psi = op.solve_values(omega, t)?;
        let c = Complex64::new(0.0, -op.k);
        Ok(psi.iter().zip(&self.f).map(|(p, f)| p * c * *f).collect())
    }

    /// `-ik f ψ_k` for every mode at the current time.
    pub fn rhs(&self) -> Result<Vec<Vec<Complex64>>> {
        self.modes
            .par_iter()
            .map(|m| self.mode_rhs(&m.op, &m.omega.values, self.t))
            .collect()
    }

    /// Stream functions `ψ_k = L_t ω_k` at the current time.
    pub fn stream(&self) -> Result<Vec<ModeField>> {
        self.modes.par_iter().map(|m| m.op.solve(&m.omega, self.t)).collect()
    }

    fn rk4_mode(&self, m: &ModeState, dt: f64) -> Result<Vec<Complex64>> {
        let t = self.t;
        let w = &m.omega.values;
        let axpy = |a: &[Complex64], b: &[Complex64], s: f64| -> Vec<Complex64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = self.mode_rhs(&m.op, w, t)?;
        let k2 = self.mode_rhs(&m.op, &axpy(w, &k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = self.mode_rhs(&m.op, &axpy(w, &k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = self.mode_rhs(&m.op, &axpy(w, &k3, dt), t + dt)?;
        let next: Vec<Complex64> = (0..w.len())
            .map(|i| w[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
            .collect();
        if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(OrrError::NonFinite { k: m.k(), t: t + dt });
        }
        Ok(next)
    }

    /// One classical Runge–Kutta step; `ψ` is re-solved at every stage time.
    pub fn step_rk4(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(OrrError::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let next = self.modes.par_iter().map(|m| self.rk4_mode(m, dt)).collect::<Result<Vec<_>>>()?;
        self.t += dt;
        for (m, values) in self.modes.iter_mut().zip(next) {
            m.omega.values = values;
            m.omega.t = self.t;
        }
        Ok(())
    }

    fn set_time(&mut self, t: f64) {
        self.t = t;
        for m in &mut self.modes {
            m.omega.t = t;
        }
    }

    /// `max |ω(t) - ω₀|` over grid points outside `[a, b]`, all modes.
    pub fn support_drift(&self, interval: [f64; 2]) -> f64 {
        let [a, b] = interval;
        let mut worst: f64 = 0.0;
        for m in &self.modes {
            for ((w, w0), &z) in m.omega.values.iter().zip(&m.omega0).zip(&self.grid.z) {
                if z < a || z > b {
                    worst = worst.max((w - w0).norm());
                }
            }
        }
        worst
    }

    /// Samples of `ω(t) - ω₀` per mode.
    pub fn deviation(&self) -> Vec<Vec<Complex64>> {
        self.modes
            .iter()
            .map(|m| m.omega.values.iter().zip(&m.omega0).map(|(a, b)| a - b).collect())
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.modes.iter().map(|m| m.omega.l2_norm().powi(2)).sum::<f64>().sqrt()
    }
}

/// Advances `sim` to `t_end` with fixed `dt`, calling `observe` at `t = 0`,
/// after every `every` steps and at the final time.
pub fn run<F>(sim: &mut Simulation, dt: f64, t_end: f64, every: usize, mut observe: F) -> Result<()>
where
    F: FnMut(&Simulation) -> Result<()>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) || every == 0 {
        return Err(OrrError::InvalidParameter(format!(
            "need dt > 0, t_end >= 0, every >= 1 (got {dt}, {t_end}, {every})"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let t0 = sim.t;
    observe(sim)?;
    for i in 1..=steps {
        sim.step_rk4(dt)?;
        sim.set_time(t0 + i as f64 * dt);
        if i % every == 0 || i == steps {
            observe(sim)?;
        }
    }
    Ok(())
}

/// Stored field samples of every mode at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub ks: Vec<f64>,
    pub omega: Vec<Vec<Complex64>>,
}

impl Snapshot {
    pub fn of(sim: &Simulation) -> Self {
        Snapshot {
            t: sim.t,
            ks: sim.ks(),
            omega: sim.modes.iter().map(|m| m.omega.values.clone()).collect(),
        }
    }

    /// CSV with columns `z, re_0, im_0, re_1, im_1, ...`.
    pub fn write_csv<W: Write>(&self, z: &[f64], mut out: W) -> Result<()> {
        write!(out, "# t={} ks=", self.t)?;
        let ks: Vec<String> = self.ks.iter().map(|k| k.to_string()).collect();
        writeln!(out, "{}", ks.join(";"))?;
        write!(out, "z")?;
        for i in 0..self.omega.len() {
            write!(out, ",re_{i},im_{i}")?;
        }
        writeln!(out)?;
        for (j, zj) in z.iter().enumerate() {
            write!(out, "{zj}")?;
            for w in &self.omega {
                write!(out, ",{},{}", w[j].re, w[j].im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Per-snapshot scalar series with named columns, plus strided field dumps.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        Trajectory { columns, rows: Vec::new(), snapshots: Vec::new() }
    }

    /// Appends a row whose first entry is the time; times must increase.
    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(OrrError::LengthMismatch { expected: self.columns.len(), got: row.len() });
        }
        if let Some(last) = self.rows.last() {
            if !(row[0] > last[0]) {
                return Err(OrrError::InvalidParameter(format!(
                    "snapshot time {} does not follow {}",
                    row[0], last[0]
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| OrrError::Config("series file is empty".into()))??;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut traj = Trajectory::new(columns);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| OrrError::Config(format!("series row {}: {e}", lineno + 2)))?;
            traj.push(row)?;
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{ChannelConfig, ProfileSpec};
    use std::f64::consts::PI;

    fn finite_sim(spec: ProfileSpec, n: usize, ks: &[f64], data: &InitialData) -> Simulation {
        let ch = ChannelConfig::finite(2.0 * PI, n);
        let p = Arc::new(ShearProfile::build(&spec, &ch).unwrap());
        Simulation::with_initial_data(p, ch.grid().unwrap(), ks, data).unwrap()
    }

    #[test]
    fn couette_freezes_vorticity() {
        let data = InitialData::Sine { mode: 1, amplitude: 1.0 };
        let mut sim = finite_sim(ProfileSpec::couette(), 64, &[1.0, 2.0], &data);
        assert!(sim.rhs().unwrap().iter().flatten().all(|v| v.norm() == 0.0));
        let w0 = sim.modes[0].omega.values.clone();
        for _ in 0..10 {
            sim.step_rk4(0.1).unwrap();
        }
        assert!((sim.t - 1.0).abs() < 1e-12);
        assert_eq!(sim.modes[0].omega.values, w0);
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut sim = finite_sim(ProfileSpec::bump(0.05, 0.5, 0.2), 64, &[1.0], &InitialData::Zero);
        run(&mut sim, 0.1, 1.0, 1, |s| {
            assert!(s.l2_norm() == 0.0);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn rhs_magnitude_bound() {
        let data = InitialData::Bump { center: 0.5, width: 0.2, amplitude: 1.0 };
        let sim = finite_sim(ProfileSpec::bump(0.05, 0.5, 0.2), 128, &[1.0], &data);
        let rhs = &sim.rhs().unwrap()[0];
        let psi = &sim.stream().unwrap()[0];
        let rhs_norm = sim.grid.l2_norm(rhs);
        assert!(rhs_norm <= 1.0 * sim.profile.f_sup[0] * psi.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn mirrored_modes_stay_conjugate() {
        let data = InitialData::Bump { center: 0.5, width: 0.25, amplitude: 1.0 };
        let mut sim = finite_sim(ProfileSpec::bump(0.05, 0.5, 0.2), 128, &[1.0, -1.0], &data);
        for _ in 0..50 {
            sim.step_rk4(0.05).unwrap();
        }
        for (a, b) in sim.modes[0].omega.values.iter().zip(&sim.modes[1].omega.values) {
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn support_is_preserved() {
        let data = InitialData::Bump { center: 0.5, width: 0.2, amplitude: 1.0 };
        let mut sim = finite_sim(ProfileSpec::bump(0.1, 0.5, 0.2), 128, &[1.0], &data);
        for _ in 0..100 {
            sim.step_rk4(0.1).unwrap();
        }
        assert!(sim.deviation()[0].iter().any(|v| v.norm() > 1e-6));
        assert_eq!(sim.support_drift([0.3, 0.7]), 0.0);
    }

    #[test]
    fn plane_wave_frequency_is_checked() {
        let grid = Grid::infinite(PI, 32).unwrap();
        assert!(InitialData::PlaneWave { eta: 2.0, amplitude: 1.0 }.validate(&grid).is_ok());
        assert!(InitialData::PlaneWave { eta: 2.5, amplitude: 1.0 }.validate(&grid).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut tr = Trajectory::new(vec!["t".into(), "a".into()]);
        tr.push(vec![0.0, 0.1]).unwrap();
        tr.push(vec![0.5, 1.0 / 3.0]).unwrap();
        assert!(tr.push(vec![0.5, 1.0]).is_err());
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows, tr.rows);
        assert_eq!(back.column("a").unwrap(), vec![0.1, 1.0 / 3.0]);
    }
}
