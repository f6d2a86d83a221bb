//! Collocation grids and the discrete Fourier conventions used for spectra.
//!
//! * Finite channel: `n` nodes `z_i = i/(n-1)` on `[0,1]`, endpoints included.
//!   Spectra are the Fourier series of the 1-periodic extension built from the
//!   first `n-1` samples (the sample at `z=1` is identified with `z=0`).
//! * Infinite channel: the periodic box `[-Z, Z)` with `n` nodes
//!   `z_j = -Z + j h`, `h = 2Z/n`.
//!
//! Normalization is unitary with respect to `∫ |u|² dz` over one period `P`:
//! `c_m = sqrt(P)/N · Σ_j u_j e^{-i η_m z_j}` and `u(z) = Σ_m c_m e^{i η_m z} / sqrt(P)`,
//! with `η_m = 2π m / P` and `N` the number of periodic samples.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{OrrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Infinite,
    Finite,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Infinite => "infinite",
            ChannelKind::Finite => "finite",
        }
    }
}

pub struct Grid {
    pub kind: ChannelKind,
    pub z: Vec<f64>,
    pub h: f64,
    pub period: f64,
    eta: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("kind", &self.kind)
            .field("n", &self.z.len())
            .field("h", &self.h)
            .field("period", &self.period)
            .finish()
    }
}

impl Grid {
    pub fn finite(n: usize) -> Result<Arc<Grid>> {
        if n < 6 {
            return Err(OrrError::InvalidChannel(format!("n_grid = {n} < 6")));
        }
        let h = 1.0 / (n - 1) as f64;
        let z = (0..n).map(|i| i as f64 * h).collect();
        Ok(Self::build(ChannelKind::Finite, z, h, 1.0, n - 1))
    }

    pub fn infinite(half_width: f64, n: usize) -> Result<Arc<Grid>> {
        if n < 8 || !(half_width > 0.0) {
            return Err(OrrError::InvalidChannel(format!(
                "infinite box needs n_grid >= 8 and Z > 0 (got n = {n}, Z = {half_width})"
            )));
        }
        let period = 2.0 * half_width;
        let h = period / n as f64;
        let z = (0..n).map(|j| -half_width + j as f64 * h).collect();
        Ok(Self::build(ChannelKind::Infinite, z, h, period, n))
    }

    fn build(kind: ChannelKind, z: Vec<f64>, h: f64, period: f64, n_fft: usize) -> Arc<Grid> {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_fft);
        let inv = planner.plan_fft_inverse(n_fft);
        let eta = (0..n_fft)
            .map(|i| {
                let m = if i <= (n_fft - 1) / 2 { i as f64 } else { i as f64 - n_fft as f64 };
                2.0 * std::f64::consts::PI * m / period
            })
            .collect();
        Arc::new(Grid { kind, z, h, period, eta, fwd, inv })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Number of independent periodic samples (the spectrum length).
    pub fn n_periodic(&self) -> usize {
        self.eta.len()
    }

    /// Dual frequencies in FFT order.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// Symbol `η - kt` of `∂_z - ikt` with the unpaired Nyquist frequency of
    /// an even-length transform set to zero, so that the operator maps
    /// conjugate data of `k` to conjugate data of `-k`.
    pub fn sheared_symbol(&self, kt: f64) -> Vec<f64> {
        let n = self.eta.len();
        self.eta
            .iter()
            .enumerate()
            .map(|(i, &eta)| if n % 2 == 0 && i == n / 2 { 0.0 } else { eta - kt })
            .collect()
    }

    /// Largest resolved |η|.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.h
    }

    pub fn z0(&self) -> f64 {
        self.z[0]
    }

    /// Quadrature weight of node `i` (trapezoid on `[0,1]`, uniform on the box).
    pub fn weight(&self, i: usize) -> f64 {
        match self.kind {
            ChannelKind::Finite if i == 0 || i + 1 == self.z.len() => 0.5 * self.h,
            _ => self.h,
        }
    }

    /// `∫ conj(a) b dz` by the grid quadrature.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| x.conj() * y * self.weight(i))
            .sum()
    }

    pub fn l2_norm(&self, a: &[Complex64]) -> f64 {
        a.iter()
            .enumerate()
            .map(|(i, x)| x.norm_sqr() * self.weight(i))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_periodic();
        let mut buf: Vec<Complex64> = values[..n].to_vec();
        self.fwd.process(&mut buf);
        let scale = self.period.sqrt() / n as f64;
        let z0 = self.z0();
        for (c, eta) in buf.iter_mut().zip(&self.eta) {
            *c *= Complex64::from_polar(scale, -eta * z0);
        }
        buf
    }

    pub(crate) fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let scale = 1.0 / self.period.sqrt();
        let z0 = self.z0();
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.eta)
            .map(|(c, eta)| c * Complex64::from_polar(scale, eta * z0))
            .collect();
        self.inv.process(&mut buf);
        if self.kind == ChannelKind::Finite {
            buf.push(buf[0]);
        }
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_grid_layout() {
        let g = Grid::finite(11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.n_periodic(), 10);
        assert!((g.h - 0.1).abs() < 1e-15);
        assert!((g.z[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_frequencies() {
        let g = Grid::infinite(std::f64::consts::PI, 8).unwrap();
        let eta: Vec<f64> = g.eta().to_vec();
        assert_eq!(eta, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn coarse_grids_rejected() {
        assert!(Grid::finite(5).is_err());
        assert!(Grid::infinite(1.0, 4).is_err());
    }
}
