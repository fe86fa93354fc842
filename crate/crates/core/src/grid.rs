//! Uniform periodic grids and Fourier-space operations on them.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const NOISE_FLOOR: f64 = 1e-14;

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// `n` equispaced points on `[-L, L)`, treated as periodic for spectral work.
#[derive(Clone)]
pub struct LineGrid {
    n: usize,
    half_width: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for LineGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LineGrid")
            .field("n", &self.n)
            .field("half_width", &self.half_width)
            .finish()
    }
}

impl PartialEq for LineGrid {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.half_width == o.half_width
    }
}

impl LineGrid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("grid size {n} must be even and >= 8")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidConfig(format!("half width {half_width} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) };
        Ok(Self { n, half_width, plans: Arc::new(plans) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Angular wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let m = if j <= self.n / 2 { j as f64 } else { j as f64 - self.n as f64 };
        std::f64::consts::PI * m / self.half_width
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n, "field length does not match grid");
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.fwd.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.plans.fwd.process(buf);
    }

    /// Inverse transform including the `1/n` normalisation; returns the real part.
    pub fn inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.plans.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.plans.inv.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    /// Spectral derivative of the given order. Odd orders discard the Nyquist bin.
    ///
    /// Modes below `1e-14` of the largest coefficient are treated as rounding
    /// noise and dropped; otherwise `k^order` amplifies them near Nyquist.
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return f.to_vec();
        }
        let mut h = self.forward(f);
        let floor = NOISE_FLOOR * h.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let ny = self.n / 2;
        for (j, c) in h.iter_mut().enumerate() {
            if (order % 2 == 1 && j == ny) || c.norm() < floor {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            *c *= Complex64::new(0.0, self.wavenumber(j)).powu(order);
        }
        self.inverse(h)
    }

    /// Periodic antiderivative with zero mean (the constant mode is dropped).
    pub fn periodic_antiderivative(&self, f: &[f64]) -> Vec<f64> {
        let mut h = self.forward(f);
        h[0] = Complex64::new(0.0, 0.0);
        h[self.n / 2] = Complex64::new(0.0, 0.0);
        for (j, c) in h.iter_mut().enumerate().skip(1) {
            let k = self.wavenumber(j);
            if k != 0.0 {
                *c /= Complex64::new(0.0, k);
            }
        }
        self.inverse(h)
    }

    /// Rectangle rule, which is spectrally accurate for smooth periodic or decaying data.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.dx()
    }

    /// `H^s` norm with Fourier weight `(1 + k^2)^s`.
    pub fn sobolev_norm(&self, f: &[f64], s: f64) -> f64 {
        let h = self.forward(f);
        let w = self.dx() / self.n as f64;
        let sum: f64 = h
            .iter()
            .enumerate()
            .map(|(j, c)| (1.0 + self.wavenumber(j).powi(2)).powf(s) * c.norm_sqr())
            .sum();
        (sum * w).sqrt()
    }

    /// Largest magnitude within `width` of either end.
    pub fn edge_magnitude(&self, f: &[f64], width: f64) -> f64 {
        let m = ((width / self.dx()).ceil() as usize).clamp(1, self.n / 2);
        f[..m].iter().chain(&f[self.n - m..]).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|j| f(self.x(j))).collect()
    }
}
