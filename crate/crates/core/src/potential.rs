//! Slowly varying external potentials given as trigonometric sums.
//!
//! A [`PotentialSpec`] holds a profile `b₀(X,T) = Σ Aᵢ fᵢ(kᵢX + φᵢ + ωᵢT)` and
//! evaluates `b(x,t) = amplitude · b₀(h·x, time_scale·t)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LineGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Const,
    Cos,
    Sin,
    Cos2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub kind: TermKind,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub omega: f64,
}

fn one() -> f64 {
    1.0
}

impl PotentialTerm {
    pub fn new(kind: TermKind, amplitude: f64, k: f64, phase: f64, omega: f64) -> Self {
        Self { kind, amplitude, k, phase, omega }
    }

    /// `∂_X^m ∂_T^n` of the term at `(X, T)`.
    fn eval(&self, x: f64, t: f64, m: u32, n: u32) -> f64 {
        let arg = self.k * x + self.phase + self.omega * t;
        let order = (m + n) as f64;
        let chain = self.k.powi(m as i32) * self.omega.powi(n as i32);
        match self.kind {
            TermKind::Const => {
                if m + n == 0 {
                    self.amplitude
                } else {
                    0.0
                }
            }
            TermKind::Cos => self.amplitude * chain * (arg + order * FRAC_PI_2).cos(),
            TermKind::Sin => self.amplitude * chain * (arg + order * FRAC_PI_2).sin(),
            TermKind::Cos2 => {
                // cos²θ = ½ + ½cos 2θ
                let base = if m + n == 0 { 0.5 } else { 0.0 };
                let wave = 0.5 * 2f64.powi((m + n) as i32) * chain * (2.0 * arg + order * FRAC_PI_2).cos();
                self.amplitude * (base + wave)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub terms: Vec<PotentialTerm>,
    /// Spatial scale: the profile is read at `h·x`.
    #[serde(default = "one")]
    pub h: f64,
    /// Temporal scale; `None` means the same as `h`.
    #[serde(default)]
    pub time_scale: Option<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl PotentialSpec {
    pub fn new(terms: Vec<PotentialTerm>) -> Self {
        Self { terms, h: 1.0, time_scale: None, amplitude: 1.0 }
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn constant(beta: f64) -> Self {
        Self::new(vec![PotentialTerm::new(TermKind::Const, beta, 0.0, 0.0, 0.0)])
    }

    /// `cos²X`, the autonomous profile of the crossing experiments.
    pub fn cos2() -> Self {
        Self::new(vec![PotentialTerm::new(TermKind::Cos2, 1.0, 1.0, 0.0, 0.0)])
    }

    /// Built-in catalogue of box potentials `B(X,T)`, indexed 1 to 4.
    pub fn listex(index: usize) -> Result<Self> {
        use TermKind::*;
        let t = PotentialTerm::new;
        let terms = match index {
            1 => vec![t(Cos2, 100.0, 1.0, 0.0, -1e3), t(Sin, -50.0, 2.0, 0.0, 1e3)],
            2 => vec![t(Cos2, 100.0, 1.0, 0.0, -1e3), t(Sin, 50.0, 2.0, 0.0, 1e3)],
            3 => vec![t(Cos2, 60.0, 1.0, 1.0, -1e2), t(Sin, 40.0, 2.0, 2.0, 1e2)],
            4 => vec![t(Cos, 40.0, 2.0, 3.0, -1e2), t(Sin, 30.0, 1.0, 1.0, 1e2)],
            _ => return Err(Error::InvalidConfig(format!("unknown catalogue potential listex{index}"))),
        };
        Ok(Self { terms, h: 1.0, time_scale: Some(1.0), amplitude: 1.0 })
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale.unwrap_or(self.h)
    }

    /// `α²·b(αx, α³t)`, the potential seen after the KdV rescaling by `α`.
    pub fn rescaled(&self, alpha: f64) -> Self {
        Self {
            terms: self.terms.clone(),
            h: self.h * alpha,
            time_scale: Some(self.time_scale() * alpha.powi(3)),
            amplitude: self.amplitude * alpha * alpha,
        }
    }

    /// Line potential `b(x,t) = h²B(hx, h³t)` for a box potential `B`,
    /// so that `b = b₀(hx, ht)` with `b₀(X,T) = h²B(X, h²T)`.
    pub fn box_to_line(&self, h: f64) -> Self {
        self.rescaled(h)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn is_autonomous(&self) -> bool {
        self.time_scale() == 0.0 || self.terms.iter().all(|t| t.omega == 0.0 || t.kind == TermKind::Const)
    }

    /// `∂_X^m ∂_T^n b₀(X,T)` of the unscaled profile.
    pub fn profile_deriv(&self, x: f64, t: f64, m: u32, n: u32) -> f64 {
        self.terms.iter().map(|term| term.eval(x, t, m, n)).sum()
    }

    pub fn profile(&self, x: f64, t: f64) -> f64 {
        self.profile_deriv(x, t, 0, 0)
    }

    /// `∂ₓ^m b(x,t)`.
    pub fn eval_dx(&self, x: f64, t: f64, m: u32) -> f64 {
        self.amplitude * self.h.powi(m as i32) * self.profile_deriv(self.h * x, self.time_scale() * t, m, 0)
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.eval_dx(x, t, 0)
    }

    pub fn eval_dt(&self, x: f64, t: f64) -> f64 {
        let ts = self.time_scale();
        self.amplitude * ts * self.profile_deriv(self.h * x, ts * t, 0, 1)
    }

    /// `∂_X^m b₀(X,T)` for the slow profile with `b(x,t) = b₀(hx, ht)`.
    pub fn b0_dx(&self, x: f64, t: f64, m: u32) -> f64 {
        let tau = if self.h == 0.0 { 0.0 } else { self.time_scale() / self.h * t };
        self.amplitude * self.profile_deriv(x, tau, m, 0)
    }

    pub fn b0(&self, x: f64, t: f64) -> f64 {
        self.b0_dx(x, t, 0)
    }

    pub fn sample(&self, grid: &LineGrid, t: f64) -> Vec<f64> {
        grid.sample(|x| self.eval(x, t))
    }

    /// `[b, ∂ₓb, …, ∂ₓ^max b]` sampled on the grid.
    pub fn sample_derivatives(&self, grid: &LineGrid, t: f64, max_order: u32) -> Vec<Vec<f64>> {
        (0..=max_order).map(|m| grid.sample(|x| self.eval_dx(x, t, m))).collect()
    }

    /// Bounds of `∂_X b₀` over one period scan, used for growth envelopes.
    pub fn profile_slope_range(&self, t: f64, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
        (0..=samples)
            .map(|i| lo + (hi - lo) * i as f64 / samples as f64)
            .map(|x| self.profile_deriv(x, t, 1, 0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }
}
