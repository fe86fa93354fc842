//! Pseudospectral integration of `u_t = −∂ₓ(u_xx + 2u³ − b(x,t)u)` on a
//! periodic grid: integrating factor for the dispersive term and classical
//! RK4 for the nonlinear flux.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functionals::{conserved, FieldSample};
use crate::grid::LineGrid;
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dealias {
    None,
    /// Zero the top third of the spectrum in every nonlinear evaluation.
    #[default]
    TwoThirds,
    /// Evaluate the cubic on a grid padded to twice the size (alias-free).
    Padded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_points: usize,
    pub half_width: f64,
    /// Time step; `None` picks a stable default from the initial amplitude.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub dealias: Dealias,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Record a snapshot every this many steps.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Blow-up guard as a multiple of the initial sup norm.
    #[serde(default = "default_guard")]
    pub blowup_factor: f64,
}

fn one() -> f64 {
    1.0
}
fn default_stride() -> usize {
    10
}
fn default_guard() -> f64 {
    50.0
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_points: 256,
            half_width: std::f64::consts::PI,
            dt: None,
            t_end: 1.0,
            dealias: Dealias::TwoThirds,
            alpha: 1.0,
            record_stride: default_stride(),
            blowup_factor: default_guard(),
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<LineGrid> {
        if !self.n_points.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("n_points {} must be a power of two", self.n_points)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidConfig("dt must be positive".into()));
            }
        }
        LineGrid::new(self.n_points, self.half_width)
    }

    /// Step limited by the nonlinear flux once the dispersive term is handled exactly.
    pub fn default_dt(grid: &LineGrid, u_sup: f64, b_sup: f64) -> f64 {
        let kmax = grid.wavenumber(grid.n() / 2);
        (0.2 / (kmax * (6.0 * u_sup * u_sup + b_sup + 1.0))).min(2.0 / kmax)
    }
}

/// Field values on a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub values: Vec<f64>,
    pub grid: LineGrid,
}

impl FieldState {
    pub fn new(t: f64, values: Vec<f64>, grid: &LineGrid) -> Self {
        assert_eq!(values.len(), grid.n());
        Self { t, values, grid: grid.clone() }
    }

    pub fn sample(&self) -> FieldSample {
        FieldSample::new(self.values.clone(), &self.grid)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Integrator state that owns its FFT buffers.
pub struct Solver {
    grid: LineGrid,
    b: PotentialSpec,
    dealias: Dealias,
    dt: f64,
    /// `ik` per bin.
    ik: Vec<Complex64>,
    /// `e^{ik³dt/2}`.
    half: Vec<Complex64>,
    mask: Vec<bool>,
    pad: Option<Padding>,
    guard: f64,
    b_cache: Option<Vec<f64>>,
    work: Vec<Complex64>,
}

struct Padding {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl Solver {
    pub fn new(grid: &LineGrid, b: &PotentialSpec, dealias: Dealias, dt: f64, guard: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step {dt} must be positive")));
        }
        let n = grid.n();
        let ks = grid.wavenumbers();
        let ik = ks.iter().map(|&k| Complex64::new(0.0, k)).collect();
        let half = ks.iter().map(|&k| Complex64::from_polar(1.0, 0.5 * k.powi(3) * dt)).collect();
        let cutoff = n / 3;
        let mask = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j } else { n - j };
                match dealias {
                    Dealias::TwoThirds => m <= cutoff && m != n / 2,
                    _ => m != n / 2,
                }
            })
            .collect();
        let pad = (dealias == Dealias::Padded).then(|| {
            let m = 2 * n;
            let mut planner = FftPlanner::new();
            Padding {
                m,
                fwd: planner.plan_fft_forward(m),
                inv: planner.plan_fft_inverse(m),
                buf: vec![Complex64::new(0.0, 0.0); m],
            }
        });
        let b_cache = b.is_autonomous().then(|| b.sample(grid, 0.0));
        Ok(Self {
            grid: grid.clone(),
            b: b.clone(),
            dealias,
            dt,
            ik,
            half,
            mask,
            pad,
            guard,
            b_cache,
            work: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &LineGrid {
        &self.grid
    }

    /// Fourier transform of `−∂ₓ(2u³ − bu)` given `û`.
    fn flux(&mut self, uh: &[Complex64], t: f64, out: &mut [Complex64]) {
        let n = self.grid.n();
        let b_now;
        let b: &[f64] = match &self.b_cache {
            Some(c) => c,
            None => {
                b_now = self.b.sample(&self.grid, t);
                &b_now
            }
        };
        if let Some(p) = self.pad.as_mut() {
            // Spread û onto the padded spectrum, cube there, and fold back.
            let scale = p.m as f64 / n as f64;
            p.buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for j in 0..n {
                if !self.mask[j] {
                    continue;
                }
                let dst = if j <= n / 2 { j } else { p.m - (n - j) };
                p.buf[dst] = uh[j] * scale;
            }
            p.inv.process(&mut p.buf);
            let inv_m = 1.0 / p.m as f64;
            for c in p.buf.iter_mut() {
                let u = c.re * inv_m;
                *c = Complex64::new(2.0 * u * u * u, 0.0);
            }
            p.fwd.process(&mut p.buf);
            for j in 0..n {
                let src = if j <= n / 2 { j } else { p.m - (n - j) };
                out[j] = p.buf[src] / scale;
            }
            // The linear term is exact on the base grid.
            self.work.copy_from_slice(uh);
            self.grid.inverse_in_place(&mut self.work);
            for (w, bv) in self.work.iter_mut().zip(b) {
                *w = Complex64::new(w.re * bv, 0.0);
            }
            self.grid.forward_in_place(&mut self.work);
            for j in 0..n {
                out[j] -= self.work[j];
            }
        } else {
            self.work.copy_from_slice(uh);
            if self.dealias == Dealias::TwoThirds {
                for (w, &keep) in self.work.iter_mut().zip(&self.mask) {
                    if !keep {
                        *w = Complex64::new(0.0, 0.0);
                    }
                }
            }
            self.grid.inverse_in_place(&mut self.work);
            for (w, bv) in self.work.iter_mut().zip(b) {
                let u = w.re;
                *w = Complex64::new(2.0 * u * u * u - bv * u, 0.0);
            }
            self.grid.forward_in_place(&mut self.work);
            out.copy_from_slice(&self.work);
        }
        for j in 0..n {
            out[j] = if self.mask[j] { -self.ik[j] * out[j] } else { Complex64::new(0.0, 0.0) };
        }
    }

    /// One integrating-factor RK4 step in Fourier space.
    pub fn step_spectral(&mut self, uh: &mut [Complex64], t: f64) {
        let n = uh.len();
        let dt = self.dt;
        let e = self.half.clone();
        let zero = Complex64::new(0.0, 0.0);
        let mut k1 = vec![zero; n];
        let mut k2 = vec![zero; n];
        let mut k3 = vec![zero; n];
        let mut k4 = vec![zero; n];
        let mut tmp = vec![zero; n];
        self.flux(uh, t, &mut k1);
        for j in 0..n {
            tmp[j] = e[j] * (uh[j] + 0.5 * dt * k1[j]);
        }
        self.flux(&tmp, t + 0.5 * dt, &mut k2);
        for j in 0..n {
            tmp[j] = e[j] * uh[j] + 0.5 * dt * k2[j];
        }
        self.flux(&tmp, t + 0.5 * dt, &mut k3);
        for j in 0..n {
            tmp[j] = e[j] * e[j] * uh[j] + dt * e[j] * k3[j];
        }
        self.flux(&tmp, t + dt, &mut k4);
        for j in 0..n {
            let e2 = e[j] * e[j];
            uh[j] = e2 * uh[j] + dt / 6.0 * (e2 * k1[j] + 2.0 * e[j] * (k2[j] + k3[j]) + k4[j]);
        }
    }

    pub fn step(&mut self, state: &mut FieldState) -> Result<()> {
        let mut uh = self.grid.forward(&state.values);
        self.step_spectral(&mut uh, state.t);
        state.values = self.grid.inverse(uh);
        state.t += self.dt;
        self.check(state)
    }

    fn check(&self, state: &FieldState) -> Result<()> {
        let s = state.sup();
        if !s.is_finite() || s > self.guard {
            return Err(Error::BlowUp { t: state.t });
        }
        Ok(())
    }

    /// Advances `u0` for `steps` steps, recording every `stride` steps
    /// (the initial and final states are always recorded).
    pub fn run(&mut self, u0: &FieldState, steps: usize, stride: usize) -> Result<Vec<FieldState>> {
        let stride = stride.max(1);
        let mut uh = self.grid.forward(&u0.values);
        let mut t = u0.t;
        let mut out = vec![u0.clone()];
        for s in 1..=steps {
            self.step_spectral(&mut uh, t);
            t = u0.t + s as f64 * self.dt;
            if s % stride == 0 || s == steps {
                let st = FieldState::new(t, self.grid.inverse(uh.clone()), &self.grid);
                self.check(&st)?;
                out.push(st);
            } else if uh.iter().any(|c| !c.re.is_finite()) {
                return Err(Error::BlowUp { t });
            }
        }
        Ok(out)
    }
}

/// Conservation diagnostics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub i1_drift: f64,
    pub i3_drift: f64,
    pub i5_drift: f64,
    /// `|I₁(t_end) − I₁(0) − ∫⟨bₓ, u²⟩dt|` (trapezoid over snapshots).
    pub momentum_balance: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<FieldState>,
    pub drift: DriftReport,
    pub dt: f64,
}

/// A single step with the configured dealiasing.
pub fn step(state: &FieldState, cfg: &SolverConfig, b: &PotentialSpec) -> Result<FieldState> {
    let dt = resolve_dt(cfg, state, b)?;
    let mut solver = Solver::new(&state.grid, b, cfg.dealias, dt, guard(cfg, state))?;
    let mut s = state.clone();
    solver.step(&mut s)?;
    Ok(s)
}

fn guard(cfg: &SolverConfig, u0: &FieldState) -> f64 {
    cfg.blowup_factor * u0.sup().max(1e-3)
}

fn resolve_dt(cfg: &SolverConfig, u0: &FieldState, b: &PotentialSpec) -> Result<f64> {
    if let Some(dt) = cfg.dt {
        return if dt > 0.0 { Ok(dt) } else { Err(Error::InvalidConfig("dt must be positive".into())) };
    }
    let b_sup = b.sample(&u0.grid, u0.t).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SolverConfig::default_dt(&u0.grid, u0.sup(), b_sup))
}

/// Integrates to `cfg.t_end` (step rounded so that it lands exactly).
pub fn integrate(u0: &FieldState, cfg: &SolverConfig, b: &PotentialSpec) -> Result<RunOutput> {
    let dt0 = resolve_dt(cfg, u0, b)?;
    let span = cfg.t_end - u0.t;
    if !(span >= 0.0) {
        return Err(Error::InvalidConfig("t_end precedes the initial time".into()));
    }
    let steps = (span / dt0).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut solver = Solver::new(&u0.grid, b, cfg.dealias, dt.max(f64::MIN_POSITIVE), guard(cfg, u0))?;
    let snapshots = if span == 0.0 { vec![u0.clone()] } else { solver.run(u0, steps, cfg.record_stride)? };
    let drift = drift_report(&snapshots, b);
    Ok(RunOutput { snapshots, drift, dt })
}

fn drift_report(snaps: &[FieldState], b: &PotentialSpec) -> DriftReport {
    let mut out = DriftReport { i1_drift: 0.0, i3_drift: 0.0, i5_drift: 0.0, momentum_balance: 0.0 };
    let Some(first) = snaps.first() else { return out };
    let g = &first.grid;
    // Periodic data need not decay, so evaluate the integrals directly.
    let integrals = |s: &FieldState| -> [f64; 3] {
        let u = FieldSample { values: s.values.clone(), grid: g.clone(), decay_flag: true };
        conserved(&u).map(|r| [r.i1, r.i3, r.i5]).unwrap_or([f64::NAN; 3])
    };
    let i0 = integrals(first);
    let rate = |s: &FieldState| -> f64 {
        let bx: Vec<f64> = g.sample(|x| b.eval_dx(x, s.t, 1));
        let u2: Vec<f64> = s.values.iter().map(|v| v * v).collect();
        g.inner(&bx, &u2)
    };
    let mut growth = 0.0;
    let mut prev_rate = rate(first);
    for w in snaps.windows(2) {
        let r = rate(&w[1]);
        growth += 0.5 * (w[1].t - w[0].t) * (prev_rate + r);
        prev_rate = r;
        let i = integrals(&w[1]);
        out.i1_drift = out.i1_drift.max((i[0] - i0[0]).abs());
        out.i3_drift = out.i3_drift.max((i[1] - i0[1]).abs());
        out.i5_drift = out.i5_drift.max((i[2] - i0[2]).abs());
    }
    let last = integrals(snaps.last().unwrap());
    out.momentum_balance = (last[0] - i0[0] - growth).abs();
    out
}

/// Maps a box solution `U(X,T)` with potential `B` to the line problem
/// `u(x,t) = αU(αx, α³t)`, `b(x,t) = α²B(αx, α³t)`.
pub fn rescale_to_line(u: &FieldState, b: &PotentialSpec, alpha: f64) -> Result<(FieldState, PotentialSpec)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    let grid = LineGrid::new(u.grid.n(), u.grid.half_width() / alpha)?;
    let values = u.values.iter().map(|v| alpha * v).collect();
    Ok((FieldState::new(u.t / alpha.powi(3), values, &grid), b.rescaled(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::{eta, q2, SolitonParams};

    #[test]
    fn zero_stays_zero() {
        let g = LineGrid::new(64, 10.0).unwrap();
        let cfg = SolverConfig { n_points: 64, half_width: 10.0, dt: Some(1e-3), t_end: 0.05, ..Default::default() };
        let out = integrate(&FieldState::new(0.0, vec![0.0; 64], &g), &cfg, &PotentialSpec::listex(3).unwrap()).unwrap();
        assert!(out.snapshots.iter().all(|s| s.sup() == 0.0));
    }

    #[test]
    fn single_soliton_travels_at_c_squared() {
        let c = 1.5;
        let g = LineGrid::new(256, 20.0).unwrap();
        let u0 = FieldState::new(0.0, g.sample(|x| eta(x, -3.0, c)), &g);
        let cfg = SolverConfig { n_points: 256, half_width: 20.0, t_end: 1.0, dt: Some(2e-4), dealias: Dealias::Padded, ..Default::default() };
        let out = integrate(&u0, &cfg, &PotentialSpec::zero()).unwrap();
        let last = out.snapshots.last().unwrap();
        let err = (0..g.n()).map(|j| (last.values[j] - eta(g.x(j), -3.0 + c * c, c)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!(out.drift.i1_drift < 1e-10);
    }

    #[test]
    fn two_soliton_with_dealias_variants() {
        let p = SolitonParams::new([-2.0, 1.0], [1.0, 1.6]).unwrap();
        let g = LineGrid::new(512, 25.0).unwrap();
        let u0 = FieldState::new(0.0, g.sample(|x| q2(x, &p)), &g);
        for d in [Dealias::None, Dealias::TwoThirds, Dealias::Padded] {
            let cfg = SolverConfig { n_points: 512, half_width: 25.0, t_end: 0.5, dt: Some(2e-4), dealias: d, ..Default::default() };
            let out = integrate(&u0, &cfg, &PotentialSpec::zero()).unwrap();
            let last = out.snapshots.last().unwrap();
            let exact = SolitonParams::new([-2.0 + 0.5, 1.0 + 0.5 * 2.56], [1.0, 1.6]).unwrap();
            let err = (0..g.n()).map(|j| (last.values[j] - q2(g.x(j), &exact)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "{d:?}: {err}");
        }
    }

    #[test]
    fn momentum_balance_with_potential() {
        let g = LineGrid::new(256, 20.0).unwrap();
        let u0 = FieldState::new(0.0, g.sample(|x| eta(x, 0.0, 1.0)), &g);
        let b = PotentialSpec::cos2().with_h(0.2);
        let cfg = SolverConfig { n_points: 256, half_width: 20.0, t_end: 1.0, record_stride: 1, ..Default::default() };
        let out = integrate(&u0, &cfg, &b).unwrap();
        assert!(out.drift.momentum_balance < 1e-5, "{:?}", out.drift);
    }

    #[test]
    fn blowup_is_reported() {
        let g = LineGrid::new(64, 10.0).unwrap();
        let u0 = FieldState::new(0.0, g.sample(|x| eta(x, 0.0, 1.0)), &g);
        let cfg = SolverConfig { n_points: 64, half_width: 10.0, dt: Some(0.5), t_end: 50.0, ..Default::default() };
        assert!(matches!(integrate(&u0, &cfg, &PotentialSpec::zero()), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn rescale_round_trip() {
        let g = LineGrid::new(64, std::f64::consts::PI).unwrap();
        let u = FieldState::new(0.3, g.sample(|x| x.cos()), &g);
        let b = PotentialSpec::listex(2).unwrap();
        let (l, lb) = rescale_to_line(&u, &b, 0.2).unwrap();
        let (back, bb) = rescale_to_line(&l, &lb, 5.0).unwrap();
        assert!((back.t - u.t).abs() < 1e-12);
        assert!((back.grid.half_width() - g.half_width()).abs() < 1e-12);
        assert!(back.values.iter().zip(&u.values).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((bb.eval(0.4, 0.01) - b.eval(0.4, 0.01)).abs() < 1e-9);
        let (same, _) = rescale_to_line(&u, &b, 1.0).unwrap();
        assert_eq!(same.values, u.values);
    }
}
