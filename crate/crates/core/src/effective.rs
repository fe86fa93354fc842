//! Effective equations of motion for the soliton parameters.
//!
//! The coupled system evolves `(a, c)` on the line under the restricted
//! Hamiltonian `−(|c₁|³+|c₂|³)/3 + B(a,c,t)`. The decoupled system evolves
//! `(A, C)` in slow variables `X = hx`, `T = ht` with each soliton feeling
//! only `b₀` at its own position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::interaction_with_gradient;
use crate::potential::PotentialSpec;
use crate::soliton::SolitonParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveState {
    pub t: f64,
    pub a: [f64; 2],
    pub c: [f64; 2],
}

impl EffectiveState {
    pub fn new(t: f64, a: [f64; 2], c: [f64; 2]) -> Self {
        Self { t, a, c }
    }

    fn y(&self) -> [f64; 4] {
        [self.a[0], self.a[1], self.c[0], self.c[1]]
    }

    fn from_y(t: f64, y: [f64; 4]) -> Self {
        Self { t, a: [y[0], y[1]], c: [y[2], y[3]] }
    }

    pub fn params(&self) -> SolitonParams {
        SolitonParams { a: self.a, c: self.c, eps: [1.0, 1.0] }
    }

    /// Smallest of `|c₁ ± c₂|`, `|c_j|` and `1/|c_j|`.
    pub fn margin(&self) -> f64 {
        let [c1, c2] = self.c;
        [(c1 - c2).abs(), (c1 + c2).abs(), c1.abs(), c2.abs(), 1.0 / c1.abs(), 1.0 / c2.abs()]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_valid(&self, delta1: f64) -> bool {
        self.margin() > delta1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectiveKind {
    Coupled,
    Decoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    ReachedEnd,
    /// The scales left the validity window at `t0`.
    ValidityBoundary { t0: f64 },
    StepFailure { t: f64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTrajectory {
    pub kind: EffectiveKind,
    pub states: Vec<EffectiveState>,
    pub valid: Vec<bool>,
    pub termination: Termination,
    pub delta1: f64,
}

impl EffectiveTrajectory {
    pub fn last(&self) -> &EffectiveState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// First time at which the validity window was violated, if any.
    pub fn t0(&self) -> Option<f64> {
        self.states.iter().zip(&self.valid).find(|(_, v)| !**v).map(|(s, _)| s.t)
    }

    /// Linear interpolation at time `t` inside the recorded range, with a
    /// rounding allowance at either end.
    pub fn at(&self, t: f64) -> Option<EffectiveState> {
        let (first, last) = (self.states.first()?, self.states.last()?);
        let slack = 1e-9 * (last.t - first.t).abs().max(1.0);
        if t < first.t - slack || t > last.t + slack {
            return None;
        }
        let i = self.states.partition_point(|s| s.t < t).clamp(1, self.states.len().max(2) - 1);
        if self.states.len() == 1 {
            return Some(EffectiveState { t, ..*first });
        }
        let (lo, hi) = (&self.states[i - 1], &self.states[i]);
        let w = ((t - lo.t) / (hi.t - lo.t)).clamp(0.0, 1.0);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        Some(EffectiveState {
            t,
            a: [lerp(lo.a[0], hi.a[0]), lerp(lo.a[1], hi.a[1])],
            c: [lerp(lo.c[0], hi.c[0]), lerp(lo.c[1], hi.c[1])],
        })
    }
}

/// `ȧ_j = c_j² − sgn(c_j)∂c_j B`, `ċ_j = sgn(c_j)∂a_j B`.
pub fn rhs_coupled(s: &EffectiveState, b: &PotentialSpec) -> Result<[f64; 4]> {
    let p = SolitonParams { a: s.a, c: s.c, eps: [1.0, 1.0] };
    let (_, g) = interaction_with_gradient(&p, b, s.t)?;
    let sg = [s.c[0].signum(), s.c[1].signum()];
    Ok([
        s.c[0] * s.c[0] - sg[0] * g[2],
        s.c[1] * s.c[1] - sg[1] * g[3],
        sg[0] * g[0],
        sg[1] * g[1],
    ])
}

/// `∂_T A_j = C_j² − b₀(A_j,T)`, `∂_T C_j = C_j ∂ₓb₀(A_j,T)`.
pub fn rhs_decoupled(a: [f64; 2], c: [f64; 2], t: f64, b: &PotentialSpec) -> [f64; 4] {
    [
        c[0] * c[0] - b.b0(a[0], t),
        c[1] * c[1] - b.b0(a[1], t),
        c[0] * b.b0_dx(a[0], t, 1),
        c[1] * b.b0_dx(a[1], t, 1),
    ]
}

/// Decoupled initial data `A(0) = hā`, `C(0) = c̄` from line data.
pub fn decoupled_initial(line: &EffectiveState, h: f64) -> EffectiveState {
    EffectiveState { t: h * line.t, a: [h * line.a[0], h * line.a[1]], c: line.c }
}

/// `E(a,c) = −c³/3 + c·b₀(a)` for autonomous `b₀`.
pub fn decoupled_energy(a: f64, c: f64, b: &PotentialSpec) -> f64 {
    -c * c * c / 3.0 + c * b.b0(a, 0.0)
}

/// Restricted Hamiltonian `−(|c₁|³+|c₂|³)/3 + B(a,c,t)`.
pub fn coupled_energy(s: &EffectiveState, b: &PotentialSpec) -> Result<f64> {
    let (bv, _) = interaction_with_gradient(&s.params(), b, s.t)?;
    Ok(-(s.c[0].abs().powi(3) + s.c[1].abs().powi(3)) / 3.0 + bv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveOptions {
    /// Fixed step; `None` gives `10⁻⁴` slow-time units.
    pub dt: Option<f64>,
    /// Validity margin; `None` uses half of `δ₀`, with `2δ₀` the initial margin.
    pub delta1: Option<f64>,
    /// Stop at the first validity violation rather than continuing with the flag cleared.
    pub stop_at_boundary: bool,
    /// Step-doubling error control with this local tolerance.
    pub adaptive_tol: Option<f64>,
    /// Keep every this many accepted steps.
    pub record_every: usize,
    /// Slow-time scale used by the default step for the coupled system.
    pub h: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self { dt: None, delta1: None, stop_at_boundary: true, adaptive_tol: None, record_every: 1, h: 1.0 }
    }
}

type Rhs<'a> = dyn Fn(f64, &[f64; 4]) -> Result<[f64; 4]> + 'a;

fn rk4(f: &Rhs, t: f64, y: &[f64; 4], dt: f64) -> Result<[f64; 4]> {
    let add = |y: &[f64; 4], k: &[f64; 4], s: f64| std::array::from_fn(|i| y[i] + s * k[i]);
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &add(y, &k1, 0.5 * dt))?;
    let k3 = f(t + 0.5 * dt, &add(y, &k2, 0.5 * dt))?;
    let k4 = f(t + dt, &add(y, &k3, dt))?;
    let out: [f64; 4] = std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepFailure { t, reason: "non-finite state".into() });
    }
    Ok(out)
}

pub fn integrate_effective(
    kind: EffectiveKind,
    init: &EffectiveState,
    b: &PotentialSpec,
    t_end: f64,
    opts: &EffectiveOptions,
) -> Result<EffectiveTrajectory> {
    let delta1 = opts.delta1.unwrap_or(0.25 * init.margin());
    if !init.is_valid(delta1) {
        return Err(Error::DegenerateParams(format!("initial scales {:?} violate the window δ₁ = {delta1}", init.c)));
    }
    let rhs: Box<Rhs> = match kind {
        EffectiveKind::Coupled => Box::new(move |t, y| {
            rhs_coupled(&EffectiveState::from_y(t, *y), b)
        }),
        EffectiveKind::Decoupled => Box::new(move |t, y| Ok(rhs_decoupled([y[0], y[1]], [y[2], y[3]], t, b))),
    };
    let default_dt = match kind {
        EffectiveKind::Coupled => 1e-4 / opts.h.max(1e-12),
        EffectiveKind::Decoupled => 1e-4,
    };
    let mut dt = opts.dt.unwrap_or(default_dt).min(t_end - init.t).max(f64::MIN_POSITIVE);
    let mut traj = EffectiveTrajectory {
        kind,
        states: vec![*init],
        valid: vec![true],
        termination: Termination::ReachedEnd,
        delta1,
    };
    let mut t = init.t;
    let mut y = init.y();
    let mut accepted = 0usize;
    let every = opts.record_every.max(1);
    while t < t_end - 1e-12 * t_end.abs().max(1.0) {
        let h = dt.min(t_end - t);
        let step = match opts.adaptive_tol {
            None => rk4(rhs.as_ref(), t, &y, h).map(|v| (v, h)),
            Some(tol) => adaptive_step(rhs.as_ref(), t, &y, h, tol).map(|(v, used, next)| {
                dt = next;
                (v, used)
            }),
        };
        let (next, used) = match step {
            Ok(v) => v,
            Err(e) => {
                traj.termination = Termination::StepFailure { t, message: e.to_string() };
                break;
            }
        };
        y = next;
        t += used;
        accepted += 1;
        let s = EffectiveState::from_y(t, y);
        let ok = s.is_valid(delta1);
        let reached = t >= t_end - 1e-12 * t_end.abs().max(1.0);
        if accepted.is_multiple_of(every) || !ok || reached {
            traj.states.push(s);
            traj.valid.push(ok);
        }
        if !ok && opts.stop_at_boundary {
            traj.termination = Termination::ValidityBoundary { t0: t };
            break;
        }
    }
    Ok(traj)
}

/// One step with Richardson-style step doubling. Returns the state, the
/// step actually taken and a suggested next step.
fn adaptive_step(f: &Rhs, t: f64, y: &[f64; 4], mut dt: f64, tol: f64) -> Result<([f64; 4], f64, f64)> {
    for _ in 0..60 {
        let big = rk4(f, t, y, dt)?;
        let mid = rk4(f, t, y, 0.5 * dt)?;
        let small = rk4(f, t + 0.5 * dt, &mid, 0.5 * dt)?;
        let err = (0..4)
            .map(|i| (small[i] - big[i]).abs() / (15.0 * (1.0 + small[i].abs())))
            .fold(0.0, f64::max);
        let factor = if err == 0.0 { 2.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0) };
        if err <= tol {
            let out = std::array::from_fn(|i| small[i] + (small[i] - big[i]) / 15.0);
            return Ok((out, dt, dt * factor));
        }
        dt *= factor;
    }
    Err(Error::StepFailure { t, reason: "step size underflow".into() })
}

/// Result of sweeping the coupled dynamics over several `h` near a crossing
/// of the decoupled scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRow {
    pub h: f64,
    pub min_gap: f64,
    /// Line time of the minimum gap.
    pub t_min: f64,
    pub a_gap: f64,
    /// `0.1·min(1/|c₁|, 1/|c₂|)` at the minimum.
    pub a_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    /// Slow time at which the decoupled scales cross.
    pub decoupled_crossing: f64,
    pub rows: Vec<CrossingRow>,
    /// Least squares fit `log(min gap) ≈ intercept + slope/h`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub strictly_decreasing: bool,
}

/// Crossing time of `C₁ − C₂` in the decoupled flow from `init` (slow variables).
pub fn decoupled_crossing(init: &EffectiveState, b: &PotentialSpec, t_end: f64) -> Result<f64> {
    let opts = EffectiveOptions { stop_at_boundary: false, delta1: Some(0.0), ..Default::default() };
    let tr = integrate_effective(EffectiveKind::Decoupled, init, b, t_end, &opts)?;
    let gap = |s: &EffectiveState| s.c[1] - s.c[0];
    tr.states
        .windows(2)
        .find(|w| gap(&w[0]).signum() != gap(&w[1]).signum())
        .map(|w| {
            let (g0, g1) = (gap(&w[0]), gap(&w[1]));
            w[0].t + (w[1].t - w[0].t) * g0 / (g0 - g1)
        })
        .ok_or_else(|| Error::NoCrossing(format!("decoupled scales do not cross before T = {t_end}")))
}

/// Minimum of `|c₂ − c₁|` along a coupled trajectory with parabolic refinement.
fn min_gap(tr: &EffectiveTrajectory) -> CrossingRow {
    let gap = |s: &EffectiveState| (s.c[1] - s.c[0]).abs();
    let i = (0..tr.states.len())
        .min_by(|&i, &j| gap(&tr.states[i]).total_cmp(&gap(&tr.states[j])))
        .unwrap_or(0);
    let mut t_min = tr.states[i].t;
    let mut g_min = gap(&tr.states[i]);
    if i > 0 && i + 1 < tr.states.len() {
        let (s0, s1, s2) = (&tr.states[i - 1], &tr.states[i], &tr.states[i + 1]);
        let (t0, t1, t2) = (s0.t, s1.t, s2.t);
        let (g0, g1, g2) = (gap(s0), gap(s1), gap(s2));
        // Vertex of the interpolating parabola.
        let d01 = (g1 - g0) / (t1 - t0);
        let d12 = (g2 - g1) / (t2 - t1);
        let curv = (d12 - d01) / (t2 - t0);
        if curv > 0.0 {
            let tv = 0.5 * (t0 + t1) - d01 / (2.0 * curv);
            if tv > t0 && tv < t2 {
                let gv = g1 + d01 * (tv - t1) + curv * (tv - t0) * (tv - t1);
                if gv > 0.0 && gv < g_min {
                    t_min = tv;
                    g_min = gv;
                }
            }
        }
    }
    let s = tr.at(t_min).unwrap_or(tr.states[i]);
    let a_tol = 0.1 * (1.0 / s.c[0].abs()).min(1.0 / s.c[1].abs());
    CrossingRow { h: 0.0, min_gap: g_min, t_min, a_gap: (s.a[0] - s.a[1]).abs(), a_tol }
}

/// One coupled run for the crossing study: slow data `init` mapped to the line
/// at scale `h`, integrated to slow time `horizon` with `b(x,t) = b₀(hx, ht)`.
pub fn crossing_run(
    b0: &PotentialSpec,
    init: &EffectiveState,
    h: f64,
    horizon: f64,
) -> Result<(EffectiveTrajectory, CrossingRow)> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("h = {h} must be positive")));
    }
    let b = b0.clone().with_h(h);
    let line = EffectiveState::new(init.t / h, [init.a[0] / h, init.a[1] / h], init.c);
    let opts = EffectiveOptions {
        stop_at_boundary: false,
        delta1: Some(0.0),
        adaptive_tol: Some(1e-11),
        dt: Some(1e-3),
        h,
        ..Default::default()
    };
    let tr = integrate_effective(EffectiveKind::Coupled, &line, &b, horizon / h, &opts)?;
    if let Termination::StepFailure { t, message } = &tr.termination {
        return Err(Error::StepFailure { t: *t, reason: message.clone() });
    }
    let row = CrossingRow { h, ..min_gap(&tr) };
    Ok((tr, row))
}

/// Fits `log(min gap)` against `1/h` and checks monotonicity.
pub fn summarize_crossing(decoupled_crossing: f64, rows: Vec<CrossingRow>) -> CrossingReport {
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.h).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.min_gap.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let mut order: Vec<&CrossingRow> = rows.iter().collect();
    order.sort_by(|p, q| q.h.total_cmp(&p.h));
    let strictly_decreasing = order.windows(2).all(|w| w[1].min_gap < w[0].min_gap);
    CrossingReport { decoupled_crossing, rows, slope: fit.slope, intercept: fit.intercept, r2: fit.r2, strictly_decreasing }
}

/// Coupled runs for each `h` from decoupled data `init` (slow variables),
/// over twice the decoupled crossing time.
pub fn crossing_analysis(b0: &PotentialSpec, init: &EffectiveState, h_list: &[f64]) -> Result<CrossingReport> {
    let t_cross = decoupled_crossing(init, b0, 10.0)?;
    let rows = h_list
        .iter()
        .map(|&h| crossing_run(b0, init, h, 2.0 * t_cross).map(|(_, row)| row))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_crossing(t_cross, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum DecayLaw {
    /// `|c| ~ e^{−γT}` at a simple zero.
    Exponential { gamma: f64 },
    /// `|c| ~ T^{exponent}` at a zero of order `ℓ₁ > 1`.
    PowerLaw { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// First zero of `b₀` ahead of the initial position.
    pub zero: f64,
    pub order: u32,
    pub fitted: DecayLaw,
    /// Rate given by the classification: `γ = −b₀′(a₁)` or `−ℓ₁/(ℓ₁−1)`.
    pub classified: DecayLaw,
    pub t_end: f64,
}

/// First zero of an autonomous `b₀` to the right of `a0`, with its order.
pub fn first_zero_ahead(b: &PotentialSpec, a0: f64, range: f64) -> Result<(f64, u32)> {
    let scale = (0..=200)
        .map(|i| b.b0(a0 + range * i as f64 / 200.0, 0.0).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let n = 20_000;
    let dx = range / n as f64;
    let f = |x: f64| b.b0(x, 0.0);
    let refine = |mut lo: f64, mut hi: f64, g: &dyn Fn(f64) -> f64| {
        let glo = g(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == (glo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    for i in 0..n {
        let (x0, x1) = (a0 + i as f64 * dx, a0 + (i + 1) as f64 * dx);
        let (f0, f1) = (f(x0), f(x1));
        let zero = if f0 == 0.0 && i > 0 {
            Some(x0)
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            Some(refine(x0, x1, &f))
        } else {
            // A touching zero shows up as a sign change of the slope at a small value.
            let (d0, d1) = (b.b0_dx(x0, 0.0, 1), b.b0_dx(x1, 0.0, 1));
            let fp = |x: f64| b.b0_dx(x, 0.0, 1);
            if d0.signum() != d1.signum() {
                let xm = refine(x0, x1, &fp);
                (f(xm).abs() <= 1e-12 * scale).then_some(xm)
            } else {
                None
            }
        };
        if let Some(z) = zero {
            let order = (1..=8).find(|&m| b.b0_dx(z, 0.0, m).abs() > 1e-6 * scale).unwrap_or(8);
            return Ok((z, order));
        }
    }
    Err(Error::NoZeroAhead)
}

/// Decoupled single-soliton run with `E = 0` data `C(0) = √(3b₀(A(0)))`
/// and a fit of the decay of `C` as the position approaches the first zero.
pub fn decay_rate_experiment(b: &PotentialSpec, a0: f64, t_end: f64) -> Result<DecayReport> {
    if !b.is_autonomous() {
        return Err(Error::InvalidConfig("decay experiment needs an autonomous potential".into()));
    }
    let b_start = b.b0(a0, 0.0);
    if !(b_start > 0.0) {
        return Err(Error::InvalidConfig(format!("b₀(a(0)) = {b_start} must be positive")));
    }
    let (zero, order) = first_zero_ahead(b, a0, 100.0)?;
    let c0 = (3.0 * b_start).sqrt();
    // Two uncoupled copies; only the first is used.
    let init = EffectiveState::new(0.0, [a0, a0], [c0, c0]);
    let opts = EffectiveOptions { stop_at_boundary: false, delta1: Some(-1.0), record_every: 10, ..Default::default() };
    let tr = integrate_effective(EffectiveKind::Decoupled, &init, b, t_end, &opts)?;
    let tail: Vec<&EffectiveState> = tr.states.iter().filter(|s| s.t >= 0.5 * t_end).collect();
    let ys: Vec<f64> = tail.iter().map(|s| s.c[0].abs().ln()).collect();
    let (fitted, classified) = if order == 1 {
        let xs: Vec<f64> = tail.iter().map(|s| s.t).collect();
        let fit = linear_fit(&xs, &ys);
        (DecayLaw::Exponential { gamma: -fit.slope }, DecayLaw::Exponential { gamma: -b.b0_dx(zero, 0.0, 1) })
    } else {
        let xs: Vec<f64> = tail.iter().map(|s| s.t.ln()).collect();
        let fit = linear_fit(&xs, &ys);
        let l = order as f64;
        (DecayLaw::PowerLaw { exponent: fit.slope }, DecayLaw::PowerLaw { exponent: -l / (l - 1.0) })
    };
    Ok(DecayReport { zero, order, fitted, classified, t_end })
}
