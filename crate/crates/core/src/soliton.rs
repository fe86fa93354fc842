//! Single and double soliton profiles, their parameter derivatives and
//! the algebraic identities they satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LineGrid;
use crate::jet::{Jet, Scalar};

/// Parameters closer than this to the degenerate set are rejected.
pub const DEFAULT_SEP_TOL: f64 = 1e-6;

/// Positions `a`, scales `c` and phase signs `eps` of a double soliton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub a: [f64; 2],
    pub c: [f64; 2],
    #[serde(default = "default_eps")]
    pub eps: [f64; 2],
}

fn default_eps() -> [f64; 2] {
    [1.0, 1.0]
}

impl SolitonParams {
    /// Validated constructor with default signs.
    pub fn new(a: [f64; 2], c: [f64; 2]) -> Result<Self> {
        let p = Self { a, c, eps: default_eps() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_signs(mut self, eps: [f64; 2]) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    /// Distance from the degenerate set `c1 = ±c2` or `c_j = 0`.
    pub fn separation(&self) -> f64 {
        let [c1, c2] = self.c;
        c1.abs().min(c2.abs()).min((c1 - c2).abs()).min((c1 + c2).abs())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(DEFAULT_SEP_TOL)
    }

    pub fn validate_with(&self, sep_tol: f64) -> Result<()> {
        if self.a.iter().chain(&self.c).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateParams(format!("non-finite parameters {self:?}")));
        }
        if self.eps.iter().any(|e| e.abs() != 1.0) {
            return Err(Error::DegenerateParams(format!("signs must be ±1, got {:?}", self.eps)));
        }
        let sep = self.separation();
        if sep <= sep_tol {
            return Err(Error::DegenerateParams(format!(
                "c = {:?} lies within {sep:.2e} of the degenerate set",
                self.c
            )));
        }
        Ok(())
    }

    /// The same profile written with default signs: `q̃(a,c,ε) = q(a,(ε₁c₁,ε₂c₂))`.
    pub fn unsigned(&self) -> Self {
        Self { a: self.a, c: [self.eps[0] * self.c[0], self.eps[1] * self.c[1]], eps: default_eps() }
    }

    pub fn translated(&self, s: f64) -> Self {
        Self { a: [self.a[0] + s, self.a[1] + s], ..*self }
    }

    /// Index of the slower soliton (smaller `|c|`) followed by the faster one.
    pub fn order(&self) -> (usize, usize) {
        if self.c[0].abs() < self.c[1].abs() {
            (0, 1)
        } else {
            (1, 0)
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a[0], self.a[1], self.c[0], self.c[1]]
    }

    pub fn from_array(v: [f64; 4], eps: [f64; 2]) -> Self {
        Self { a: [v[0], v[1]], c: [v[2], v[3]], eps }
    }
}

/// The canonical representative `0 < c1 < c2` of a parameter point together
/// with the symmetry used to reach it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalForm {
    pub params: SolitonParams,
    /// Soliton labels were exchanged; `q = −q(x, a2, a1, c2, c1)`.
    pub swapped: bool,
    /// Signs of `c` were absorbed into the phase signs `eps`.
    pub signs: [f64; 2],
}

impl SolitonParams {
    pub fn canonical(&self) -> CanonicalForm {
        let u = self.unsigned();
        let signs = [u.c[0].signum(), u.c[1].signum()];
        let abs = [u.c[0].abs(), u.c[1].abs()];
        let swapped = abs[0] > abs[1];
        let (i, j) = if swapped { (1, 0) } else { (0, 1) };
        let params = Self { a: [u.a[i], u.a[j]], c: [abs[i], abs[j]], eps: [signs[i], signs[j]] };
        CanonicalForm { params, swapped, signs }
    }
}

/// `c·sech(c(x−a))`.
pub fn eta(x: f64, a: f64, c: f64) -> f64 {
    c / (c * (x - a)).cosh()
}

/// `∂ₓ` of [`eta`].
pub fn eta_x(x: f64, a: f64, c: f64) -> f64 {
    let y = c * (x - a);
    -c * c * y.tanh() / y.cosh()
}

/// Determinant ratio evaluated with each exponential factored by its
/// positive part, so that no intermediate overflows.
fn q2_generic<S: Scalar>(x: S, a: [S; 2], c: [S; 2], eps: [f64; 2]) -> S {
    let sign = [eps[0], -eps[1]];
    let mut g = [S::cst(0.0); 2];
    let mut r = [0.0; 2];
    for j in 0..2 {
        let e = -(c[j] * (x - a[j]));
        let m = e.val().max(0.0);
        g[j] = (e - S::cst(m)).exp().scale(sign[j]);
        r[j] = (-m).exp();
    }
    let k = S::cst(1.0) / (c[0] + c[1]);
    let p1 = S::cst(0.5) / c[0];
    let p2 = S::cst(0.5) / c[1];
    let [g1, g2] = g;
    let (r1, r2) = (S::cst(r[0]), S::cst(r[1]));
    let s1 = r1 * r1 + g1 * g1;
    let s2 = r2 * r2 + g2 * g2;
    let cross = r1 * r2 + g1 * g2;
    let num = k * (g1 * r2 + g2 * r1) * cross - p1 * g2 * r2 * s1 - p2 * g1 * r1 * s2;
    let den = p1 * p2 * s1 * s2 - k * k * cross * cross;
    num / den
}

/// Double soliton profile `q₂(x, a, c)` (with phase signs).
pub fn q2(x: f64, p: &SolitonParams) -> f64 {
    q2_generic(x, p.a, p.c, p.eps)
}

/// Value and the partials `(∂ₓ, ∂a₁, ∂a₂, ∂c₁, ∂c₂)`.
pub fn q2_jet(x: f64, p: &SolitonParams) -> Jet<5> {
    q2_generic(
        Jet::var(x, 0),
        [Jet::var(p.a[0], 1), Jet::var(p.a[1], 2)],
        [Jet::var(p.c[0], 3), Jet::var(p.c[1], 4)],
        p.eps,
    )
}

/// `q` and its first partials sampled on a grid.
#[derive(Debug, Clone)]
pub struct ProfileFields {
    pub q: Vec<f64>,
    pub qx: Vec<f64>,
    /// `[∂a₁q, ∂a₂q, ∂c₁q, ∂c₂q]`.
    pub tangent: [Vec<f64>; 4],
}

pub fn q2_fields(p: &SolitonParams, grid: &LineGrid) -> Result<ProfileFields> {
    p.validate()?;
    let n = grid.n();
    let mut q = Vec::with_capacity(n);
    let mut qx = Vec::with_capacity(n);
    let mut tangent: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for j in 0..n {
        let jet = q2_jet(grid.x(j), p);
        q.push(jet.v);
        qx.push(jet.d[0]);
        for (t, d) in tangent.iter_mut().zip(&jet.d[1..]) {
            t.push(*d);
        }
    }
    Ok(ProfileFields { q, qx, tangent })
}

pub fn q2_sample(p: &SolitonParams, grid: &LineGrid) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(grid.sample(|x| q2(x, p)))
}

/// `[∂a₁q, ∂a₂q, ∂c₁q, ∂c₂q]` on the grid.
pub fn q2_partials(p: &SolitonParams, grid: &LineGrid) -> Result<[Vec<f64>; 4]> {
    Ok(q2_fields(p, grid)?.tangent)
}

/// Smoothed sign: `1` on `(−∞,−1]`, `−1` on `[1,∞)`, quintic smoothstep between.
pub fn theta(s: f64) -> f64 {
    if s <= -1.0 {
        1.0
    } else if s >= 1.0 {
        -1.0
    } else {
        let t = 0.5 * (s + 1.0);
        1.0 - 2.0 * t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftData {
    pub alpha: [f64; 2],
    pub a_hat: [f64; 2],
    pub theta_value: f64,
}

/// Interaction phase shifts and shifted positions.
///
/// Written for the canonical component `0 < c1 < c2`; other components are
/// reduced to it by the label-swap and reflection symmetries, which amounts
/// to using `|c|` and measuring `θ` along (fast position − slow position).
pub fn shifts(p: &SolitonParams) -> Result<ShiftData> {
    p.validate()?;
    let (s, l) = p.order();
    let (cs, cl) = (p.c[s].abs(), p.c[l].abs());
    let mut alpha = [0.0; 2];
    alpha[s] = ((cs + cl) / (cl - cs)).ln() / cs;
    alpha[l] = ((cl - cs) / (cl + cs)).ln() / cl;
    let th = theta(p.a[l] - p.a[s]);
    let a_hat = [p.a[0] + alpha[0] * th, p.a[1] + alpha[1] * th];
    Ok(ShiftData { alpha, a_hat, theta_value: th })
}

/// Sign of each soliton bump in the far-separated regime.
pub fn bump_signs(p: &SolitonParams) -> [f64; 2] {
    let u = p.unsigned();
    let flip = if u.c[0].abs() < u.c[1].abs() { 1.0 } else { -1.0 };
    [flip * u.c[0].signum(), flip * u.c[1].signum()]
}

/// Sum of two separated single solitons at the shifted positions.
pub fn asymptotic_profile(x: f64, p: &SolitonParams) -> Result<f64> {
    let sh = shifts(&p.unsigned())?;
    let s = bump_signs(p);
    let c = p.unsigned().c;
    Ok((0..2).map(|j| s[j] * eta(x, sh.a_hat[j], c[j].abs())).sum())
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln sinh²(y)`, stable for large `|y|`.
fn ln_sinh2(y: f64) -> f64 {
    let t = y.abs();
    if t < 1e-3 {
        2.0 * y.sinh().abs().ln()
    } else {
        2.0 * (t + (-(-2.0 * t).exp()).ln_1p() - std::f64::consts::LN_2)
    }
}

fn ln_cosh2(y: f64) -> f64 {
    let t = y.abs();
    2.0 * (t + (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2)
}

/// One half of the symmetric splitting `Q(x,α,δ) = τ(x,α,δ) + τ(−x,−α,δ)`.
///
/// The denominator carries `δ sinh²(x − δα)`; with `sech²` the splitting
/// does not reproduce `Q`. Evaluated in the log domain.
pub fn tau_component(x: f64, alpha: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    assert!(delta < 1.0, "tau_component requires 0 <= delta < 1");
    let ln_num = log_sum_exp(
        (0.5 * (1.0 + delta)).ln() + (1.0 - delta) * (x + alpha),
        (0.5 * (1.0 - delta)).ln() + (1.0 + delta) * (x - alpha),
    );
    let ln_den = log_sum_exp(
        delta.ln() + ln_sinh2(x - delta * alpha),
        -delta.ln() + ln_cosh2(delta * x - alpha),
    );
    (ln_num - ln_den).exp()
}

/// Symmetric reduced profile `Q(x,α,δ) = q(x, −α, α, 1−δ, 1+δ)`.
pub fn q_reduced(x: f64, alpha: f64, delta: f64) -> f64 {
    q2_generic(x, [-alpha, alpha], [1.0 - delta, 1.0 + delta], [1.0, 1.0])
}

/// Reduced coordinates `(y, α, δ)` and the amplitude factor `s` with
/// `q(x,a,c) = s·Q(y,α,δ)`.
pub fn reduced_coordinates(x: f64, p: &SolitonParams) -> (f64, f64, f64, f64) {
    let s = 0.5 * (p.c[0] + p.c[1]);
    let y = s * (x - 0.5 * (p.a[0] + p.a[1]));
    let alpha = s * 0.5 * (p.a[1] - p.a[0]);
    let delta = (p.c[1] - p.c[0]) / (p.c[1] + p.c[0]);
    (y, alpha, delta, s)
}

/// Sup-norm residuals of the three exact identities satisfied by `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `∂ₓq + ∂a₁q + ∂a₂q`.
    pub translation: f64,
    /// `∂ₓI₃′(q) − 2Σc_j²∂a_j q`.
    pub flow: f64,
    /// `q − Σ(x−a_j)∂a_j q − Σc_j∂c_j q`.
    pub scaling: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.translation.max(self.flow).max(self.scaling)
    }
}

/// Edge tolerance for fields that must decay within the grid.
pub const EDGE_TOL: f64 = 1e-8;

pub fn identity_residuals(p: &SolitonParams, grid: &LineGrid) -> Result<IdentityResiduals> {
    identity_residuals_of(&q2_fields(p, grid)?, p, grid)
}

/// [`identity_residuals`] for given fields, so that a perturbed profile can be
/// checked against the exact partials.
pub fn identity_residuals_of(f: &ProfileFields, p: &SolitonParams, grid: &LineGrid) -> Result<IdentityResiduals> {
    let edge = grid.edge_magnitude(&f.q, grid.dx());
    if edge > EDGE_TOL {
        return Err(Error::GridTooSmall { edge, tol: EDGE_TOL });
    }
    let [da1, da2, dc1, dc2] = &f.tangent;
    let q = &f.q;
    let qx = &f.qx;
    // ∂ₓI₃′(q) = −2q_xxx − 12q²q_x, differentiating the analytic q_x to limit roundoff growth
    let qxxx = grid.derivative(qx, 2);
    let di3: Vec<f64> = (0..grid.n()).map(|j| -2.0 * qxxx[j] - 12.0 * q[j] * q[j] * qx[j]).collect();
    let [c1, c2] = p.c;
    let [a1, a2] = p.a;
    let sup = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    let translation = sup(&mut (0..grid.n()).map(|j| qx[j] + da1[j] + da2[j]));
    let flow = sup(&mut (0..grid.n()).map(|j| di3[j] - 2.0 * (c1 * c1 * da1[j] + c2 * c2 * da2[j])));
    let scaling = sup(&mut (0..grid.n()).map(|j| {
        let x = grid.x(j);
        q[j] - (x - a1) * da1[j] - (x - a2) * da2[j] - c1 * dc1[j] - c2 * dc2[j]
    }));
    Ok(IdentityResiduals { translation, flow, scaling })
}
