//! Quadrature for the symplectic form, the conserved quantities of mKdV and
//! their variational derivatives, and the soliton interaction potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LineGrid;
use crate::jet::{Jet, Scalar};
use crate::potential::PotentialSpec;
use crate::soliton::{self, q2_fields, q2_jet, SolitonParams, EDGE_TOL};

/// Default tolerance on `|∫f| / ∫|f|` for the antiderivative.
pub const MEAN_TOL: f64 = 1e-8;

/// A real field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub grid: LineGrid,
    pub decay_flag: bool,
}

impl FieldSample {
    pub fn new(values: Vec<f64>, grid: &LineGrid) -> Self {
        assert_eq!(values.len(), grid.n(), "field length does not match grid");
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge = grid.edge_magnitude(&values, grid.dx());
        let decay_flag = edge <= EDGE_TOL * sup.max(1.0);
        Self { values, grid: grid.clone(), decay_flag }
    }

    pub fn from_fn(grid: &LineGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid.sample(f), grid)
    }

    pub fn q2(p: &SolitonParams, grid: &LineGrid) -> Result<Self> {
        Ok(Self::new(soliton::q2_sample(p, grid)?, grid))
    }

    fn require_decay(&self) -> Result<()> {
        if self.decay_flag {
            Ok(())
        } else {
            Err(Error::GridTooSmall { edge: self.grid.edge_magnitude(&self.values, self.grid.dx()), tol: EDGE_TOL })
        }
    }

    fn d(&self, order: u32) -> Vec<f64> {
        self.grid.derivative(&self.values, order)
    }

    pub fn sup(&self) -> f64 {
        sup(&self.values)
    }
}

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Symmetric antiderivative `½(∫_{−∞}^x − ∫_x^∞) f` of a decaying field.
///
/// Cumulative trapezoid from the left edge with Euler–Maclaurin end
/// corrections (derivatives taken spectrally), then centred by half the total.
pub fn antiderivative_values(grid: &LineGrid, f: &[f64], mean_tol: f64) -> Result<Vec<f64>> {
    let total = grid.integrate(f);
    let mass: f64 = grid.integrate(&f.iter().map(|v| v.abs()).collect::<Vec<_>>());
    if total.abs() > mean_tol * mass.max(f64::MIN_POSITIVE) && total.abs() > 1e-300 {
        return Err(Error::NonZeroMean { mean: total });
    }
    let dx = grid.dx();
    let d1 = grid.derivative(f, 1);
    let d3 = grid.derivative(f, 3);
    let d5 = grid.derivative(f, 5);
    let (c1, c3, c5) = (-dx * dx / 12.0, dx.powi(4) / 720.0, -dx.powi(6) / 30240.0);
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    for j in 0..f.len() {
        if j > 0 {
            acc += 0.5 * dx * (f[j - 1] + f[j]);
        }
        let corr = c1 * (d1[j] - d1[0]) + c3 * (d3[j] - d3[0]) + c5 * (d5[j] - d5[0]);
        out.push(acc + corr - 0.5 * total);
    }
    Ok(out)
}

pub fn antiderivative(f: &FieldSample) -> Result<FieldSample> {
    f.require_decay()?;
    Ok(FieldSample::new(antiderivative_values(&f.grid, &f.values, MEAN_TOL)?, &f.grid))
}

/// `ω(u,v) = ⟨u, ∂ₓ⁻¹v⟩`.
pub fn symplectic_form(u: &FieldSample, v: &FieldSample) -> Result<f64> {
    let iv = antiderivative(v)?;
    Ok(u.grid.inner(&u.values, &iv.values))
}

/// Pairings `⟨t_m, ∂ₓ⁻¹t_n⟩` of the tangent fields `(∂a₁q, ∂a₂q, ∂c₁q, ∂c₂q)`.
pub fn tangent_gram(p: &SolitonParams, grid: &LineGrid) -> Result<[[f64; 4]; 4]> {
    let f = q2_fields(p, grid)?;
    let inv: Vec<Vec<f64>> =
        f.tangent.iter().map(|t| antiderivative_values(grid, t, MEAN_TOL)).collect::<Result<_>>()?;
    let mut g = [[0.0; 4]; 4];
    for (m, row) in g.iter_mut().enumerate() {
        for (n, e) in row.iter_mut().enumerate() {
            *e = grid.inner(&f.tangent[m], &inv[n]);
        }
    }
    Ok(g)
}

/// The canonical pairing pattern: `⟨∂a_j q, ∂ₓ⁻¹∂c_k q⟩ = δ_jk`, all others zero
/// apart from antisymmetry.
pub fn canonical_gram() -> [[f64; 4]; 4] {
    [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [-1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormErrors {
    pub i0: f64,
    pub i1: f64,
    pub i3: f64,
    pub i5: f64,
    pub x_moment: f64,
}

impl ClosedFormErrors {
    pub fn max(&self) -> f64 {
        [self.i0, self.i1, self.i3, self.i5, self.x_moment].into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedReport {
    pub i0: f64,
    pub i1: f64,
    pub i3: f64,
    pub i5: f64,
    pub x_moment: f64,
    pub closed_form_errors: Option<ClosedFormErrors>,
}

/// Closed-form values `[I₀, I₁, I₃, I₅, ∫xq²]` for an exact double soliton.
pub fn closed_forms(p: &SolitonParams) -> [f64; 5] {
    let u = p.unsigned();
    let c = [u.c[0].abs(), u.c[1].abs()];
    let s = soliton::bump_signs(p);
    let pw = |j: i32| c[0].powi(j) + c[1].powi(j);
    [
        std::f64::consts::PI * (s[0] + s[1]),
        2.0 * pw(1),
        -2.0 / 3.0 * pw(3),
        0.4 * pw(5),
        2.0 * (u.a[0] * c[0] + u.a[1] * c[1]),
    ]
}

pub fn conserved(u: &FieldSample) -> Result<ConservedReport> {
    u.require_decay()?;
    let g = &u.grid;
    let v = &u.values;
    let ux = u.d(1);
    let uxx = u.d(2);
    let f = |h: &dyn Fn(usize) -> f64| (0..g.n()).map(h).sum::<f64>() * g.dx();
    Ok(ConservedReport {
        i0: g.integrate(v),
        i1: f(&|j| v[j] * v[j]),
        i3: f(&|j| ux[j] * ux[j] - v[j].powi(4)),
        i5: f(&|j| uxx[j] * uxx[j] - 10.0 * ux[j] * ux[j] * v[j] * v[j] + 2.0 * v[j].powi(6)),
        x_moment: f(&|j| g.x(j) * v[j] * v[j]),
        closed_form_errors: None,
    })
}

/// [`conserved`] plus relative errors against the closed forms for `p`.
pub fn conserved_against(u: &FieldSample, p: &SolitonParams) -> Result<ConservedReport> {
    let mut r = conserved(u)?;
    let exact = closed_forms(p);
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
    r.closed_form_errors = Some(ClosedFormErrors {
        i0: rel(r.i0, exact[0]),
        i1: rel(r.i1, exact[1]),
        i3: rel(r.i3, exact[2]),
        i5: rel(r.i5, exact[3]),
        x_moment: rel(r.x_moment, exact[4]),
    });
    Ok(r)
}

/// Densities `A₁, A₃, A₅` at every grid point.
pub fn densities(u: &FieldSample) -> [Vec<f64>; 3] {
    let v = &u.values;
    let ux = u.d(1);
    let uxx = u.d(2);
    let n = v.len();
    [
        (0..n).map(|j| v[j] * v[j]).collect(),
        (0..n).map(|j| ux[j] * ux[j] - v[j].powi(4)).collect(),
        (0..n).map(|j| uxx[j] * uxx[j] - 10.0 * ux[j] * ux[j] * v[j] * v[j] + 2.0 * v[j].powi(6)).collect(),
    ]
}

fn check_index(j: u32) -> Result<()> {
    if matches!(j, 1 | 3 | 5) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("conserved quantity index {j} must be 1, 3 or 5")))
    }
}

/// Variational derivative `I_j′(u)` for `j ∈ {1, 3, 5}`.
pub fn gradient(j: u32, u: &FieldSample) -> Result<FieldSample> {
    check_index(j)?;
    u.require_decay()?;
    let v = &u.values;
    let out: Vec<f64> = match j {
        1 => v.iter().map(|x| 2.0 * x).collect(),
        3 => {
            let uxx = u.d(2);
            v.iter().zip(&uxx).map(|(x, xx)| -2.0 * xx - 4.0 * x.powi(3)).collect()
        }
        _ => {
            let (ux, uxx, u4) = (u.d(1), u.d(2), u.d(4));
            (0..v.len())
                .map(|i| {
                    let w = v[i];
                    2.0 * u4[i] + 20.0 * w * w * uxx[i] + 20.0 * w * ux[i] * ux[i] + 12.0 * w.powi(5)
                })
                .collect()
        }
    };
    Ok(FieldSample::new(out, &u.grid))
}

/// `I_j″(q)v`.
pub fn hessian_apply(j: u32, q: &FieldSample, v: &FieldSample) -> Result<FieldSample> {
    check_index(j)?;
    q.require_decay()?;
    let n = q.values.len();
    let (qv, vv) = (&q.values, &v.values);
    let out: Vec<f64> = match j {
        1 => vv.iter().map(|x| 2.0 * x).collect(),
        3 => {
            let vxx = v.d(2);
            (0..n).map(|i| -2.0 * vxx[i] - 12.0 * qv[i] * qv[i] * vv[i]).collect()
        }
        _ => {
            let (qx, qxx) = (q.d(1), q.d(2));
            let (vx, vxx, v4) = (v.d(1), v.d(2), v.d(4));
            (0..n)
                .map(|i| {
                    let w = qv[i];
                    2.0 * v4[i]
                        + 20.0 * w * w * vxx[i]
                        + 40.0 * w * qx[i] * vx[i]
                        + (40.0 * w * qxx[i] + 20.0 * qx[i] * qx[i] + 60.0 * w.powi(4)) * vv[i]
                })
                .collect()
        }
    };
    Ok(FieldSample::new(out, &q.grid))
}

/// `Λ(u)w = −w_xx − 4u²w − 4u_x∂ₓ⁻¹(uw)`.
pub fn lambda_apply(u: &FieldSample, w: &[f64]) -> Result<Vec<f64>> {
    let g = &u.grid;
    let ux = u.d(1);
    let wxx = g.derivative(w, 2);
    let uw: Vec<f64> = u.values.iter().zip(w).map(|(a, b)| a * b).collect();
    let inv = antiderivative_values(g, &uw, MEAN_TOL)?;
    Ok((0..w.len())
        .map(|i| -wxx[i] - 4.0 * u.values[i] * u.values[i] * w[i] - 4.0 * ux[i] * inv[i])
        .collect())
}

/// Sup-norm of `∂ₓI′_{2k+1}(u) − Λ(u)∂ₓI′_{2k−1}(u)` for `k ∈ {1, 2}`.
pub fn hierarchy_residual(k: u32, u: &FieldSample) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidConfig(format!("hierarchy level {k} must be 1 or 2")));
    }
    let g = &u.grid;
    let lo = gradient(2 * k - 1, u)?;
    let hi = gradient(2 * k + 1, u)?;
    let dlo = g.derivative(&lo.values, 1);
    let dhi = g.derivative(&hi.values, 1);
    let rhs = lambda_apply(u, &dlo)?;
    Ok(sup(&dhi.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

/// Derivatives `[b, b_x, …, b_xxxxx]` of the potential on the grid.
pub type PotentialDerivs = Vec<Vec<f64>>;

pub fn potential_derivs(b: &PotentialSpec, grid: &LineGrid, t: f64) -> PotentialDerivs {
    b.sample_derivatives(grid, t, 5)
}

fn weighted(g: &LineGrid, w: &[f64], f: &[f64]) -> f64 {
    g.inner(w, f)
}

/// `|LHS − RHS|` for the three identities
/// `⟨I_j′(u),(bu)ₓ⟩ = Σ ⟨∂ₓ^m b, A_i(u)⟩` with `j = 1, 3, 5`.
pub fn near_conserved_residuals(u: &FieldSample, b: &PotentialDerivs) -> Result<[f64; 3]> {
    u.require_decay()?;
    let g = &u.grid;
    let ux = u.d(1);
    let bu_x: Vec<f64> = (0..g.n()).map(|i| b[1][i] * u.values[i] + b[0][i] * ux[i]).collect();
    let [a1, a3, a5] = densities(u);
    let lhs = |j| -> Result<f64> { Ok(g.inner(&gradient(j, u)?.values, &bu_x)) };
    let r1 = weighted(g, &b[1], &a1);
    let r3 = 3.0 * weighted(g, &b[1], &a3) - weighted(g, &b[3], &a1);
    let r5 = 5.0 * weighted(g, &b[1], &a5) - 5.0 * weighted(g, &b[3], &a3) + weighted(g, &b[5], &a1);
    Ok([(lhs(1)? - r1).abs(), (lhs(3)? - r3).abs(), (lhs(5)? - r5).abs()])
}

/// Linearised identities: `⟨I_j″(q)v,(bq)ₓ⟩ − ⟨∂ₓI_j′(q), bv⟩ = Σ ⟨∂ₓ^m b, A_i′(q)(v)⟩`.
pub fn near_conserved_linearized(q: &FieldSample, v: &FieldSample, b: &PotentialDerivs) -> Result<[f64; 3]> {
    q.require_decay()?;
    let g = &q.grid;
    let n = g.n();
    let (qq, vv) = (&q.values, &v.values);
    let (qx, qxx) = (q.d(1), q.d(2));
    let (vx, vxx) = (v.d(1), v.d(2));
    let bq_x: Vec<f64> = (0..n).map(|i| b[1][i] * qq[i] + b[0][i] * qx[i]).collect();
    let bv: Vec<f64> = (0..n).map(|i| b[0][i] * vv[i]).collect();
    let da1: Vec<f64> = (0..n).map(|i| 2.0 * qq[i] * vv[i]).collect();
    let da3: Vec<f64> = (0..n).map(|i| 2.0 * qx[i] * vx[i] - 4.0 * qq[i].powi(3) * vv[i]).collect();
    let da5: Vec<f64> = (0..n)
        .map(|i| {
            2.0 * qxx[i] * vxx[i] - 20.0 * qx[i] * qq[i] * qq[i] * vx[i] - 20.0 * qx[i] * qx[i] * qq[i] * vv[i]
                + 12.0 * qq[i].powi(5) * vv[i]
        })
        .collect();
    let lhs = |j| -> Result<f64> {
        let hv = hessian_apply(j, q, v)?;
        let dg = g.derivative(&gradient(j, q)?.values, 1);
        Ok(g.inner(&hv.values, &bq_x) - g.inner(&dg, &bv))
    };
    let r1 = weighted(g, &b[1], &da1);
    let r3 = 3.0 * weighted(g, &b[1], &da3) - weighted(g, &b[3], &da1);
    let r5 = 5.0 * weighted(g, &b[1], &da5) - 5.0 * weighted(g, &b[3], &da3) + weighted(g, &b[5], &da1);
    Ok([(lhs(1)? - r1).abs(), (lhs(3)? - r3).abs(), (lhs(5)? - r5).abs()])
}

pub fn sobolev_norm(u: &FieldSample, s: u32) -> f64 {
    u.grid.sobolev_norm(&u.values, s as f64)
}

/// Quadrature window `[lo, hi]` and spacing for integrals against `q²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Window {
    /// Covers both positions and shifted positions with `20/min|c|` to spare,
    /// sampled at `0.2/max|c|`.
    pub fn for_params(p: &SolitonParams) -> Self {
        let cmin = p.c[0].abs().min(p.c[1].abs());
        let cmax = p.c[0].abs().max(p.c[1].abs());
        let shift = soliton::shifts(&p.unsigned()).map(|s| s.alpha[0].abs().max(s.alpha[1].abs())).unwrap_or(0.0);
        let pad = 20.0 / cmin + shift;
        let lo = p.a[0].min(p.a[1]) - pad;
        let hi = p.a[0].max(p.a[1]) + pad;
        let n = ((hi - lo) * cmax / 0.2).ceil() as usize + 1;
        Self { lo, hi, n: n.max(64) }
    }

    fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    fn x(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.dx()
    }
}

/// `B(a,c,t) = ½∫b(x,t) q₂(x,a,c)² dx`.
pub fn interaction_b(p: &SolitonParams, b: &PotentialSpec, t: f64) -> Result<f64> {
    p.validate()?;
    if b.is_zero() {
        return Ok(0.0);
    }
    Ok(interaction_on(p, b, t, &Window::for_params(p)))
}

fn interaction_on(p: &SolitonParams, b: &PotentialSpec, t: f64, w: &Window) -> f64 {
    let dx = w.dx();
    0.5 * dx * (0..w.n).map(|j| {
        let x = w.x(j);
        let q = soliton::q2(x, p);
        b.eval(x, t) * q * q
    }).sum::<f64>()
}

/// `B` and `(∂a₁B, ∂a₂B, ∂c₁B, ∂c₂B)` from one pass using exact partials of `q`.
pub fn interaction_with_gradient(p: &SolitonParams, b: &PotentialSpec, t: f64) -> Result<(f64, [f64; 4])> {
    p.validate()?;
    if b.is_zero() {
        return Ok((0.0, [0.0; 4]));
    }
    let w = Window::for_params(p);
    let mut acc = Jet::<5>::cst(0.0);
    for j in 0..w.n {
        let x = w.x(j);
        let q = q2_jet(x, p);
        acc = acc + (q * q).scale(b.eval(x, t));
    }
    let s = 0.5 * w.dx();
    Ok((acc.v * s, [acc.d[1] * s, acc.d[2] * s, acc.d[3] * s, acc.d[4] * s]))
}

/// Central differences of the quadrature in `(a, c)` with step `step`
/// on a window frozen at `p`.
pub fn grad_b_fd(p: &SolitonParams, b: &PotentialSpec, t: f64, step: f64) -> Result<[f64; 4]> {
    p.validate()?;
    let w = Window::for_params(p);
    let base = p.to_array();
    let mut g = [0.0; 4];
    for (k, gk) in g.iter_mut().enumerate() {
        let mut hi = base;
        let mut lo = base;
        hi[k] += step;
        lo[k] -= step;
        let f = |v| interaction_on(&SolitonParams::from_array(v, p.eps), b, t, &w);
        *gk = (f(hi) - f(lo)) / (2.0 * step);
    }
    Ok(g)
}

pub fn grad_b(p: &SolitonParams, b: &PotentialSpec, t: f64) -> Result<[f64; 4]> {
    Ok(interaction_with_gradient(p, b, t)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::{eta, eta_x};

    fn grid() -> LineGrid {
        LineGrid::new(1024, 30.0).unwrap()
    }

    #[test]
    fn antiderivative_of_even_bump_derivative() {
        let g = grid();
        let f = FieldSample::from_fn(&g, |x| eta_x(x, 0.0, 1.0));
        let fi = antiderivative(&f).unwrap();
        let err = (0..g.n()).map(|j| (fi.values[j] - eta(g.x(j), 0.0, 1.0)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn antiderivative_rejects_mass() {
        let f = FieldSample::from_fn(&grid(), |x| (-x * x).exp());
        assert!(matches!(antiderivative(&f), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn gram_matrix_is_canonical() {
        let p = SolitonParams::new([-1.0, 2.0], [1.0, 2.0]).unwrap();
        let g = tangent_gram(&p, &LineGrid::new(2048, 40.0).unwrap()).unwrap();
        let want = canonical_gram();
        for m in 0..4 {
            for n in 0..4 {
                assert!((g[m][n] - want[m][n]).abs() < 1e-9, "({m},{n}) = {}", g[m][n]);
            }
        }
    }

    #[test]
    fn closed_forms_for_reference_case() {
        let p = SolitonParams::new([1.0, -1.0], [1.0, 2.0]).unwrap();
        let r = conserved_against(&FieldSample::q2(&p, &LineGrid::new(2048, 40.0).unwrap()).unwrap(), &p).unwrap();
        assert!((r.i1 - 6.0).abs() < 1e-9);
        assert!((r.i3 + 6.0).abs() < 1e-9);
        assert!((r.i5 - 13.2).abs() < 1e-8);
        assert!((r.x_moment + 2.0).abs() < 1e-9);
        assert!(r.closed_form_errors.unwrap().max() < 1e-9);
        let z = conserved(&FieldSample::from_fn(&grid(), |_| 0.0)).unwrap();
        assert_eq!((z.i0, z.i1, z.i3, z.i5), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn gradients_at_single_soliton() {
        let g = grid();
        let u = FieldSample::from_fn(&g, |x| eta(x, 0.0, 1.0));
        for (j, s) in [(1, 2.0), (3, -2.0), (5, 2.0)] {
            let gr = gradient(j, &u).unwrap();
            let err = (0..g.n()).map(|i| (gr.values[i] - s * u.values[i]).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "j = {j}: {err}");
        }
    }

    #[test]
    fn hierarchy_on_single_soliton() {
        let u = FieldSample::from_fn(&grid(), |x| eta(x, 0.3, 1.0));
        assert!(hierarchy_residual(2, &u).unwrap() < 1e-8);
        assert!(hierarchy_residual(1, &u).unwrap() < 1e-9);
    }

    #[test]
    fn constant_potential_interaction() {
        let p = SolitonParams::new([-1.0, 2.0], [0.8, 1.7]).unwrap();
        let beta = 0.7;
        let b = PotentialSpec::constant(beta);
        let (v, gr) = interaction_with_gradient(&p, &b, 0.0).unwrap();
        assert!((v - beta * 2.5).abs() < 1e-11);
        for (k, want) in [0.0, 0.0, beta, beta].into_iter().enumerate() {
            assert!((gr[k] - want).abs() < 1e-10, "{k}: {}", gr[k]);
        }
        assert_eq!(interaction_b(&p, &PotentialSpec::zero(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let p = SolitonParams::new([-0.5, 1.0], [0.9, 1.6]).unwrap();
        let b = PotentialSpec::cos2().with_h(0.3);
        let an = grad_b(&p, &b, 0.0).unwrap();
        let fd = grad_b_fd(&p, &b, 0.0, 1e-5).unwrap();
        for k in 0..4 {
            assert!((an[k] - fd[k]).abs() < 1e-8, "{k}: {} vs {}", an[k], fd[k]);
        }
    }
}
