//! The Hessian `𝒦 = H_c″(q)` of `H_c = I₅ + (c₁²+c₂²)I₃ + c₁²c₂²I₁` at a
//! double soliton, the one-soliton reference operator `P(c)`, and the
//! checks built on them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{antiderivative_values, FieldSample};
use crate::grid::LineGrid;
use crate::soliton::{q2_fields, SolitonParams};

/// Edge tolerance for operator assembly. Eigenvalue counts only need the
/// coefficients to be small at the box edge, not negligible.
pub const OPERATOR_EDGE_TOL: f64 = 1e-3;

/// Mean tolerance for antiderivatives of tangent fields on the same boxes.
pub const OPERATOR_MEAN_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorKind {
    K { params: SolitonParams },
    P { c: f64 },
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub grid: LineGrid,
    pub kind: OperatorKind,
    /// `2c₁²c₂²` for `𝒦`, `c²` for `P(c)`.
    pub threshold: f64,
}

/// Circulant matrix of the Fourier multiplier `m(k)` on the grid.
fn circulant(grid: &LineGrid, m: impl Fn(usize, f64) -> f64) -> DMatrix<f64> {
    let n = grid.n();
    let spec: Vec<_> = (0..n).map(|j| Complex64::new(m(j, grid.wavenumber(j)), 0.0)).collect();
    let col = grid.inverse(spec);
    DMatrix::from_fn(n, n, |i, l| col[(i + n - l) % n])
}

/// `(ik)^order` as a real matrix. The odd orders are antisymmetric and drop Nyquist.
fn diff_matrix(grid: &LineGrid, order: u32) -> DMatrix<f64> {
    let n = grid.n();
    let ny = n / 2;
    match order % 2 {
        0 => {
            let sign = if order.is_multiple_of(4) { 1.0 } else { -1.0 };
            circulant(grid, |_, k| sign * k.powi(order as i32))
        }
        _ => {
            let spec: Vec<_> = (0..n)
                .map(|j| {
                    if j == ny {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, grid.wavenumber(j)).powu(order)
                    }
                })
                .collect();
            let mut buf = spec;
            grid.inverse_in_place(&mut buf);
            DMatrix::from_fn(n, n, |i, l| buf[(i + n - l) % n].re)
        }
    }
}

/// `(−∂²+c₁²)(−∂²+c₂²) + 10∂ q²∂ + 10(−q_x² + (q²)_xx + 3q⁴) − 6(c₁²+c₂²)q²`.
fn half_hessian(grid: &LineGrid, q: &[f64], c1: f64, c2: f64) -> DMatrix<f64> {
    let (s1, s2) = (c1 * c1, c2 * c2);
    let mut m = circulant(grid, |_, k| (k * k + s1) * (k * k + s2));
    let d1 = diff_matrix(grid, 1);
    let qsq: Vec<f64> = q.iter().map(|v| v * v).collect();
    let qx = grid.derivative(q, 1);
    let qsq_xx = grid.derivative(&qsq, 2);
    let scaled = DMatrix::from_fn(grid.n(), grid.n(), |i, l| qsq[i] * d1[(i, l)]);
    m += 10.0 * &d1 * scaled;
    for i in 0..grid.n() {
        m[(i, i)] += 10.0 * (-qx[i] * qx[i] + qsq_xx[i] + 3.0 * qsq[i] * qsq[i]) - 6.0 * (s1 + s2) * qsq[i];
    }
    m
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

fn check_edge(grid: &LineGrid, q: &[f64]) -> Result<()> {
    let sup = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let edge = grid.edge_magnitude(q, grid.dx());
    if edge > OPERATOR_EDGE_TOL * sup {
        return Err(Error::GridTooSmall { edge, tol: OPERATOR_EDGE_TOL });
    }
    Ok(())
}

pub fn assemble_k(p: &SolitonParams, grid: &LineGrid) -> Result<OperatorMatrix> {
    let f = q2_fields(p, grid)?;
    check_edge(grid, &f.q)?;
    let [c1, c2] = p.c;
    let matrix = symmetrize(2.0 * half_hessian(grid, &f.q, c1, c2));
    Ok(OperatorMatrix {
        matrix,
        grid: grid.clone(),
        kind: OperatorKind::K { params: *p },
        threshold: 2.0 * c1 * c1 * c2 * c2,
    })
}

/// `P(c) = (−∂²+1)(−∂²+c²) + 10∂η²∂ + 10(3η² − 2η⁴) − 6(1+c²)η²` with `η = sech x`.
pub fn assemble_p(c: f64, grid: &LineGrid) -> Result<OperatorMatrix> {
    if c == 1.0 {
        return Err(Error::InvalidC(c));
    }
    let eta = grid.sample(|x| 1.0 / x.cosh());
    check_edge(grid, &eta)?;
    let n = grid.n();
    let (cs, d1) = (c * c, diff_matrix(grid, 1));
    let mut m = circulant(grid, |_, k| (k * k + 1.0) * (k * k + cs));
    let e2: Vec<f64> = eta.iter().map(|v| v * v).collect();
    let scaled = DMatrix::from_fn(n, n, |i, l| e2[i] * d1[(i, l)]);
    m += 10.0 * &d1 * scaled;
    for i in 0..n {
        m[(i, i)] += 10.0 * (3.0 * e2[i] - 2.0 * e2[i] * e2[i]) - 6.0 * (1.0 + cs) * e2[i];
    }
    Ok(OperatorMatrix { matrix: symmetrize(m), grid: grid.clone(), kind: OperatorKind::P { c }, threshold: cs })
}

impl OperatorMatrix {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        (m - m.transpose()).amax() / m.amax()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub n_negative: usize,
    pub kernel_dim: usize,
    pub smallest_positive: f64,
    pub continuous_threshold: f64,
    pub kernel_tol: f64,
    /// Eigenvalues below the continuum threshold, ascending.
    pub discrete: Vec<f64>,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Default kernel tolerance `10⁻³` of the continuum threshold. The spectral
/// radius grows like `k_max⁴`, so a tolerance tied to it would swallow the
/// negative eigenvalue on any useful grid.
pub fn default_kernel_tol(op: &OperatorMatrix) -> f64 {
    1e-3 * op.threshold
}

pub fn spectrum_summary(op: &OperatorMatrix, kernel_tol: Option<f64>) -> SpectrumSummary {
    let tol = kernel_tol.unwrap_or_else(|| default_kernel_tol(op));
    let mut ev: Vec<f64> = SymmetricEigen::new(op.matrix.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    SpectrumSummary {
        n_negative: ev.iter().filter(|&&l| l < -tol).count(),
        kernel_dim: ev.iter().filter(|&&l| l.abs() <= tol).count(),
        smallest_positive: ev.iter().copied().find(|&l| l > tol).unwrap_or(f64::INFINITY),
        continuous_threshold: op.threshold,
        kernel_tol: tol,
        discrete: ev.iter().copied().filter(|&l| l < op.threshold).collect(),
        eigenvalues: ev,
    }
}

/// The four constraint fields `∂ₓ⁻¹∂ᵢq`. The `c`-partials carry slowly
/// decaying tails, so no mean check is applied on a finite box.
pub fn constraint_fields(p: &SolitonParams, grid: &LineGrid) -> Result<[Vec<f64>; 4]> {
    let f = q2_fields(p, grid)?;
    let out: Vec<Vec<f64>> =
        f.tangent.iter().map(|t| antiderivative_values(grid, t, f64::INFINITY)).collect::<Result<_>>()?;
    Ok(out.try_into().expect("four fields"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coercivity {
    /// Minimum of `⟨𝒦v,v⟩/‖v‖²_{H²}` without constraints.
    pub unconstrained: f64,
    /// The same minimum over the `L²`-orthogonal complement of the constraints.
    pub constrained: f64,
}

/// Minimises the Rayleigh quotient in the `H²` metric by symmetric whitening
/// `G^{-1/2}𝒦G^{-1/2}` with `G = (1+k²)²`, then projecting out the whitened
/// constraint directions.
pub fn coercivity_estimate(op: &OperatorMatrix, constraints: &[Vec<f64>]) -> Result<Coercivity> {
    let grid = &op.grid;
    let n = grid.n();
    let w = circulant(grid, |_, k| 1.0 / (1.0 + k * k));
    let kt = symmetrize(&w * &op.matrix * &w);
    let unconstrained = SymmetricEigen::new(kt.clone()).eigenvalues.min();
    // The constraint v ⟂ cᵢ in L² becomes w·cᵢ ⟂ (G^{1/2}v).
    let cols: Vec<DVector<f64>> = constraints.iter().map(|c| &w * DVector::from_column_slice(c)).collect();
    let cmat = DMatrix::from_columns(&cols);
    let q = cmat.qr().q();
    let proj = DMatrix::<f64>::identity(n, n) - &q * q.transpose();
    let shift = 10.0 * kt.amax() + 1.0;
    let restricted = symmetrize(&proj * &kt * &proj + shift * (&q * q.transpose()));
    let constrained = SymmetricEigen::new(restricted).eigenvalues.min();
    if !constrained.is_finite() {
        return Err(Error::NoConvergence { iters: 0, residual: constrained });
    }
    Ok(Coercivity { unconstrained, constrained })
}

/// `r₁ = ∂ₓQ` and `r₂ = ∂_αQ` in the reduced reference case
/// `a = (0,0)`, `c = (½, 3/2)`.
pub fn reference_zero_solutions(x: f64) -> [f64; 2] {
    let (s, ch) = ((x / 2.0).sinh(), (x / 2.0).cosh());
    [-s / (2.0 * ch * ch), s * (9.0 - 2.0 * ch * ch) / (4.0 * ch.powi(4))]
}

fn reference_zero_solutions_dx(x: f64) -> [f64; 2] {
    let (sh, ch) = ((x / 2.0).sinh(), (x / 2.0).cosh());
    let (s2, c2) = (sh * sh, ch * ch);
    let d1 = -(c2 - 2.0 * s2) / (4.0 * ch.powi(3));
    [d1, 9.0 * (c2 - 4.0 * s2) / (8.0 * ch.powi(5)) + d1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCount {
    pub total: usize,
    /// `(x, kernel dimension)` for each zero of the Wronskian determinant.
    pub roots: Vec<(f64, usize)>,
}

/// Total kernel dimension of the Wronskian matrix `[r₁ r₁′; r₂ r₂′]` over the
/// line, for the reference case only.
pub fn root_count(c: [f64; 2], a: [f64; 2]) -> Result<RootCount> {
    if a != [0.0, 0.0] || c != [0.5, 1.5] {
        return Err(Error::InvalidConfig(
            "root counting is implemented for a = (0,0), c = (0.5, 1.5) only".into(),
        ));
    }
    // Scale-free determinant: sine of the angle between the rows.
    let angle = |x: f64| {
        let (r, d) = (reference_zero_solutions(x), reference_zero_solutions_dx(x));
        let det = r[0] * d[1] - r[1] * d[0];
        let norm = (r[0].hypot(d[0]) * r[1].hypot(d[1])).max(f64::MIN_POSITIVE);
        det / norm
    };
    let rank_deficit = |x: f64| {
        let (r, d) = (reference_zero_solutions(x), reference_zero_solutions_dx(x));
        let m = nalgebra::Matrix2::new(r[0], d[0], r[1], d[1]);
        let sv = m.singular_values();
        let scale = sv.max().max(f64::MIN_POSITIVE);
        sv.iter().filter(|s| **s <= 1e-8 * scale).count().max(1)
    };
    // Beyond |x| = 20 both rows align to within rounding; the leading
    // asymptotics keep the determinant of one sign there.
    let (lo, hi, n) = (-20.0, 20.0, 40_001);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut roots = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        let (x0, x1) = (xs[i], xs[i + 1]);
        let (f0, f1) = (angle(x0), angle(x1));
        if f0 == 0.0 {
            roots.push((x0, rank_deficit(x0)));
            i += 2;
            continue;
        }
        if f0.signum() != f1.signum() && f1 != 0.0 {
            let (mut a, mut b, fa) = (x0, x1, f0);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if angle(m).signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let z = 0.5 * (a + b);
            roots.push((z, rank_deficit(z)));
        }
        i += 1;
    }
    Ok(RootCount { total: roots.iter().map(|r| r.1).sum(), roots })
}

/// The four explicit solutions of `Q(c)v = 0` in `z = tanh x`.
pub fn appendix_c_basis(z: f64, c: f64) -> [f64; 4] {
    let (zp, zm) = (1.0 + z, 1.0 - z);
    let s = (zp * zm).sqrt();
    let poly = -3.0 * z * c * c + 3.0 * z.powi(3) * c * c - 7.0 * z.powi(3) + 7.0 * z;
    let tail = 4.0 * c * c - 6.0 * c * c * z * z + 14.0 * z * z - 12.0;
    [
        s * z,
        zp.powf(-c / 2.0) * zm.powf(c / 2.0) * ((c + z).powi(2) + z * z - 1.0),
        zp.powf(c / 2.0) * zm.powf(-c / 2.0) * ((c - z).powi(2) + z * z - 1.0),
        (poly * (zp / zm).ln() + tail) / s,
    ]
}

/// Coefficients of `Q(c)` in front of `f⁗, f‴, f″, f′, f`.
fn appendix_c_coefficients(z: f64, c: f64) -> [f64; 5] {
    let (zp, zm) = (z + 1.0, z - 1.0);
    let cs = c * c;
    [
        zm.powi(4) * zp.powi(4),
        12.0 * z * zm.powi(3) * zp.powi(3),
        zm.powi(2) * zp.powi(2) * (26.0 * z * z - cs + 1.0),
        -2.0 * z * zm * zp * (8.0 * z * z - 11.0 + cs),
        4.0 - 20.0 * z.powi(4) + 6.0 * cs * z * z - 5.0 * cs + 16.0 * z * z,
    ]
}

/// Fornberg weights for derivatives `0..=m` at `x0` from `nodes`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixCReport {
    pub c: f64,
    /// Sup over the grid of `|Q(c)vᵢ|` relative to the local sum of term magnitudes.
    pub residuals: [f64; 4],
    pub bounded: [bool; 4],
    /// Local power `p` with `|vᵢ| ~ (1∓z)^p` at the worse endpoint.
    pub endpoint_powers: [f64; 4],
}

/// Applies `Q(c)` to the explicit basis with 15-point Fornberg stencils on
/// `z = tanh s`, `s` uniform, keeping a margin `10⁻³` from `±1`.
pub fn appendix_c_check(c: f64) -> Result<AppendixCReport> {
    if c == 1.0 || !(c > 0.0) {
        return Err(Error::InvalidC(c));
    }
    let margin: f64 = 1e-3;
    let s_max = (1.0 - margin).atanh();
    let width = 15;
    let n_eval: usize = 301;
    // Centred stencils throughout: the node set extends past the margin.
    let h = 2.0 * s_max / (n_eval - 1) as f64;
    let pad = width / 2;
    let nodes: Vec<f64> =
        (0..n_eval + 2 * pad).map(|i| (-s_max + (i as f64 - pad as f64) * h).tanh()).collect();
    let values: Vec<[f64; 4]> = nodes.iter().map(|&z| appendix_c_basis(z, c)).collect();
    let n = n_eval;
    let mut totals = vec![[0.0f64; 4]; n];
    let mut local = vec![[0.0f64; 4]; n];
    let mut scales = [0.0f64; 4];
    for i in 0..n {
        let start = i;
        let zi = nodes[i + pad];
        let stencil = &nodes[start..start + width];
        let w = fornberg_weights(zi, stencil, 4);
        let coef = appendix_c_coefficients(zi, c);
        for b in 0..4 {
            let mut total = 0.0;
            for (order, cf) in coef.iter().enumerate() {
                let d: f64 = (0..width).map(|k| w[4 - order][k] * values[start + k][b]).sum();
                total += cf * d;
                local[i][b] += (cf * d).abs();
            }
            scales[b] = scales[b].max(local[i][b]);
            totals[i][b] = total;
        }
    }
    // Pointwise relative residuals, floored where every term vanishes together.
    let residuals: [f64; 4] = std::array::from_fn(|b| {
        (0..n).fold(0.0f64, |m, i| m.max(totals[i][b].abs() / (local[i][b] + 1e-3 * scales[b])))
    });
    let (e1, e2) = (1e-4, 1e-10);
    let mut endpoint_powers = [f64::INFINITY; 4];
    for sign in [1.0, -1.0] {
        let near = appendix_c_basis(sign * (1.0 - e1), c);
        let far = appendix_c_basis(sign * (1.0 - e2), c);
        for b in 0..4 {
            let p = (far[b].abs() / near[b].abs()).ln() / (e2 / e1).ln();
            endpoint_powers[b] = endpoint_powers[b].min(p);
        }
    }
    let bounded = endpoint_powers.map(|p| p > -1e-2);
    Ok(AppendixCReport { c, residuals, bounded, endpoint_powers })
}

/// Sup of `f` over `|x| ≤ L/2`, away from the periodic seam where the
/// truncated tails of non-decaying test fields are amplified.
pub fn interior_sup(grid: &LineGrid, f: &[f64]) -> f64 {
    let half = 0.5 * grid.half_width();
    (0..grid.n()).filter(|&j| grid.x(j).abs() <= half).fold(0.0, |m, j| m.max(f[j].abs()))
}

/// `H_c′(u) = I₅′ + (c₁²+c₂²)I₃′ + c₁²c₂²I₁′`.
pub fn hc_gradient(c: [f64; 2], u: &FieldSample) -> Result<Vec<f64>> {
    use crate::functionals::gradient;
    let (s1, s2) = (c[0] * c[0], c[1] * c[1]);
    let (g1, g3, g5) = (gradient(1, u)?, gradient(3, u)?, gradient(5, u)?);
    Ok((0..u.values.len())
        .map(|i| g5.values[i] + (s1 + s2) * g3.values[i] + s1 * s2 * g1.values[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::hessian_apply;

    fn reference() -> (SolitonParams, LineGrid) {
        (SolitonParams::new([0.0, 0.0], [0.5, 1.5]).unwrap(), LineGrid::new(512, 20.0).unwrap())
    }

    #[test]
    fn matrix_matches_matrix_free_hessian() {
        let p = SolitonParams::new([-1.0, 1.0], [1.0, 1.6]).unwrap();
        let grid = LineGrid::new(384, 24.0).unwrap();
        let k = assemble_k(&p, &grid).unwrap();
        assert!(k.asymmetry() < 1e-10);
        let q = FieldSample::q2(&p, &grid).unwrap();
        let v = FieldSample::from_fn(&grid, |x| (-(x - 0.7).powi(2) / 2.0).exp() * (1.0 + 0.3 * x));
        let (h1, h3, h5) =
            (hessian_apply(1, &q, &v).unwrap(), hessian_apply(3, &q, &v).unwrap(), hessian_apply(5, &q, &v).unwrap());
        let (s1, s2) = (1.0, 1.6f64 * 1.6);
        let kv = k.apply(&v.values);
        let err = (0..grid.n())
            .map(|i| (kv[i] - (h5.values[i] + (s1 + s2) * h3.values[i] + s1 * s2 * h1.values[i])).abs())
            .fold(0.0, f64::max);
        let scale = kv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-8 * scale, "{err} of {scale}");
    }

    #[test]
    fn reference_spectrum_counts() {
        let (p, grid) = reference();
        let s = spectrum_summary(&assemble_k(&p, &grid).unwrap(), None);
        assert_eq!((s.n_negative, s.kernel_dim), (1, 2), "{:?}", &s.eigenvalues[..6]);
    }

    #[test]
    fn reference_operator_kills_eta_slope() {
        let grid = LineGrid::new(512, 30.0).unwrap();
        for c in [0.5, 2.0] {
            let p = assemble_p(c, &grid).unwrap();
            let v = grid.sample(|x| -x.tanh() / x.cosh());
            let r = interior_sup(&grid, &p.apply(&v));
            assert!(r < 1e-8, "{c}: {r}");
        }
        assert!(matches!(assemble_p(1.0, &grid), Err(Error::InvalidC(_))));
    }

    #[test]
    fn zero_solutions_match_profile_partials() {
        let p = SolitonParams::new([0.0, 0.0], [0.5, 1.5]).unwrap();
        for x in [-3.0, -0.4, 0.9, 5.0] {
            let j = crate::soliton::q2_jet(x, &p);
            let [r1, r2] = reference_zero_solutions(x);
            assert!((j.d[0] - r1).abs() < 1e-10, "x {x}");
            // α moves the solitons apart symmetrically: a = (−α, α).
            assert!((-j.d[1] + j.d[2] - r2).abs() < 1e-10, "x {x}");
        }
    }

    #[test]
    fn root_count_reference() {
        let r = root_count([0.5, 1.5], [0.0, 0.0]).unwrap();
        assert_eq!(r.total, 1);
        assert!(r.roots[0].0.abs() < 1e-8);
    }

    #[test]
    fn fornberg_exact_on_polynomials() {
        let nodes = [-0.3, -0.1, 0.0, 0.2, 0.5, 0.6];
        let w = fornberg_weights(0.1, &nodes, 2);
        let d2: f64 = nodes.iter().zip(&w[2]).map(|(x, c)| c * x.powi(3)).sum();
        assert!((d2 - 0.6).abs() < 1e-10);
    }

    #[test]
    fn appendix_c() {
        for c in [0.5, 2.0] {
            let r = appendix_c_check(c).unwrap();
            assert!(r.residuals.iter().all(|&x| x < 1e-6), "{r:?}");
            assert_eq!(r.bounded, [true, false, false, false], "{r:?}");
        }
        assert!(matches!(appendix_c_check(1.0), Err(Error::InvalidC(_))));
    }
}
