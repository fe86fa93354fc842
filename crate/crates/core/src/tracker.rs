//! Modulation parameters from field snapshots.
//!
//! A fit solves `φᵢ(a,c) = ⟨u − q(a,c), ∂ₓ⁻¹∂ᵢq(a,c)⟩ = 0` for the four
//! directions `(a₁, a₂, c₁, c₂)` by Newton's method, so the remainder
//! `v = u − q` is symplectically orthogonal to the soliton manifold.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{antiderivative_values, grad_b, FieldSample};
use crate::grid::LineGrid;
use crate::potential::PotentialSpec;
use crate::soliton::{q2_fields, SolitonParams};
use crate::solver::FieldState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Largest parameter move from the guess; `None` means `0.1·min|c|`.
    pub capture_radius: Option<f64>,
    /// Orthogonality tolerance relative to `‖u‖·max‖∂ₓ⁻¹∂ᵢq‖`.
    pub tol_scale: f64,
    /// Relative mean tolerance for the antiderivatives on a finite box.
    pub mean_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 25, capture_radius: None, tol_scale: 1e-10, mean_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct ModulationFit {
    pub params: SolitonParams,
    pub residual_field: FieldSample,
    pub ortho_residuals: [f64; 4],
    /// Tolerance the residuals were driven below.
    pub ortho_tol: f64,
    pub h2_error: f64,
    pub newton_iters: usize,
    /// `max|φ|` before each Newton update and after the last one.
    pub history: Vec<f64>,
}

struct Pairing {
    phi: [f64; 4],
    /// `−⟨∂ⱼq, ∂ₓ⁻¹∂ᵢq⟩`, indexed `[i][j]`.
    first: [[f64; 4]; 4],
    inv_norm: f64,
}

fn pairing(u: &[f64], p: &SolitonParams, grid: &LineGrid, mean_tol: f64) -> Result<(Pairing, Vec<f64>)> {
    let f = q2_fields(p, grid)?;
    let v: Vec<f64> = u.iter().zip(&f.q).map(|(a, b)| a - b).collect();
    let inv: Vec<Vec<f64>> = f.tangent.iter().map(|t| antiderivative_values(grid, t, mean_tol)).collect::<Result<_>>()?;
    let phi = std::array::from_fn(|i| grid.inner(&v, &inv[i]));
    let first = std::array::from_fn(|i| std::array::from_fn(|j| -grid.inner(&f.tangent[j], &inv[i])));
    let inv_norm = inv.iter().map(|w| grid.inner(w, w).sqrt()).fold(0.0, f64::max);
    Ok((Pairing { phi, first, inv_norm }, v))
}

/// `⟨v, ∂ₓ⁻¹∂ⱼ∂ᵢq⟩` by central differences of the exact first partials in `j`.
fn curvature_terms(v: &[f64], p: &SolitonParams, grid: &LineGrid, mean_tol: f64) -> Result<[[f64; 4]; 4]> {
    let base = p.to_array();
    let mut out = [[0.0; 4]; 4];
    for j in 0..4 {
        let step = 1e-5 * base[j].abs().max(1.0);
        let side = |s: f64| -> Result<[f64; 4]> {
            let mut y = base;
            y[j] += s * step;
            let f = q2_fields(&SolitonParams::from_array(y, p.eps), grid)?;
            let mut r = [0.0; 4];
            for (i, t) in f.tangent.iter().enumerate() {
                r[i] = grid.inner(v, &antiderivative_values(grid, t, mean_tol)?);
            }
            Ok(r)
        };
        let (plus, minus) = (side(1.0)?, side(-1.0)?);
        for i in 0..4 {
            out[i][j] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(out)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn fit(u: &FieldSample, guess: &SolitonParams, opts: &FitOptions) -> Result<ModulationFit> {
    guess.validate()?;
    let grid = &u.grid;
    let capture = opts.capture_radius.unwrap_or(0.1 * guess.c[0].abs().min(guess.c[1].abs()));
    let u_norm = grid.inner(&u.values, &u.values).sqrt();
    let start = guess.to_array();
    let mut p = *guess;
    let mut history = Vec::new();
    for iter in 0..=opts.max_iters {
        let (pr, v) = pairing(&u.values, &p, grid, opts.mean_tol)?;
        let tol = opts.tol_scale * u_norm * pr.inv_norm;
        let res = max_abs(&pr.phi);
        history.push(res);
        if res <= tol {
            let field = FieldSample::new(v, grid);
            let h2_error = grid.sobolev_norm(&field.values, 2.0);
            return Ok(ModulationFit {
                params: p,
                residual_field: field,
                ortho_residuals: pr.phi,
                ortho_tol: tol,
                h2_error,
                newton_iters: iter,
                history,
            });
        }
        if iter == opts.max_iters {
            return Err(Error::NoConvergence { iters: iter, residual: res });
        }
        let second = curvature_terms(&v, &p, grid, opts.mean_tol)?;
        let jac = Matrix4::from_fn(|i, j| pr.first[i][j] + second[i][j]);
        let rhs = Vector4::from_fn(|i, _| -pr.phi[i]);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateParams("singular modulation Jacobian".into()))?;
        let mut y = p.to_array();
        for k in 0..4 {
            y[k] += delta[k];
        }
        if (0..4).any(|k| (y[k] - start[k]).abs() > capture) {
            return Err(Error::NoConvergence { iters: iter + 1, residual: res });
        }
        p = SolitonParams::from_array(y, p.eps);
        p.validate()?;
    }
    unreachable!("loop returns on the final iteration")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub a: [f64; 2],
    pub c: [f64; 2],
    pub h2_error: f64,
    pub iters: usize,
}

impl TrackPoint {
    pub fn params(&self, eps: [f64; 2]) -> SolitonParams {
        SolitonParams { a: self.a, c: self.c, eps }
    }
}

/// Warm-started fits along a snapshot sequence. The guess for each fit is
/// the previous fit advanced with the free velocities `c²`.
pub fn track(snapshots: &[FieldState], init: &SolitonParams, opts: &FitOptions) -> Result<Vec<TrackPoint>> {
    let mut out: Vec<TrackPoint> = Vec::with_capacity(snapshots.len());
    let mut prev = (*init, snapshots.first().map_or(0.0, |s| s.t));
    for (index, snap) in snapshots.iter().enumerate() {
        let (p, t_prev) = prev;
        let dt = snap.t - t_prev;
        let guess = SolitonParams {
            a: [p.a[0] + p.c[0] * p.c[0] * dt, p.a[1] + p.c[1] * p.c[1] * dt],
            ..p
        };
        let f = fit(&snap.sample(), &guess, opts).map_err(|_| Error::TrackingLost { index })?;
        out.push(TrackPoint { t: snap.t, a: f.params.a, c: f.params.c, h2_error: f.h2_error, iters: f.newton_iters });
        prev = (f.params, snap.t);
    }
    Ok(out)
}

/// Central-difference velocities `(ȧ₁, ȧ₂, ċ₁, ċ₂)` of a fitted trajectory,
/// one-sided at the ends.
pub fn velocities(track: &[TrackPoint]) -> Vec<[f64; 4]> {
    let y = |p: &TrackPoint| [p.a[0], p.a[1], p.c[0], p.c[1]];
    let n = track.len();
    (0..n)
        .map(|i| {
            let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if l == r {
                return [0.0; 4];
            }
            let (yl, yr) = (y(&track[l]), y(&track[r]));
            let dt = track[r].t - track[l].t;
            std::array::from_fn(|k| (yr[k] - yl[k]) / dt)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FDecomposition {
    /// Coefficients of `F_∥` on `(∂a₁q, ∂a₂q, ∂c₁q, ∂c₂q)`.
    pub parallel: [f64; 4],
    pub perp: FieldSample,
    pub perp_sup: f64,
}

/// Splits `F₀ = Σ(ȧⱼ − cⱼ²)∂aⱼq + Σċⱼ∂cⱼq − ∂ₓ(bq)` into the part along the
/// manifold, which vanishes exactly on the effective flow, and the rest.
pub fn f_decomposition(
    fitted: &ModulationFit,
    velocity: [f64; 4],
    b: &PotentialSpec,
    t: f64,
) -> Result<FDecomposition> {
    let grid = &fitted.residual_field.grid;
    let p = fitted.params;
    let f = q2_fields(&p, grid)?;
    let g = grad_b(&p, b, t)?;
    let sg = [p.c[0].signum(), p.c[1].signum()];
    let parallel = [
        velocity[0] - p.c[0] * p.c[0] + sg[0] * g[2],
        velocity[1] - p.c[1] * p.c[1] + sg[1] * g[3],
        velocity[2] - sg[0] * g[0],
        velocity[3] - sg[1] * g[1],
    ];
    let bq: Vec<f64> = grid.points().iter().zip(&f.q).map(|(&x, q)| b.eval(x, t) * q).collect();
    let dbq = grid.derivative(&bq, 1);
    let perp: Vec<f64> = (0..grid.n())
        .map(|k| {
            -dbq[k] + sg[0] * (-g[2] * f.tangent[0][k] + g[0] * f.tangent[2][k])
                + sg[1] * (-g[3] * f.tangent[1][k] + g[1] * f.tangent[3][k])
        })
        .collect();
    let perp_sup = max_abs(&perp);
    Ok(FDecomposition { parallel, perp: FieldSample::new(perp, grid), perp_sup })
}
