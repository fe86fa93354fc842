//! The six experiment kinds. Each writes its artifacts into the run
//! directory and returns check verdicts plus a JSON summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use mkdv_core::effective::{
    coupled_energy, crossing_run, decoupled_crossing, integrate_effective, summarize_crossing, EffectiveKind,
    EffectiveOptions, EffectiveTrajectory,
};
use mkdv_core::functionals::{
    canonical_gram, closed_forms, conserved, hierarchy_residual, near_conserved_linearized, near_conserved_residuals,
    potential_derivs, tangent_gram, FieldSample,
};
use mkdv_core::io;
use mkdv_core::operator::{
    appendix_c_check, assemble_k, coercivity_estimate, constraint_fields, hc_gradient, root_count, spectrum_summary,
};
use mkdv_core::potential::PotentialSpec;
use mkdv_core::soliton::{identity_residuals_of, q2_fields};
use mkdv_core::solver::{integrate, FieldState, SolverConfig};
use mkdv_core::tracker::{fit, track, velocities, f_decomposition, FitOptions, TrackPoint};
use mkdv_core::{LineGrid, SolitonParams};

use crate::config::{ExperimentConfig, Kind, SnapshotFormat};
use crate::svg::{self, Annotation, Panel, Series, Style};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), pass: value <= tolerance, value, tolerance, detail: String::new() }
    }

    pub fn flag(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, value: f64::from(u8::from(pass)), tolerance: 1.0, detail: detail.into() }
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

/// Artifacts and timings collected while a run proceeds.
pub struct RunDir {
    pub root: PathBuf,
    pub files: Vec<String>,
    pub stages: Vec<(String, f64)>,
}

impl RunDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root, files: Vec::new(), stages: Vec::new() }
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn plot(&mut self, name: &str, panels: &[Panel]) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(svg::render(panels).as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn stage<T>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.stages.push((name.into(), start.elapsed().as_secs_f64()));
        out
    }
}

pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub summary: Value,
}

pub fn run(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    match cfg.kind {
        Kind::Simulate => simulate(cfg, dir),
        Kind::Effective => effective(cfg, dir),
        Kind::Compare => compare(cfg, dir),
        Kind::Spectrum => spectrum(cfg, dir),
        Kind::Verify => verify(cfg, dir),
        Kind::Crossing => crossing(cfg, dir),
    }
}

fn tag(h: f64) -> String {
    format!("h{h}")
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Every `k`-th point so that at most `max` remain, always keeping the last.
fn thin<T: Copy>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max {
        return v.to_vec();
    }
    let k = v.len().div_ceil(max);
    let mut out: Vec<T> = v.iter().step_by(k).copied().collect();
    if !(v.len() - 1).is_multiple_of(k) {
        out.push(v[v.len() - 1]);
    }
    out
}

struct LineRun {
    grid: LineGrid,
    b: PotentialSpec,
    p0: SolitonParams,
    snapshots: Vec<FieldState>,
    dt: f64,
    drift: mkdv_core::solver::DriftReport,
}

fn line_run(cfg: &ExperimentConfig, h: f64) -> Result<LineRun> {
    let b = cfg.potential.line(h)?;
    let p0 = cfg.initial.line_params(h)?;
    let mut scfg = SolverConfig {
        n_points: cfg.grid.n_points_for(h),
        half_width: cfg.grid.half_width_for(h),
        dt: cfg.grid.dt,
        t_end: cfg.horizon / h,
        dealias: cfg.grid.dealias,
        record_stride: 1,
        ..Default::default()
    };
    let grid = scfg.grid()?;
    let u0 = FieldState::new(0.0, FieldSample::q2(&p0, &grid)?.values, &grid);
    let b_sup = sup(&b.sample(&grid, 0.0));
    let dt = scfg.dt.unwrap_or_else(|| SolverConfig::default_dt(&grid, u0.sup(), b_sup));
    scfg.record_stride = ((scfg.t_end / dt / cfg.grid.snapshots as f64) as usize).max(1);
    let out = integrate(&u0, &scfg, &b).context("spectral solver")?;
    Ok(LineRun { grid, b, p0, snapshots: out.snapshots, dt: out.dt, drift: out.drift })
}

fn write_snapshots(cfg: &ExperimentConfig, dir: &mut RunDir, stem: &str, snaps: &[FieldState]) -> Result<()> {
    match cfg.grid.snapshot_format {
        SnapshotFormat::Csv => {
            let mut w = dir.create(&format!("{stem}.csv"))?;
            io::write_snapshots_csv(&mut w, snaps)?;
            w.flush()?;
        }
        SnapshotFormat::Binary => {
            let mut w = dir.create(&format!("{stem}.bin"))?;
            io::write_snapshots_binary(&mut w, snaps)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let h = cfg.h();
    let run = dir.stage("solver", |_| line_run(cfg, h))?;
    write_snapshots(cfg, dir, "snapshots", &run.snapshots)?;
    let first = &run.snapshots[0];
    let last = run.snapshots.last().expect("at least one snapshot");
    let profile = |s: &FieldState| run.grid.points().into_iter().zip(s.values.iter().copied()).collect::<Vec<_>>();
    dir.plot(
        "profile.svg",
        &[Panel::new("Field at the first and last snapshot", "x", "u")
            .with(Series::new(format!("t = {}", first.t), profile(first), Style::Dotted, 5))
            .with(Series::new(format!("t = {:.4}", last.t), profile(last), Style::Solid, 0))],
    )?;
    Ok(Outcome {
        checks: Vec::new(),
        summary: json!({
            "h": h,
            "n_points": run.grid.n(),
            "half_width": run.grid.half_width(),
            "dt": run.dt,
            "t_end": last.t,
            "snapshots": run.snapshots.len(),
            "drift": run.drift,
            "initial": run.p0,
        }),
    })
}

fn trajectory_panels(coupled: &EffectiveTrajectory, decoupled: &EffectiveTrajectory, h: f64) -> [Panel; 2] {
    let c_pts = thin(&coupled.states, 2000);
    let d_pts = thin(&decoupled.states, 2000);
    let mut pos = Panel::new("Positions", "T = h t", "h a");
    let mut sc = Panel::new("Scales", "T = h t", "c");
    for j in 0..2 {
        pos.series.push(Series::new(format!("coupled a{}", j + 1), c_pts.iter().map(|s| (h * s.t, h * s.a[j])).collect(), Style::Solid, j));
        pos.series.push(Series::new(format!("decoupled A{}", j + 1), d_pts.iter().map(|s| (s.t, s.a[j])).collect(), Style::Dotted, j));
        sc.series.push(Series::new(format!("coupled c{}", j + 1), c_pts.iter().map(|s| (h * s.t, s.c[j])).collect(), Style::Solid, j));
        sc.series.push(Series::new(format!("decoupled C{}", j + 1), d_pts.iter().map(|s| (s.t, s.c[j])).collect(), Style::Dotted, j));
    }
    [pos, sc]
}

fn effective(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let h = cfg.h();
    let b = cfg.potential.line(h)?;
    let b0 = cfg.potential.slow_profile(h)?;
    let opts = EffectiveOptions { h, record_every: 10, ..Default::default() };
    let coupled = dir.stage("coupled", |_| {
        Ok(integrate_effective(EffectiveKind::Coupled, &cfg.initial.line_state(h), &b, cfg.horizon / h, &opts)?)
    })?;
    let dopts = EffectiveOptions { record_every: 10, ..Default::default() };
    let decoupled = dir.stage("decoupled", |_| {
        Ok(integrate_effective(EffectiveKind::Decoupled, &cfg.initial.slow_state(h), &b0, cfg.horizon, &dopts)?)
    })?;
    let mut w = dir.create("trajectory.csv")?;
    io::write_trajectory_csv(&mut w, &coupled)?;
    w.flush()?;
    let mut w = dir.create("decoupled.csv")?;
    io::write_trajectory_csv(&mut w, &decoupled)?;
    w.flush()?;
    dir.plot("effective.svg", &trajectory_panels(&coupled, &decoupled, h))?;

    let energy_drift = if b.is_autonomous() {
        let e0 = coupled_energy(&coupled.states[0], &b)?;
        let mut m: f64 = 0.0;
        for s in &coupled.states {
            m = m.max((coupled_energy(s, &b)? - e0).abs());
        }
        Some(m)
    } else {
        None
    };
    Ok(Outcome {
        checks: Vec::new(),
        summary: json!({
            "h": h,
            "coupled": { "termination": coupled.termination, "t0": coupled.t0(), "last": coupled.last(), "delta1": coupled.delta1, "energy_drift": energy_drift },
            "decoupled": { "termination": decoupled.termination, "t0": decoupled.t0(), "last": decoupled.last(), "delta1": decoupled.delta1 },
        }),
    })
}

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    h: f64,
    max_h2_error: f64,
    max_a_deviation: f64,
    /// `max|a_fit − a_eff|·max|c|`, the deviation in soliton widths.
    max_a_deviation_widths: f64,
    max_c_deviation: f64,
    max_f_parallel: f64,
    snapshots: usize,
}

fn compare_one(cfg: &ExperimentConfig, dir: &mut RunDir, h: f64) -> Result<CompareRow> {
    let t = tag(h);
    let run = dir.stage(format!("solver {t}"), |_| line_run(cfg, h))?;
    let fits = dir.stage(format!("tracker {t}"), |_| {
        track(&run.snapshots, &run.p0, &FitOptions::default()).with_context(|| format!("modulation tracking at {t}"))
    })?;
    let mut w = dir.create(&format!("fit_{t}.csv"))?;
    io::write_fit_csv(&mut w, &fits)?;
    w.flush()?;

    let opts = EffectiveOptions { h, stop_at_boundary: false, delta1: Some(0.0), ..Default::default() };
    let eff = dir.stage(format!("effective {t}"), |_| {
        Ok(integrate_effective(EffectiveKind::Coupled, &cfg.initial.line_state(h), &run.b, cfg.horizon / h, &opts)?)
    })?;
    let mut w = dir.create(&format!("effective_{t}.csv"))?;
    io::write_trajectory_csv(&mut w, &eff)?;
    w.flush()?;

    let mut w = dir.create(&format!("overlay_{t}.csv"))?;
    writeln!(w, "t,a1_fit,a2_fit,c1_fit,c2_fit,a1_eff,a2_eff,c1_eff,c2_eff,h2err")?;
    let mut overlay = Vec::with_capacity(fits.len());
    let (mut da, mut dc): (f64, f64) = (0.0, 0.0);
    for p in &fits {
        let e = eff.at(p.t).with_context(|| format!("effective trajectory does not reach t = {}", p.t))?;
        writeln!(w, "{},{},{},{},{},{},{},{},{},{}", p.t, p.a[0], p.a[1], p.c[0], p.c[1], e.a[0], e.a[1], e.c[0], e.c[1], p.h2_error)?;
        da = da.max((p.a[0] - e.a[0]).abs()).max((p.a[1] - e.a[1]).abs());
        dc = dc.max((p.c[0] - e.c[0]).abs()).max((p.c[1] - e.c[1]).abs());
        overlay.push((*p, e));
    }
    w.flush()?;

    // Component of the forcing along the manifold at each fitted point.
    let vel = velocities(&fits);
    let mut w = dir.create(&format!("fdecomp_{t}.csv"))?;
    writeln!(w, "t,f_par_a1,f_par_a2,f_par_c1,f_par_c2,f_perp_sup")?;
    let mut max_fpar: f64 = 0.0;
    for ((p, v), snap) in fits.iter().zip(&vel).zip(&run.snapshots) {
        let f = fit(&snap.sample(), &p.params(run.p0.eps), &FitOptions::default())?;
        let d = f_decomposition(&f, *v, &run.b, p.t)?;
        max_fpar = d.parallel.iter().fold(max_fpar, |m, x| m.max(x.abs()));
        writeln!(w, "{},{},{},{},{},{}", p.t, d.parallel[0], d.parallel[1], d.parallel[2], d.parallel[3], d.perp_sup)?;
    }
    w.flush()?;

    let cmax = fits.iter().fold(0.0f64, |m, p| m.max(p.c[0].abs()).max(p.c[1].abs()));
    dir.plot(&format!("compare_{t}.svg"), &compare_panels(&overlay, h))?;
    dir.plot(
        &format!("h2err_{t}.svg"),
        &[Panel::new(format!("Tracked H2 error, h = {h}"), "t", "||v||_H2")
            .with(Series::new("h2 error", fits.iter().map(|p| (p.t, p.h2_error)).collect(), Style::Solid, 0))],
    )?;
    Ok(CompareRow {
        h,
        max_h2_error: fits.iter().fold(0.0, |m, p| m.max(p.h2_error)),
        max_a_deviation: da,
        max_a_deviation_widths: da * cmax,
        max_c_deviation: dc,
        max_f_parallel: max_fpar,
        snapshots: fits.len(),
    })
}

fn compare_panels(overlay: &[(TrackPoint, mkdv_core::effective::EffectiveState)], h: f64) -> [Panel; 2] {
    let mut pos = Panel::new(format!("Positions, h = {h}"), "t", "a");
    let mut sc = Panel::new(format!("Scales, h = {h}"), "t", "c");
    for j in 0..2 {
        pos.series.push(Series::new(format!("fitted a{}", j + 1), overlay.iter().map(|(p, _)| (p.t, p.a[j])).collect(), Style::Solid, j));
        pos.series.push(Series::new(format!("effective a{}", j + 1), overlay.iter().map(|(p, e)| (p.t, e.a[j])).collect(), Style::Dotted, j));
        sc.series.push(Series::new(format!("fitted c{}", j + 1), overlay.iter().map(|(p, _)| (p.t, p.c[j])).collect(), Style::Solid, j));
        sc.series.push(Series::new(format!("effective c{}", j + 1), overlay.iter().map(|(p, e)| (p.t, e.c[j])).collect(), Style::Dotted, j));
    }
    [pos, sc]
}

fn compare(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let mut rows = Vec::new();
    for h in cfg.scales() {
        rows.push(compare_one(cfg, dir, h)?);
    }
    let mut checks = Vec::new();
    let mut scaling = None;
    if rows.len() >= 2 {
        let coarse = rows.iter().max_by(|a, b| a.h.total_cmp(&b.h)).expect("rows");
        let fine = rows.iter().min_by(|a, b| a.h.total_cmp(&b.h)).expect("rows");
        let ratio = fine.max_h2_error / coarse.max_h2_error;
        let expected = (fine.h / coarse.h).powi(2);
        let factor = ratio / expected;
        checks.push(
            CheckResult::flag("h2 error scales like h^2 within factor 2", (0.5..=2.0).contains(&factor), "")
                .detail(format!("err({})/err({}) = {ratio:.4}, expected {expected:.4}", fine.h, coarse.h)),
        );
        scaling = Some(json!({ "ratio": ratio, "expected": expected, "factor": factor }));
    }
    Ok(Outcome { checks, summary: json!({ "runs": rows, "scaling": scaling }) })
}

fn spectrum(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let h = cfg.h();
    let p = cfg.initial.line_params(h)?;
    let grid = LineGrid::new(cfg.grid.n_points.unwrap_or(512), cfg.grid.half_width.unwrap_or(20.0))?;
    let k = dir.stage("assemble", |_| Ok(assemble_k(&p, &grid)?))?;
    let s = dir.stage("eigensolve", |_| Ok(spectrum_summary(&k, None)))?;
    let coer = dir.stage("coercivity", |_| Ok(coercivity_estimate(&k, &constraint_fields(&p, &grid)?)?))?;
    let mut w = dir.create("spectrum.csv")?;
    io::write_spectrum_csv(&mut w, &s)?;
    w.flush()?;
    let shown: Vec<(f64, f64)> = s.eigenvalues.iter().take(40).enumerate().map(|(i, l)| (i as f64, *l)).collect();
    let edge = vec![(0.0, s.continuous_threshold), (shown.len().saturating_sub(1) as f64, s.continuous_threshold)];
    dir.plot(
        "spectrum.svg",
        &[Panel::new("Lowest eigenvalues of the Hessian", "index", "lambda")
            .with(Series::new("eigenvalues", shown, Style::Solid, 0))
            .with(Series::new("continuous threshold", edge, Style::Dotted, 5))],
    )?;
    let roots = if p.a == [0.0, 0.0] && p.c == [0.5, 1.5] { Some(root_count(p.c, p.a)?) } else { None };
    Ok(Outcome {
        checks: Vec::new(),
        summary: json!({
            "params": p,
            "n_points": grid.n(),
            "half_width": grid.half_width(),
            "n_negative": s.n_negative,
            "kernel_dim": s.kernel_dim,
            "smallest_positive": s.smallest_positive,
            "continuous_threshold": s.continuous_threshold,
            "kernel_tol": s.kernel_tol,
            "discrete": s.discrete,
            "coercivity": coer,
            "root_count": roots,
        }),
    })
}

type Suite = Box<dyn Fn() -> Vec<CheckResult> + Send + Sync>;

fn verify_suites(cfg: &ExperimentConfig) -> Vec<Suite> {
    let seed = cfg.seed;
    let samples = cfg.verify.samples;
    let corrupt = cfg.verify.corrupt_amplitude;
    let fail = |name: &str, e: &dyn std::fmt::Display| CheckResult::flag(name, false, e.to_string());
    vec![
        Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let c1: f64 = rng.random_range(0.6..2.2);
                let c2 = loop {
                    let v: f64 = rng.random_range(0.6..2.2);
                    if (v - c1).abs() > 0.2 {
                        break v;
                    }
                };
                let a = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let Ok(p) = SolitonParams::new(a, [c1, c2]) else { continue };
                let grid = LineGrid::new(8192, 6.0 + 45.0 / c1.min(c2)).expect("grid");
                let r = match FieldSample::q2(&p, &grid).and_then(|u| conserved(&u)) {
                    Ok(r) => r,
                    Err(e) => return vec![fail("closed forms", &e)],
                };
                let exact = closed_forms(&p);
                let got = [r.i0, r.i1, r.i3, r.i5, r.x_moment];
                let scale = [exact[0], exact[1], exact[2], exact[3], 2.0 * (a[0].abs() * c1 + a[1].abs() * c2)];
                for k in 0..5 {
                    worst = worst.max((got[k] - exact[k]).abs() / scale[k].abs());
                }
            }
            vec![CheckResult::at_most("closed forms I0 I1 I3 I5 and x-moment", worst, 1e-8).detail(format!("{samples} random draws, seed {seed}"))]
        }),
        Box::new(move || {
            let want = canonical_gram();
            let mut worst: f64 = 0.0;
            for (a, c) in [([-2.0, 1.5], [0.8, 1.4]), ([0.0, 0.0], [0.5, 1.5]), ([1.0, -1.0], [1.2, 0.7])] {
                let p = SolitonParams::new(a, c).expect("admissible");
                match tangent_gram(&p, &LineGrid::new(2048, 60.0).expect("grid")) {
                    Ok(g) => {
                        for i in 0..4 {
                            for j in 0..4 {
                                worst = worst.max((g[i][j] - want[i][j]).abs());
                            }
                        }
                    }
                    Err(e) => return vec![fail("symplectic gram matrix", &e)],
                }
            }
            vec![CheckResult::at_most("symplectic gram matrix", worst, 1e-6)]
        }),
        Box::new(move || {
            let p = SolitonParams::new([-1.0, 1.5], [0.8, 1.3]).expect("admissible");
            let grid = LineGrid::new(4096, 40.0).expect("grid");
            let mut f = match q2_fields(&p, &grid) {
                Ok(f) => f,
                Err(e) => return vec![fail("profile identities", &e)],
            };
            f.q.iter_mut().chain(f.qx.iter_mut()).for_each(|v| *v *= corrupt);
            let q = FieldSample::new(f.q.clone(), &grid);
            let mut out = Vec::new();
            match identity_residuals_of(&f, &p, &grid) {
                Ok(r) => {
                    out.push(CheckResult::at_most("identity: translation", r.translation, 1e-6));
                    out.push(CheckResult::at_most("identity: flow", r.flow, 1e-6));
                    out.push(CheckResult::at_most("identity: scaling", r.scaling, 1e-6));
                }
                Err(e) => out.push(fail("profile identities", &e)),
            }
            match hc_gradient(p.c, &q) {
                Ok(g) => out.push(CheckResult::at_most("critical point H_c'(q)", sup(&g), 1e-6)),
                Err(e) => out.push(fail("critical point H_c'(q)", &e)),
            }
            for k in [1, 2] {
                match hierarchy_residual(k, &q) {
                    Ok(r) => out.push(CheckResult::at_most(format!("hierarchy k={k}"), r, 1e-6)),
                    Err(e) => out.push(fail("hierarchy", &e)),
                }
            }
            let b = PotentialSpec::listex(3).expect("catalogue").box_to_line(0.1);
            let bd = potential_derivs(&b, &grid, 0.3);
            let v = FieldSample::from_fn(&grid, |x| (-(x - 0.4).powi(2) / 3.0).exp() * (0.5 - 0.2 * x));
            match (near_conserved_residuals(&q, &bd), near_conserved_linearized(&q, &v, &bd)) {
                (Ok(a), Ok(l)) => {
                    out.push(CheckResult::at_most("near-conserved identities", a.iter().fold(0.0, |m: f64, x| m.max(*x)), 1e-6));
                    out.push(CheckResult::at_most("linearised near-conserved identities", l.iter().fold(0.0, |m: f64, x| m.max(*x)), 1e-6));
                }
                (Err(e), _) | (_, Err(e)) => out.push(fail("near-conserved identities", &e)),
            }
            out
        }),
        Box::new(move || {
            let p = SolitonParams::new([0.0, 0.0], [0.5, 1.5]).expect("admissible");
            let grid = LineGrid::new(512, 20.0).expect("grid");
            let mut out = Vec::new();
            match assemble_k(&p, &grid) {
                Ok(k) => {
                    let s = spectrum_summary(&k, None);
                    out.push(CheckResult::flag("spectrum: one negative eigenvalue", s.n_negative == 1, format!("n_negative = {}", s.n_negative)));
                    out.push(CheckResult::flag("spectrum: two-dimensional kernel", s.kernel_dim == 2, format!("kernel_dim = {}", s.kernel_dim)));
                }
                Err(e) => out.push(fail("spectrum", &e)),
            }
            match root_count(p.c, p.a) {
                Ok(r) => out.push(CheckResult::flag("root count total 1 at x = 0", r.total == 1 && r.roots.iter().all(|(x, _)| x.abs() < 1e-6), format!("{:?}", r.roots))),
                Err(e) => out.push(fail("root count", &e)),
            }
            out
        }),
        Box::new(move || {
            let mut out = Vec::new();
            for c in [0.5, 2.0] {
                match appendix_c_check(c) {
                    Ok(r) => {
                        out.push(CheckResult::at_most(format!("reduced operator residuals c={c}"), r.residuals.iter().fold(0.0, |m: f64, x| m.max(*x)), 1e-6));
                        out.push(CheckResult::flag(format!("reduced operator boundedness c={c}"), r.bounded == [true, false, false, false], format!("{:?}", r.bounded)));
                    }
                    Err(e) => out.push(fail("reduced operator", &e)),
                }
            }
            out
        }),
    ]
}

fn verify(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let suites = verify_suites(cfg);
    let checks: Vec<CheckResult> = dir.stage("suites", |_| Ok(suites.par_iter().flat_map(|s| s()).collect()))?;
    let mut w = dir.create("verify.csv")?;
    writeln!(w, "check,pass,value,tolerance")?;
    for c in &checks {
        writeln!(w, "\"{}\",{},{},{}", c.name, u8::from(c.pass), c.value, c.tolerance)?;
    }
    w.flush()?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    Ok(Outcome { summary: json!({ "checks": checks.len(), "failed": failed, "seed": cfg.seed }), checks })
}

fn crossing(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Outcome> {
    let scales = cfg.scales();
    let init = cfg.initial.slow_state(1.0);
    let b0 = cfg.potential.slow_profile(scales[0])?;
    let t_cross = decoupled_crossing(&init, &b0, 10.0)?;
    let horizon = 2.0 * t_cross;
    let runs = dir.stage("coupled sweep", |_| {
        scales
            .par_iter()
            .map(|&h| Ok(crossing_run(&cfg.potential.slow_profile(h)?, &init, h, horizon)?))
            .collect::<Result<Vec<_>>>()
    })?;
    let dopts = EffectiveOptions { stop_at_boundary: false, delta1: Some(0.0), ..Default::default() };
    let dec = integrate_effective(EffectiveKind::Decoupled, &init, &b0, horizon, &dopts)?;
    let mut w = dir.create("decoupled.csv")?;
    io::write_trajectory_csv(&mut w, &dec)?;
    w.flush()?;
    for (tr, row) in &runs {
        let mut w = dir.create(&format!("crossing_{}.csv", tag(row.h)))?;
        io::write_trajectory_csv(&mut w, tr)?;
        w.flush()?;
    }
    let rows: Vec<_> = runs.iter().map(|(_, r)| r.clone()).collect();
    let report = summarize_crossing(t_cross, rows.clone());
    let mut w = dir.create("crossing_summary.csv")?;
    writeln!(w, "h,min_gap,t_min,T_min,a_gap,a_tol")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{},{}", r.h, r.min_gap, r.t_min, r.h * r.t_min, r.a_gap, r.a_tol)?;
    }
    w.flush()?;

    let mut panel = Panel::new("Scales near the crossing", "T = h t", "c");
    let d = thin(&dec.states, 2000);
    for j in 0..2 {
        panel.series.push(Series::new(format!("decoupled C{}", j + 1), d.iter().map(|s| (s.t, s.c[j])).collect(), Style::Dotted, 5));
    }
    for (i, (tr, row)) in runs.iter().enumerate() {
        let pts = thin(&tr.states, 2000);
        for j in 0..2 {
            let label = if j == 0 { format!("h = {}", row.h) } else { String::new() };
            panel.series.push(Series::new(label, pts.iter().map(|s| (row.h * s.t, s.c[j])).collect(), Style::Solid, i));
        }
        if let Some(s) = tr.at(row.t_min) {
            panel.annotations.push(Annotation {
                x: row.h * row.t_min,
                y: 0.5 * (s.c[0] + s.c[1]),
                text: format!("h={}: gap {:.2e}", row.h, row.min_gap),
            });
        }
    }
    panel.series.retain(|s| !s.points.is_empty());
    dir.plot("crossing.svg", &[panel])?;

    let mut checks = vec![
        CheckResult::flag("min gap strictly decreasing in 1/h", report.strictly_decreasing, ""),
        CheckResult::flag("log(min gap) linear in 1/h, R2 >= 0.9", report.r2 >= 0.9, format!("R2 = {:.4}", report.r2)),
    ];
    for r in &rows {
        checks.push(CheckResult::at_most(format!("a-gap at min gap, h={}", r.h), r.a_gap, r.a_tol));
    }
    Ok(Outcome { checks, summary: serde_json::to_value(&report)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_ends() {
        let v: Vec<usize> = (0..10).collect();
        assert_eq!(thin(&v, 20), v);
        let t = thin(&v, 4);
        assert_eq!(t.first(), Some(&0));
        assert_eq!(t.last(), Some(&9));
        assert!(t.len() <= 5);
    }

    #[test]
    fn corrupted_profile_fails_identities() {
        let mut cfg = ExperimentConfig::default_for(Kind::Verify);
        let names = |cfg: &ExperimentConfig| -> Vec<(String, bool)> {
            verify_suites(cfg)[2]().into_iter().map(|c| (c.name, c.pass)).collect()
        };
        assert!(names(&cfg).iter().all(|(_, p)| *p), "{:?}", names(&cfg));
        cfg.verify.corrupt_amplitude = 1.01;
        let r = names(&cfg);
        assert!(r.iter().any(|(n, p)| n.starts_with("identity") && !p), "{r:?}");
    }
}
