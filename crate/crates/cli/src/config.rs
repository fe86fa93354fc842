//! Experiment configuration: JSON on disk, flag overrides on top.

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mkdv_core::effective::EffectiveState;
use mkdv_core::potential::PotentialSpec;
use mkdv_core::solver::Dealias;
use mkdv_core::SolitonParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulate,
    Effective,
    Compare,
    Spectrum,
    Verify,
    Crossing,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Effective => "effective",
            Kind::Compare => "compare",
            Kind::Spectrum => "spectrum",
            Kind::Verify => "verify",
            Kind::Crossing => "crossing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    /// Power of two; `None` picks a spacing of about 0.12 on the line.
    #[serde(default)]
    pub n_points: Option<usize>,
    /// `None` uses `4π/h`, two periods of a π-periodic profile.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "padded")]
    pub dealias: Dealias,
    /// Number of recorded snapshots over the run.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub snapshot_format: SnapshotFormat,
}

fn padded() -> Dealias {
    Dealias::Padded
}

fn default_snapshots() -> usize {
    100
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            n_points: None,
            half_width: None,
            dt: None,
            dealias: padded(),
            snapshots: default_snapshots(),
            snapshot_format: SnapshotFormat::Csv,
        }
    }
}

impl GridSettings {
    pub fn half_width_for(&self, h: f64) -> f64 {
        self.half_width.unwrap_or(4.0 * PI / h)
    }

    pub fn n_points_for(&self, h: f64) -> usize {
        self.n_points.unwrap_or_else(|| ((2.0 * self.half_width_for(h) / 0.123).ceil() as usize).next_power_of_two())
    }
}

/// A catalogue preset or a slow profile `b₀(X,T)`; the line potential is
/// `b(x,t) = b₀(hx, ht)` for a profile and `h²B(hx, h³t)` for a preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// `listex1` to `listex4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub profile: PotentialSpec,
    /// Overall factor applied to either form.
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { preset: None, profile: PotentialSpec::zero(), amplitude: 1.0 }
    }
}

impl PotentialConfig {
    pub fn preset_index(&self) -> Result<Option<usize>> {
        let Some(name) = &self.preset else { return Ok(None) };
        let idx = name
            .strip_prefix("listex")
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|i| (1..=4).contains(i))
            .with_context(|| format!("unknown potential preset {name:?}; expected listex1 to listex4"))?;
        Ok(Some(idx))
    }

    /// The slow profile `b₀`, with `b = b₀(hx, ht)` once `with_h(h)` is applied.
    pub fn slow_profile(&self, h: f64) -> Result<PotentialSpec> {
        let mut spec = match self.preset_index()? {
            // h²B(hx, h³t) = b₀(hx, ht) with b₀(X,T) = h²B(X, h²T).
            Some(i) => {
                let mut b = PotentialSpec::listex(i)?;
                for term in &mut b.terms {
                    term.omega *= h * h;
                }
                PotentialSpec { h: 1.0, time_scale: None, amplitude: h * h, terms: b.terms }
            }
            None => PotentialSpec { h: 1.0, time_scale: None, ..self.profile.clone() },
        };
        spec.amplitude *= self.amplitude;
        Ok(spec)
    }

    pub fn line(&self, h: f64) -> Result<PotentialSpec> {
        Ok(self.slow_profile(h)?.with_h(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub a: [f64; 2],
    pub c: [f64; 2],
    /// Phase signs `ε_j`.
    #[serde(default = "unit_signs")]
    pub eps: [f64; 2],
    /// `a` holds slow positions `ā = h·a`.
    #[serde(default)]
    pub slow: bool,
}

fn unit_signs() -> [f64; 2] {
    [1.0, 1.0]
}

impl InitialData {
    pub fn line_params(&self, h: f64) -> Result<SolitonParams> {
        let a = if self.slow { [self.a[0] / h, self.a[1] / h] } else { self.a };
        Ok(SolitonParams::new(a, self.c)?.with_signs(self.eps)?)
    }

    pub fn slow_state(&self, h: f64) -> EffectiveState {
        let a = if self.slow { self.a } else { [self.a[0] * h, self.a[1] * h] };
        EffectiveState::new(0.0, a, self.c)
    }

    pub fn line_state(&self, h: f64) -> EffectiveState {
        let a = if self.slow { [self.a[0] / h, self.a[1] / h] } else { self.a };
        EffectiveState::new(0.0, a, self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    /// Random parameter draws for the closed-form sweep.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Factor applied to `q` before the identity checks; 1 leaves it exact.
    #[serde(default = "one")]
    pub corrupt_amplitude: f64,
}

fn default_samples() -> usize {
    10
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { samples: default_samples(), corrupt_amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub initial: InitialData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    /// Slow-time horizon `T`; line runs go to `t = T/h`.
    #[serde(default = "one")]
    pub horizon: f64,
    /// Separation margin `δ₀` required of the initial scales.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifySettings,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A runnable configuration for each kind.
    pub fn default_for(kind: Kind) -> Self {
        let slow_profile = || PotentialConfig {
            preset: None,
            profile: serde_json::from_value(serde_json::json!({
                "terms": [
                    {"kind": "cos2", "amplitude": 0.3, "k": 1.0, "phase": 1.0, "omega": -1.0},
                    {"kind": "sin", "amplitude": 0.2, "k": 2.0, "phase": 2.0, "omega": 1.0}
                ]
            }))
            .expect("static profile"),
            amplitude: 1.0,
        };
        let base = Self {
            kind,
            grid: GridSettings::default(),
            potential: PotentialConfig::default(),
            initial: InitialData { a: [-1.0, 0.0], c: [1.0, 2.0], eps: unit_signs(), slow: true },
            h: Some(0.2),
            h_list: None,
            horizon: 1.0,
            delta0: None,
            out: default_out().join(kind.name()),
            seed: 0,
            verify: VerifySettings::default(),
        };
        match kind {
            Kind::Simulate | Kind::Effective | Kind::Compare => Self { potential: slow_profile(), ..base },
            Kind::Spectrum => Self {
                initial: InitialData { a: [0.0, 0.0], c: [0.5, 1.5], eps: unit_signs(), slow: false },
                grid: GridSettings { n_points: Some(512), half_width: Some(20.0), ..GridSettings::default() },
                h: None,
                ..base
            },
            Kind::Verify => Self { h: None, ..base },
            Kind::Crossing => {
                let a = [-PI / 3.0, PI / 6.0];
                Self {
                    potential: PotentialConfig {
                        profile: PotentialSpec::cos2(),
                        ..PotentialConfig::default()
                    },
                    initial: InitialData {
                        a,
                        c: [3f64.sqrt() * a[0].cos(), 3f64.sqrt() * a[1].cos()],
                        eps: unit_signs(),
                        slow: true,
                    },
                    h: None,
                    h_list: Some(vec![0.3, 0.2, 0.15, 0.1]),
                    ..base
                }
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment config")?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// `h` for single-scale kinds (1 when absent).
    pub fn h(&self) -> f64 {
        self.h.unwrap_or(1.0)
    }

    /// Scales to run: `h_list` if given, else `[h]`.
    pub fn scales(&self) -> Vec<f64> {
        self.h_list.clone().unwrap_or_else(|| vec![self.h()])
    }

    pub fn validate(&self) -> Result<()> {
        for h in self.scales() {
            ensure!(h > 0.0 && h.is_finite(), "h = {h} must be positive");
        }
        if self.kind == Kind::Crossing {
            ensure!(self.h_list.as_ref().is_some_and(|l| l.len() >= 2), "crossing needs an h_list with at least two values");
            ensure!(self.initial.slow, "crossing initial data must be slow positions (initial.slow = true)");
        }
        ensure!(self.horizon > 0.0, "horizon must be positive");
        ensure!(self.grid.snapshots >= 1, "at least one snapshot is needed");
        if let Some(n) = self.grid.n_points {
            ensure!(n.is_power_of_two() && n >= 16, "grid.n_points = {n} must be a power of two ≥ 16");
        }
        if let Some(hw) = self.grid.half_width {
            ensure!(hw > 0.0, "grid.half_width must be positive");
        }
        self.potential.preset_index()?;
        ensure!(self.potential.amplitude.is_finite(), "potential amplitude must be finite");
        if self.kind != Kind::Verify {
            self.initial.line_params(self.h()).context("initial data")?;
        }
        let [c1, c2] = self.initial.c;
        if let Some(d0) = self.delta0 {
            // |c₁ ± c₂| > 2δ₀ and 2δ₀ < |c_j| < 1/(2δ₀).
            let ok = (c1 - c2).abs() > 2.0 * d0
                && (c1 + c2).abs() > 2.0 * d0
                && [c1, c2].iter().all(|c| c.abs() > 2.0 * d0 && c.abs() < 0.5 / d0);
            if !ok {
                bail!("initial scales c = ({c1}, {c2}) violate the separation margin δ₀ = {d0}");
            }
        }
        if self.kind == Kind::Verify {
            ensure!(self.verify.samples >= 1, "verify.samples must be at least 1");
            ensure!(self.verify.corrupt_amplitude.is_finite(), "verify.corrupt_amplitude must be finite");
        }
        Ok(())
    }
}

/// Command-line overrides applied after loading the JSON.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub potential: Option<String>,
    pub grid_n: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<SnapshotFormat>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(h) = self.h {
            cfg.h = Some(h);
            cfg.h_list = None;
        }
        if let Some(p) = &self.potential {
            cfg.potential.preset = Some(p.clone());
        }
        if let Some(n) = self.grid_n {
            cfg.grid.n_points = Some(n);
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.format {
            cfg.grid.snapshot_format = f;
        }
    }
}
