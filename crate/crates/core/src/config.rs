//! Run configuration: JSON, validated exhaustively before anything runs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{MixedNormSpec, StrichartzTuple};
use crate::fields::{ChemState, PeriodicGrid, Point, ScalarField};
use crate::internal::{InternalModel, State, TumblingRate};
use crate::kernels::{KernelSpec, SymmetricProfile};
use crate::kinetic::{KineticDensity, ScatterMode, VelocitySpec};
use crate::particles::{random_direction, ParticleEnsemble, TumbleMode, RATE_CFL};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Kinetic,
    Particles,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<PeriodicGrid, crate::fields::FieldError> {
        PeriodicGrid::new(self.dim, self.n, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    GaussianBump,
    TwoBumps,
    Uniform,
}

fn one() -> f64 {
    1.0
}

/// Spatial profile `floor + amplitude·bump(center)` (gaussian-bump),
/// `floor + bump(c₁) + amplitude·bump(c₂)` (two-bumps, centers at a
/// quarter and three quarters along the first axis) or a constant, scaled
/// to total mass `M`. Kinetic data are isotropic up to the factor
/// `1 + anisotropy·v₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub preset: Preset,
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub anisotropy: f64,
}

impl InitialCondition {
    fn profile(&self, grid: &PeriodicGrid) -> impl Fn(Point) -> f64 {
        let l = grid.length();
        let dim = grid.dim();
        let ic = *self;
        let bump = move |x: Point, c: Point| {
            let wrap = |d: f64| d - l * (d / l).round();
            let r2: f64 = (0..dim).map(|a| wrap(x[a] - c[a]).powi(2)).sum();
            (-r2 / (2.0 * ic.width * ic.width)).exp()
        };
        let mid = [l / 2.0; 3];
        move |x| match ic.preset {
            Preset::Uniform => 1.0,
            Preset::GaussianBump => ic.floor + ic.amplitude * bump(x, mid),
            Preset::TwoBumps => {
                let mut c1 = mid;
                let mut c2 = mid;
                c1[0] = l / 4.0;
                c2[0] = 3.0 * l / 4.0;
                ic.floor + bump(x, c1) + ic.amplitude * bump(x, c2)
            }
        }
    }

    /// Nodal density with `∫ρ = M`.
    pub fn density(&self, grid: &PeriodicGrid) -> ScalarField {
        let raw = ScalarField::from_fn(*grid, self.profile(grid));
        let total = raw.integral();
        raw.scaled(self.mass / total)
    }

    pub fn kinetic(&self, grid: &PeriodicGrid, vel: &VelocitySpec) -> Result<KineticDensity, String> {
        let vel = vel.build(grid.dim()).map_err(|e| e.to_string())?;
        let rho = self.density(grid);
        let a = self.anisotropy;
        let norm: f64 = vel.nodes().iter().zip(vel.weights()).map(|(v, w)| w * (1.0 + a * v[0])).sum();
        let mut values = Vec::with_capacity(grid.len() * vel.len());
        for v in vel.nodes() {
            let factor = (1.0 + a * v[0]) / norm;
            values.extend(rho.values().iter().map(|r| r * factor));
        }
        KineticDensity::new(*grid, vel, values, 0.0).map_err(|e| e.to_string())
    }

    /// `n` particles drawn from the profile by rejection, with uniform
    /// directions and state `y0`.
    pub fn particles(&self, grid: &PeriodicGrid, n: usize, y0: State, seed: u64) -> Result<ParticleEnsemble, String> {
        let profile = self.profile(grid);
        let dim = grid.dim();
        let l = grid.length();
        let peak = match self.preset {
            Preset::Uniform => 1.0,
            Preset::GaussianBump => self.floor + self.amplitude,
            Preset::TwoBumps => self.floor + 1.0f64.max(self.amplitude) + 1.0f64.min(self.amplitude),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - 1);
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        while xs.len() < n {
            let mut x = [0.0; 3];
            for c in x.iter_mut().take(dim) {
                *c = rng.random::<f64>() * l;
            }
            if rng.random::<f64>() * peak <= profile(x) {
                xs.push(x);
                vs.push(random_direction(dim, &mut rng));
            }
        }
        ParticleEnsemble::new(*grid, xs, vs, vec![y0; n], self.mass, seed).map_err(|e| e.to_string())
    }

    fn validate(&self, errs: &mut Vec<String>) {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            errs.push(format!("initial.M must be positive, got {}", self.mass));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            errs.push(format!("initial.width must be positive, got {}", self.width));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            errs.push(format!("initial.amplitude must be nonnegative, got {}", self.amplitude));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            errs.push(format!("initial.floor must be nonnegative, got {}", self.floor));
        }
        if self.preset == Preset::GaussianBump && self.floor == 0.0 && self.amplitude == 0.0 {
            errs.push("initial: gaussian-bump with zero floor and amplitude has no mass".into());
        }
        if !(self.anisotropy.abs() < 1.0) {
            errs.push(format!("initial.anisotropy must satisfy |a| < 1 for unit speeds, got {}", self.anisotropy));
        }
    }
}

/// Internal dynamics and tumbling for particle runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalConfig {
    pub model: InternalModel,
    pub rate: TumblingRate,
    #[serde(default)]
    pub y0: State,
    pub n_particles: usize,
    #[serde(default)]
    pub tumble: TumbleMode,
    #[serde(default)]
    pub record_events: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_alpha: Option<f64>,
}

macro_rules! check_defaults {
    ($name:ident { $($field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }
    };
}

check_defaults!(DispersionCheck {
    n: usize = 64,
    length: f64 = 16.0,
    n_r: usize = 16,
    n_theta: usize = 64,
    width: f64 = 0.5,
    p: f64 = 1.5,
    times: Option<Vec<f64>> = None,
});

impl DispersionCheck {
    /// Given times, or ten points evenly spaced in `[0.5, L/4]`.
    pub fn time_grid(&self) -> Vec<f64> {
        self.times.clone().unwrap_or_else(|| {
            let hi = self.length / 4.0;
            (0..10).map(|i| 0.5 + (hi - 0.5) * i as f64 / 9.0).collect()
        })
    }
}

check_defaults!(SymmetrizationCheck {
    n: usize = 64,
    length: f64 = 8.0,
    n_v: usize = 16,
    steps: usize = 500,
    dt: f64 = 0.01,
    p_list: Vec<f64> = vec![1.5, 2.0, 4.0],
    profile: SymmetricProfile = SymmetricProfile { base: 1.0, slope: 0.5, chem_weight: 0.5 },
});

check_defaults!(EllipticCheck {
    n: usize = 32,
    length: f64 = 10.0,
    p: f64 = 2.0,
    samples: usize = 20,
});

check_defaults!(BesselCheck {
    r_min: f64 = 1e-6,
    points: usize = 50,
});

check_defaults!(GammaStirlingCheck {
    x_grid: Vec<f64> = vec![1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 500.0],
    beta_grid: Vec<f64> = vec![0.0, 0.5, 1.0, 2.0, 3.5, 7.0, 15.0],
    n_max: u64 = 1000,
});

check_defaults!(SeriesCheck {
    beta: f64 = 1.0,
    mu: f64 = 3.0,
    mass: f64 = 1.0,
    j_max: usize = 100_000,
});

check_defaults!(StrichartzCheck {
    tuple: StrichartzTuple = StrichartzTuple::critical(),
});

check_defaults!(SublinearCheck {
    alpha: f64 = 0.5,
    p: f64 = 2.0,
    q: Option<f64> = None,
    n_particles: usize = 20_000,
    n: usize = 16,
    length: f64 = 8.0,
    mass: f64 = 0.5,
    dt: f64 = 0.02,
    t_end: f64 = 5.0,
});

impl SublinearCheck {
    /// `q` as given, or from `1/q = α/3 + 1/p`.
    pub fn q(&self) -> f64 {
        self.q.unwrap_or(1.0 / (self.alpha / 3.0 + 1.0 / self.p))
    }
}

check_defaults!(MomentCheck {
    c: f64 = 0.2,
    alpha: f64 = 0.5,
    n_particles: usize = 100_000,
    dim: usize = 2,
    n: usize = 32,
    length: f64 = 8.0,
    mass: f64 = 1.0,
    lambda0: f64 = 1.0,
    lambda1: f64 = 0.05,
    dt: f64 = 0.01,
    t_end: f64 = 10.0,
});

check_defaults!(TumbleCheck {
    lambda: f64 = 2.0,
    events: usize = 100_000,
    n_particles: usize = 10_000,
    dim: usize = 2,
    bins: usize = 16,
    level: f64 = 0.01,
    dt: f64 = 0.05,
});

check_defaults!(ExcitationCheck {
    tau_e: f64 = 0.01,
    tau_a: f64 = 1.0,
    s0: f64 = 0.4,
    ds_small: f64 = 0.01,
    ds_large: f64 = 0.1,
    dt: f64 = 1e-3,
});

/// One verification check and its parameters; omitted parameters take the
/// defaults above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckSpec {
    Dispersion(DispersionCheck),
    Symmetrization(SymmetrizationCheck),
    EllipticSup(EllipticCheck),
    BesselLogBound(BesselCheck),
    GammaStirling(GammaStirlingCheck),
    SeriesConvergence(SeriesCheck),
    Strichartz(StrichartzCheck),
    SublinearClosure(SublinearCheck),
    MomentBound(MomentCheck),
    TumbleStatistics(TumbleCheck),
    ExcitationAdaptation(ExcitationCheck),
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::Dispersion(_) => "dispersion",
            CheckSpec::Symmetrization(_) => "symmetrization",
            CheckSpec::EllipticSup(_) => "elliptic_sup",
            CheckSpec::BesselLogBound(_) => "bessel_log_bound",
            CheckSpec::GammaStirling(_) => "gamma_stirling",
            CheckSpec::SeriesConvergence(_) => "series_convergence",
            CheckSpec::Strichartz(_) => "strichartz",
            CheckSpec::SublinearClosure(_) => "sublinear_closure",
            CheckSpec::MomentBound(_) => "moment_bound",
            CheckSpec::TumbleStatistics(_) => "tumble_statistics",
            CheckSpec::ExcitationAdaptation(_) => "excitation_adaptation",
        }
    }

    /// Every check with default parameters.
    pub fn all() -> Vec<CheckSpec> {
        vec![
            CheckSpec::Dispersion(Default::default()),
            CheckSpec::Symmetrization(Default::default()),
            CheckSpec::EllipticSup(Default::default()),
            CheckSpec::BesselLogBound(Default::default()),
            CheckSpec::GammaStirling(Default::default()),
            CheckSpec::SeriesConvergence(Default::default()),
            CheckSpec::Strichartz(Default::default()),
            CheckSpec::SublinearClosure(Default::default()),
            CheckSpec::MomentBound(Default::default()),
            CheckSpec::TumbleStatistics(Default::default()),
            CheckSpec::ExcitationAdaptation(Default::default()),
        ]
    }

    fn validate(&self, i: usize, errs: &mut Vec<String>) {
        let mut bad = |cond: bool, msg: &str| {
            if !cond {
                errs.push(format!("checks[{i}] ({}): {msg}", self.name()));
            }
        };
        match self {
            CheckSpec::Dispersion(c) => {
                bad(c.n >= 4 && c.length > 0.0, "needs N ≥ 4 and L > 0");
                bad(c.n_r > 0 && c.n_theta > 0 && c.width > 0.0, "needs n_r, n_theta and width positive");
                bad(c.p >= 1.0, "p must be ≥ 1");
            }
            CheckSpec::Symmetrization(c) => {
                bad(c.n >= 4 && c.length > 0.0 && c.n_v >= 2, "needs N ≥ 4, L > 0, n_v ≥ 2");
                bad(c.steps > 0 && c.dt > 0.0, "needs steps and dt positive");
                bad(c.p_list.iter().all(|p| *p >= 1.0), "exponents must be ≥ 1");
            }
            CheckSpec::EllipticSup(c) => {
                bad(c.n >= 4 && c.length > 0.0 && c.samples > 0, "needs N ≥ 4, L > 0, samples > 0");
            }
            CheckSpec::BesselLogBound(c) => {
                bad(c.r_min > 0.0 && c.r_min < 1.0 && c.points >= 2, "needs 0 < r_min < 1 and at least 2 points");
            }
            CheckSpec::GammaStirling(c) => {
                bad(c.x_grid.iter().all(|x| *x > 0.0), "x_grid must be positive");
                bad(c.beta_grid.iter().all(|b| *b >= 0.0), "beta_grid must be nonnegative");
                bad(c.n_max >= 2, "n_max must be ≥ 2");
            }
            CheckSpec::SeriesConvergence(c) => {
                bad(c.beta > 0.0 && c.beta <= 1.0, "beta must lie in (0, 1]");
                bad(c.mu > 2.0, "mu must exceed 2");
                bad(c.mass > 0.0 && c.j_max >= 4, "needs mass > 0 and j_max ≥ 4");
            }
            CheckSpec::Strichartz(_) => {}
            CheckSpec::SublinearClosure(c) => {
                bad(c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0, 1)");
                bad(c.p > 1.0 && c.p.is_finite(), "p must be finite and > 1");
                bad(c.n_particles > 0 && c.n >= 4 && c.length > 0.0 && c.mass > 0.0, "needs particles, grid and mass");
                bad(c.dt > 0.0 && c.t_end >= c.dt, "needs 0 < dt ≤ t_end");
            }
            CheckSpec::MomentBound(c) => {
                bad(c.c >= 0.0 && c.alpha >= 0.0, "needs C ≥ 0 and alpha ≥ 0");
                bad(matches!(c.dim, 2 | 3), "dim must be 2 or 3");
                bad(c.n_particles > 0 && c.n >= 4 && c.length > 0.0 && c.mass > 0.0, "needs particles, grid and mass");
                bad(c.lambda0 > 0.0 && c.lambda1 >= 0.0, "needs lambda0 > 0 and lambda1 ≥ 0");
                bad(c.dt > 0.0 && c.t_end >= c.dt, "needs 0 < dt ≤ t_end");
            }
            CheckSpec::TumbleStatistics(c) => {
                bad(c.lambda > 0.0 && c.dt > 0.0, "needs lambda and dt positive");
                bad(matches!(c.dim, 2 | 3), "dim must be 2 or 3");
                bad(c.events >= 5 * c.bins && c.bins >= 2 && c.n_particles > 0, "needs bins ≥ 2, events ≥ 5·bins, particles > 0");
                bad(c.level > 0.0 && c.level < 1.0, "level must lie in (0, 1)");
            }
            CheckSpec::ExcitationAdaptation(c) => {
                bad(c.tau_e > 0.0 && c.tau_a >= 10.0 * c.tau_e, "needs tau_a ≥ 10 tau_e > 0");
                bad(c.dt > 0.0 && c.dt <= c.tau_e / 10.0, "dt must lie in (0, tau_e/10]");
                bad(c.s0 >= 0.0 && c.ds_small > 0.0 && c.ds_large > c.ds_small, "needs S0 ≥ 0 and 0 < dS_small < dS_large");
            }
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<VelocitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub scatter: ScatterMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal: Option<InternalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    /// Mixed norms tracked per step (kinetic mode).
    #[serde(default)]
    pub norms: Vec<MixedNormSpec>,
    /// Exponents `p` of the tracked `‖ρ‖_p`.
    #[serde(default)]
    pub rho_p: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Lists every problem rather than stopping at the first. Includes the
    /// time-step preconditions evaluated on the initial data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.output.as_os_str().is_empty() {
            errs.push("output directory must not be empty".into());
        }
        for (i, p) in self.rho_p.iter().enumerate() {
            if !(*p >= 1.0) {
                errs.push(format!("rho_p[{i}] must be ≥ 1, got {p}"));
            }
        }
        match self.mode {
            Mode::Verify => {
                if self.checks.is_empty() {
                    errs.push("verify mode needs a nonempty checks list".into());
                }
                for (i, c) in self.checks.iter().enumerate() {
                    c.validate(i, &mut errs);
                }
            }
            Mode::Kinetic | Mode::Particles => self.validate_simulation(&mut errs),
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn validate_simulation(&self, errs: &mut Vec<String>) {
        let mode = if self.mode == Mode::Kinetic { "kinetic" } else { "particles" };
        let grid = match &self.grid {
            None => {
                errs.push(format!("{mode} mode needs a grid section"));
                None
            }
            Some(g) => match g.build() {
                Ok(grid) => Some(grid),
                Err(e) => {
                    errs.push(format!("grid: {e}"));
                    None
                }
            },
        };
        if let Some(g) = grid {
            if !matches!(g.dim(), 2 | 3) {
                errs.push(format!("grid.dim must be 2 or 3, got {}", g.dim()));
            }
        }
        let time = self.time;
        match time {
            None => errs.push(format!("{mode} mode needs a time section")),
            Some(t) => {
                if !(t.dt > 0.0 && t.dt.is_finite()) {
                    errs.push(format!("time.dt must be positive, got {}", t.dt));
                }
                if !(t.t_end > 0.0 && t.t_end.is_finite()) {
                    errs.push(format!("time.t_end must be positive, got {}", t.t_end));
                } else if t.dt > t.t_end {
                    errs.push(format!("time.dt = {} exceeds t_end = {}", t.dt, t.t_end));
                }
            }
        }
        match &self.initial {
            None => errs.push(format!("{mode} mode needs an initial section")),
            Some(ic) => ic.validate(errs),
        }
        if !self.checks.is_empty() {
            errs.push("checks are only read in verify mode".into());
        }
        if self.mode == Mode::Kinetic {
            for (i, n) in self.norms.iter().enumerate() {
                if let Err(e) = n.validate() {
                    errs.push(format!("norms[{i}]: {e}"));
                }
            }
            if self.internal.is_some() {
                errs.push("internal section is only read in particles mode".into());
            }
            let vel = match (&self.velocity, grid) {
                (None, _) => {
                    errs.push("kinetic mode needs a velocity section".into());
                    None
                }
                (Some(v), Some(g)) => match v.build(g.dim()) {
                    Ok(set) => Some(set),
                    Err(e) => {
                        errs.push(format!("velocity: {e}"));
                        None
                    }
                },
                _ => None,
            };
            let kernel = match &self.kernel {
                None => {
                    errs.push("kinetic mode needs a kernel section".into());
                    None
                }
                Some(k) => match k.validate(false) {
                    Ok(()) => Some(k),
                    Err(e) => {
                        errs.push(format!("kernel: {e}"));
                        None
                    }
                },
            };
            // Loss-rate CFL on the initial data.
            if let (Some(g), Some(vel), Some(k), Some(t), Some(ic)) = (grid, vel, kernel, time, &self.initial) {
                if self.scatter == ScatterMode::Explicit && errs.is_empty() {
                    let rho = ic.density(&g);
                    match ChemState::from_density(&rho, 0.0, None) {
                        Ok(chem) => match k.evaluator(&chem) {
                            Ok(ev) => {
                                let rate = ev.bound() * vel.measure();
                                if t.dt * rate > crate::kinetic::CFL_LIMIT {
                                    errs.push(format!(
                                        "time.dt = {} violates the scattering CFL: dt·(max loss rate {rate:.4}) > {}",
                                        t.dt,
                                        crate::kinetic::CFL_LIMIT
                                    ));
                                }
                            }
                            // ∂ₜS is not known yet; ψ ≤ 1 bounds the rate by T₀ + 1.
                            Err(crate::kernels::KernelError::MissingField { .. }) => {
                                if let KernelSpec::DirectionalDerivative { t0, .. } = k {
                                    let rate = (t0 + 1.0) * vel.measure();
                                    if t.dt * rate > crate::kinetic::CFL_LIMIT {
                                        errs.push(format!(
                                            "time.dt = {} violates the scattering CFL: dt·(max loss rate {rate:.4}) > {}",
                                            t.dt,
                                            crate::kinetic::CFL_LIMIT
                                        ));
                                    }
                                }
                            }
                            Err(e) => errs.push(format!("kernel: {e}")),
                        },
                        Err(e) => errs.push(format!("initial: {e}")),
                    }
                }
            }
        } else {
            if self.velocity.is_some() || self.kernel.is_some() {
                errs.push("velocity and kernel sections are only read in kinetic mode".into());
            }
            match &self.internal {
                None => errs.push("particles mode needs an internal section".into()),
                Some(ic) => {
                    if let Err(e) = ic.model.validate() {
                        errs.push(format!("internal.model: {e}"));
                    }
                    if let Err(e) = ic.rate.validate() {
                        errs.push(format!("internal.rate: {e}"));
                    }
                    if ic.n_particles == 0 {
                        errs.push("internal.n_particles must be positive".into());
                    }
                    if !ic.y0.iter().all(|v| v.is_finite()) {
                        errs.push("internal.y0 must be finite".into());
                    }
                    if let Some(t) = time {
                        let max = ic.model.max_dt();
                        if t.dt > max {
                            errs.push(format!("time.dt = {} exceeds the internal-dynamics limit {max}", t.dt));
                        }
                        let rate = ic.rate.eval(ic.y0);
                        if ic.tumble == TumbleMode::Bernoulli && t.dt * rate > RATE_CFL {
                            errs.push(format!("time.dt = {} violates dt·λ(y0) = {} ≤ {RATE_CFL}", t.dt, t.dt * rate));
                        }
                    }
                    if let Some(a) = ic.source_alpha {
                        if !(a >= 0.0) {
                            errs.push(format!("internal.source_alpha must be nonnegative, got {a}"));
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinetic_json() -> &'static str {
        r#"{
            "mode": "kinetic",
            "grid": {"dim": 2, "N": 32, "L": 8.0},
            "velocity": {"kind": "sphere", "n_v": 16},
            "kernel": {"kind": "constant", "c0": 0.0},
            "initial": {"preset": "gaussian-bump", "M": 2.0, "width": 1.0, "floor": 0.1},
            "time": {"dt": 0.05, "t_end": 1.0},
            "norms": [{"p": 2, "q": 1}, {"p": "inf", "q": 1}],
            "rho_p": [2],
            "seed": 7,
            "output": "out/k"
        }"#
    }

    #[test]
    fn roundtrip_is_a_fixed_point() {
        let c = RunConfig::from_json(kinetic_json()).unwrap();
        c.validate().unwrap();
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
        let v = RunConfig {
            mode: Mode::Verify,
            grid: None,
            velocity: None,
            kernel: None,
            scatter: ScatterMode::default(),
            internal: None,
            initial: None,
            time: None,
            norms: vec![],
            rho_p: vec![],
            seed: 1,
            output: "o".into(),
            snapshot_every: 0,
            checks: CheckSpec::all(),
        };
        assert_eq!(RunConfig::from_json(&v.to_json()).unwrap(), v);
    }

    #[test]
    fn errors_are_listed_exhaustively() {
        let text = r#"{
            "mode": "particles",
            "grid": {"dim": 2, "N": 1, "L": -1.0},
            "initial": {"preset": "uniform", "M": 0.0, "width": -1},
            "time": {"dt": -0.1, "t_end": 1.0}
        }"#;
        let err = RunConfig::from_json(text).unwrap().validate().unwrap_err();
        let ConfigError::Invalid(list) = err else { panic!() };
        assert!(list.len() >= 5, "{list:?}");
        assert!(list.iter().any(|e| e.starts_with("grid")));
        assert!(list.iter().any(|e| e.contains("initial.M")));
        assert!(list.iter().any(|e| e.contains("internal section")));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = kinetic_json().replace("\"seed\"", "\"sede\"");
        assert!(matches!(RunConfig::from_json(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn cfl_is_checked_before_running() {
        let text = kinetic_json().replace("\"c0\": 0.0", "\"c0\": 10.0");
        let err = RunConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("CFL"), "{err}");
        let text = kinetic_json().replace("{\"kind\": \"constant\", \"c0\": 0.0}", "{\"kind\": \"directional_derivative\", \"t0\": 10.0}");
        assert!(text.contains("directional_derivative"));
        let err = RunConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("CFL"), "{err}");
    }

    #[test]
    fn presets_carry_the_requested_mass() {
        let g = PeriodicGrid::new(2, 32, 8.0).unwrap();
        for preset in [Preset::GaussianBump, Preset::TwoBumps, Preset::Uniform] {
            let ic = InitialCondition { preset, mass: 3.0, width: 0.7, amplitude: 0.5, floor: 0.0, anisotropy: 0.2 };
            assert!((ic.density(&g).integral() - 3.0).abs() < 1e-12);
            let f = ic.kinetic(&g, &VelocitySpec::Sphere { n_v: 12 }).unwrap();
            assert!((f.mass() - 3.0).abs() < 1e-12);
            let e = ic.particles(&g, 500, [0.0; 2], 1).unwrap();
            assert_eq!(e.len(), 500);
            assert!((e.weight() * 500.0 - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn check_names_are_unique_and_default_fill_works() {
        let all = CheckSpec::all();
        let mut names: Vec<_> = all.iter().map(|c| c.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        let c: CheckSpec = serde_json::from_str(r#"{"check": "series_convergence", "mass": 2.5}"#).unwrap();
        let CheckSpec::SeriesConvergence(s) = c else { panic!() };
        assert_eq!((s.mass, s.mu, s.j_max), (2.5, 3.0, 100_000));
    }
}
