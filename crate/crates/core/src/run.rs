//! Orchestration: executes a validated [`RunConfig`], writes artifacts and a
//! hashed manifest, and renders summaries of finished run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Report, Verdict};
use crate::config::{CheckSpec, ConfigError, InitialCondition, Mode, Preset, RunConfig};
use crate::diagnostics::{DiagnosticsError, DiagnosticsSeries};
use crate::fields::{write_field, write_raw, FieldError, PeriodicGrid, ScalarField};
use crate::internal::{HSpec, InternalModel, TumblingRate};
use crate::kernels::KernelSpec;
use crate::kinetic::{run_kinetic, KineticDensity, KineticError, KineticOptions, VelocitySet};
use crate::particles::{deposit_density, run_coupled, write_checkpoint, ParticleError, ParticleOptions, TumbleMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no manifest in {0}")]
    MissingManifest(PathBuf),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    Failed,
    VerificationFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn inventory(dir: &Path, files: &[PathBuf]) -> std::io::Result<Vec<FileEntry>> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
        out.push(FileEntry {
            path: rel,
            sha256: sha256_file(f)?,
            bytes: fs::metadata(f)?.len(),
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Artifacts produced by a mode, and how it ended.
struct ModeResult {
    files: Vec<PathBuf>,
    status: RunStatus,
    message: Option<String>,
}

/// Validates `config`, executes its mode in `out` (or the configured
/// output directory) and writes `manifest.json` last.
///
/// Configuration errors return `Err` before anything is written. Numerical
/// aborts return `Ok` with exit code 3, a FAILED manifest and the last good
/// state on disk.
pub fn run_config(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output.clone());
    execute(config, dir)
}

fn execute(config: &RunConfig, dir: PathBuf) -> Result<RunOutcome, RunError> {
    fs::create_dir_all(&dir)?;
    let started = now();
    let result = match config.mode {
        Mode::Kinetic => run_kinetic_mode(config, &dir)?,
        Mode::Particles => run_particle_mode(config, &dir)?,
        Mode::Verify => run_verify_mode(config, &dir)?,
    };
    let manifest = RunManifest {
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        started_unix: started,
        finished_unix: now(),
        status: result.status,
        message: result.message,
        files: inventory(&dir, &result.files)?,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let exit_code = match manifest.status {
        RunStatus::Completed => EXIT_OK,
        RunStatus::Failed => EXIT_NUMERICAL,
        RunStatus::VerificationFailed => EXIT_VERIFICATION,
    };
    Ok(RunOutcome { exit_code, dir, manifest })
}

fn write_kinetic_state(dir: &Path, name: &str, f: &KineticDensity) -> Result<Vec<PathBuf>, RunError> {
    let raw = dir.join(format!("{name}_f.bin"));
    write_raw(&raw, f.values())?;
    let mut files = vec![raw];
    files.extend(write_field(&dir.join(format!("{name}_rho")), &f.density(), f.time, "rho")?);
    Ok(files)
}

fn run_kinetic_mode(config: &RunConfig, dir: &Path) -> Result<ModeResult, RunError> {
    let grid = config.grid.expect("validated").build()?;
    let ic = config.initial.expect("validated");
    let vel = config.velocity.expect("validated");
    let kernel = config.kernel.clone().expect("validated");
    let time = config.time.expect("validated");
    let f0 = ic.kinetic(&grid, &vel).map_err(|e| ConfigError::Invalid(vec![e]))?;
    let opts = KineticOptions {
        dt: time.dt,
        t_end: time.t_end,
        scatter: config.scatter,
        norms: config.norms.clone(),
        rho_p: config.rho_p.clone(),
        s_r: 2.0,
        snapshot_every: config.snapshot_every,
    };
    let mut files = Vec::new();
    match run_kinetic(&f0, &kernel, &opts) {
        Ok(run) => {
            files.extend(run.diagnostics.write_csv(&dir.join("diagnostics"))?);
            for (step, snap) in &run.snapshots {
                files.extend(write_kinetic_state(dir, &format!("snapshot_{step:06}"), snap)?);
            }
            files.extend(write_kinetic_state(dir, "final", &run.state)?);
            files.extend(write_field(&dir.join("final_S"), &run.chem.s, run.chem.time, "S")?);
            Ok(ModeResult {
                files,
                status: RunStatus::Completed,
                message: None,
            })
        }
        Err(KineticError::Aborted(abort)) => {
            files.extend(abort.diagnostics.write_csv(&dir.join("diagnostics"))?);
            files.extend(write_kinetic_state(dir, "last_good", &abort.last_good)?);
            Ok(ModeResult {
                files,
                status: RunStatus::Failed,
                message: Some(format!("aborted at step {} (t = {}): {}", abort.step, abort.time, abort.reason)),
            })
        }
        Err(e) => Err(ConfigError::Invalid(vec![e.to_string()]).into()),
    }
}

fn run_particle_mode(config: &RunConfig, dir: &Path) -> Result<ModeResult, RunError> {
    let grid = config.grid.expect("validated").build()?;
    let ic = config.initial.expect("validated");
    let internal = config.internal.clone().expect("validated");
    let time = config.time.expect("validated");
    let ens = ic
        .particles(&grid, internal.n_particles, internal.y0, config.seed)
        .map_err(|e| ConfigError::Invalid(vec![e]))?;
    let opts = ParticleOptions {
        dt: time.dt,
        t_end: time.t_end,
        tumble: internal.tumble,
        rho_p: config.rho_p.clone(),
        source_alpha: internal.source_alpha,
        record_events: internal.record_events,
        snapshot_every: config.snapshot_every,
    };
    let mut files = Vec::new();
    match run_coupled(&ens, &internal.model, &internal.rate, &opts) {
        Ok(run) => {
            files.extend(run.diagnostics.write_csv(&dir.join("diagnostics"))?);
            for snap in &run.snapshots {
                files.extend(write_checkpoint(snap, &dir.join(format!("snapshot_{:06}", snap.step)))?);
            }
            files.extend(write_checkpoint(&run.ensemble, &dir.join("final_particles"))?);
            files.extend(write_field(&dir.join("final_rho"), &deposit_density(&run.ensemble, &grid), run.ensemble.time, "rho")?);
            if internal.record_events {
                let path = dir.join("tumbles.csv");
                let mut w = csv::Writer::from_path(&path).map_err(|e| RunError::Io(e.into()))?;
                w.write_record(["particle", "time", "interval", "v0", "v1", "v2"]).map_err(|e| RunError::Io(e.into()))?;
                for e in &run.events {
                    w.write_record([
                        e.particle.to_string(),
                        format!("{:?}", e.time),
                        format!("{:?}", e.interval),
                        format!("{:?}", e.velocity[0]),
                        format!("{:?}", e.velocity[1]),
                        format!("{:?}", e.velocity[2]),
                    ])
                    .map_err(|e| RunError::Io(e.into()))?;
                }
                w.flush()?;
                files.push(path);
            }
            Ok(ModeResult {
                files,
                status: RunStatus::Completed,
                message: None,
            })
        }
        Err(ParticleError::Aborted(abort)) => {
            files.extend(abort.diagnostics.write_csv(&dir.join("diagnostics"))?);
            files.extend(write_checkpoint(&abort.last_good, &dir.join("last_good"))?);
            Ok(ModeResult {
                files,
                status: RunStatus::Failed,
                message: Some(format!("aborted at step {} (t = {}): {}", abort.step, abort.time, abort.reason)),
            })
        }
        Err(e) => Err(ConfigError::Invalid(vec![e.to_string()]).into()),
    }
}

fn run_verify_mode(config: &RunConfig, dir: &Path) -> Result<ModeResult, RunError> {
    let results: Vec<(String, Result<Report, AnalysisError>)> = config
        .checks
        .par_iter()
        .map(|c| (c.name().to_string(), run_check(c, config.seed)))
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    let mut files = Vec::new();
    let check_dir = dir.join("checks");
    fs::create_dir_all(&check_dir)?;
    for (i, (name, res)) in results.into_iter().enumerate() {
        let report = res.unwrap_or_else(|e| Report {
            check: name.clone(),
            verdict: Verdict::Fail,
            items: vec![],
            warnings: vec![format!("check could not run: {e}")],
        });
        let path = check_dir.join(format!("{i:02}_{name}.csv"));
        report.write_csv(&path)?;
        files.push(path);
        reports.push(report);
    }
    let path = dir.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&reports)?)?;
    files.push(path);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.check.as_str()).collect();
    Ok(ModeResult {
        files,
        status: if failed.is_empty() { RunStatus::Completed } else { RunStatus::VerificationFailed },
        message: (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", "))),
    })
}

fn periodic_bump(grid: &PeriodicGrid, center: [f64; 3], width: f64) -> impl Fn([f64; 3]) -> f64 {
    let l = grid.length();
    let dim = grid.dim();
    move |x| {
        let wrap = |d: f64| d - l * (d / l).round();
        let r2: f64 = (0..dim).map(|a| wrap(x[a] - center[a]).powi(2)).sum();
        (-r2 / (2.0 * width * width)).exp()
    }
}

/// Smooth positive phase-space data with a few random low Fourier modes.
fn random_smooth_density(grid: PeriodicGrid, vel: VelocitySet, rng: &mut impl Rng) -> Result<KineticDensity, KineticError> {
    let k0 = 2.0 * std::f64::consts::PI / grid.length();
    let modes: Vec<([f64; 3], f64, f64, [f64; 2])> = (0..4)
        .map(|_| {
            let k = [rng.random_range(-2..=2) as f64 * k0, rng.random_range(-2..=2) as f64 * k0, 0.0];
            (k, rng.random::<f64>() * std::f64::consts::TAU, rng.random_range(0.05..0.2), [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)])
        })
        .collect();
    KineticDensity::from_fn(grid, vel, |x, v| {
        let mut f = 1.0;
        for (k, phase, amp, c) in &modes {
            f += amp * (k[0] * x[0] + k[1] * x[1] + phase).cos() * (1.0 + c[0] * v[0] + c[1] * v[1]) / 1.8;
        }
        f
    })
}

/// Runs one verification check. Stochastic inputs are drawn from `seed`.
pub fn run_check(spec: &CheckSpec, seed: u64) -> Result<Report, AnalysisError> {
    let field = |e: FieldError| AnalysisError::Field(e);
    let other = |e: String| AnalysisError::Refused(e);
    match spec {
        CheckSpec::Dispersion(c) => {
            let grid = PeriodicGrid::new(2, c.n, c.length).map_err(field)?;
            let vel = VelocitySet::disk(c.n_r, c.n_theta).map_err(|e| other(e.to_string()))?;
            let bump = periodic_bump(&grid, [c.length / 2.0; 3], c.width);
            let f0 = KineticDensity::from_fn(grid, vel, |x, _| bump(x)).map_err(|e| other(e.to_string()))?;
            analysis::verify_dispersion(&f0, c.p, &c.time_grid())
        }
        CheckSpec::Symmetrization(c) => {
            let grid = PeriodicGrid::new(2, c.n, c.length).map_err(field)?;
            let vel = VelocitySet::circle(c.n_v).map_err(|e| other(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f0 = random_smooth_density(grid, vel, &mut rng).map_err(|e| other(e.to_string()))?;
            let kernel = KernelSpec::Symmetric { g: c.profile };
            let mut opts = KineticOptions::new(c.dt, c.dt * c.steps as f64);
            opts.norms = c.p_list.iter().map(|&p| analysis::MixedNormSpec::flat(p)).collect();
            let run = run_kinetic(&f0, &kernel, &opts).map_err(|e| other(e.to_string()))?;
            analysis::verify_symmetrization(&run.diagnostics, &kernel, &c.p_list)
        }
        CheckSpec::EllipticSup(c) => {
            let grid = PeriodicGrid::new(3, c.n, c.length).map_err(field)?;
            let mut items = Vec::new();
            for sample in 0..c.samples {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(sample as u64);
                let rho = random_density_3d(&grid, &mut rng);
                let mut r = analysis::verify_elliptic_sup(&rho, c.p)?;
                for it in &mut r.items {
                    it.inputs["sample"] = serde_json::json!(sample);
                }
                items.extend(r.items);
            }
            Ok(Report::from_items("elliptic_sup", items, vec![]))
        }
        CheckSpec::BesselLogBound(c) => {
            let lo = c.r_min.ln();
            let grid: Vec<f64> = (0..c.points)
                .map(|i| if i + 1 == c.points { 1.0 } else { (lo * (1.0 - i as f64 / (c.points - 1) as f64)).exp() })
                .collect();
            analysis::bessel_log_bound_table(&grid)
        }
        CheckSpec::GammaStirling(c) => analysis::gamma_stirling_checks(&c.x_grid, &c.beta_grid, c.n_max),
        CheckSpec::SeriesConvergence(c) => analysis::series_convergence_probe(c.beta, c.mu, c.mass, c.j_max),
        CheckSpec::Strichartz(c) => Ok(analysis::strichartz_exponent_check(&c.tuple)),
        CheckSpec::SublinearClosure(c) => {
            let grid = PeriodicGrid::new(3, c.n, c.length).map_err(field)?;
            let ic = InitialCondition {
                preset: Preset::GaussianBump,
                mass: c.mass,
                width: c.length / 8.0,
                amplitude: 1.0,
                floor: 0.05,
                anisotropy: 0.0,
            };
            let ens = ic.particles(&grid, c.n_particles, [0.0; 2], seed).map_err(other)?;
            let mut opts = ParticleOptions::new(c.dt, c.t_end);
            opts.tumble = TumbleMode::Exact;
            opts.rho_p = vec![c.p];
            let run = run_coupled(&ens, &InternalModel::Inert, &TumblingRate::constant(1.0), &opts).map_err(|e| other(e.to_string()))?;
            analysis::verify_sublinear_closure(&run.diagnostics, c.alpha, c.p, c.q())
        }
        CheckSpec::MomentBound(c) => {
            let grid = PeriodicGrid::new(c.dim, c.n, c.length).map_err(field)?;
            let ic = InitialCondition {
                preset: Preset::GaussianBump,
                mass: c.mass,
                width: c.length / 8.0,
                amplitude: 1.0,
                floor: 0.1,
                anisotropy: 0.0,
            };
            let ens = ic.particles(&grid, c.n_particles, [0.0; 2], seed).map_err(other)?;
            let model = InternalModel::RadialGrowth { rate: c.c, alpha: c.alpha };
            let rate = TumblingRate {
                lambda0: c.lambda0,
                lambda1: c.lambda1,
                component: 0,
            };
            let mut opts = ParticleOptions::new(c.dt, c.t_end);
            opts.tumble = TumbleMode::Exact;
            opts.source_alpha = Some(c.alpha);
            let run = run_coupled(&ens, &model, &rate, &opts).map_err(|e| other(e.to_string()))?;
            analysis::verify_moment_bound(&run.diagnostics, c.c, c.alpha)
        }
        CheckSpec::TumbleStatistics(c) => {
            let grid = PeriodicGrid::new(c.dim, 16, 8.0).map_err(field)?;
            let ens = crate::particles::ParticleEnsemble::uniform(grid, c.n_particles, 1.0, [0.0; 2], seed).map_err(|e| other(e.to_string()))?;
            // A fixed number of complete intervals per particle, counted from
            // its first tumble, so the sample is not biased toward short
            // intervals by a common cutoff time.
            let per_particle = c.events.div_ceil(c.n_particles);
            let k = (per_particle + 1) as f64;
            let horizon = (k + 8.0 * k.sqrt() + 10.0) / c.lambda;
            let mut opts = ParticleOptions::new(c.dt, (horizon / c.dt).ceil() * c.dt);
            opts.tumble = TumbleMode::Exact;
            opts.record_events = true;
            let run = run_coupled(&ens, &InternalModel::Inert, &TumblingRate::constant(c.lambda), &opts).map_err(|e| other(e.to_string()))?;
            let mut by_particle = vec![Vec::new(); c.n_particles];
            for e in run.events {
                by_particle[e.particle].push(e);
            }
            let mut events = Vec::with_capacity(per_particle * c.n_particles);
            for mut list in by_particle {
                list.sort_by(|a, b| a.time.total_cmp(&b.time));
                let complete: Vec<_> = list.into_iter().filter(|e| !e.interval.is_nan()).take(per_particle).collect();
                if complete.len() < per_particle {
                    return Err(other(format!("a particle recorded only {} intervals, {per_particle} needed", complete.len())));
                }
                events.extend(complete);
            }
            events.truncate(c.events);
            analysis::verify_tumble_statistics(&events, c.lambda, c.dim, c.bins, c.level)
        }
        CheckSpec::ExcitationAdaptation(c) => {
            let model = InternalModel::Fhn {
                tau_e: c.tau_e,
                tau_a: c.tau_a,
                q: [0.0, 0.2, -1.2, 1.0],
                h: HSpec::Saturating,
            };
            analysis::verify_excitation_adaptation(&model, c.s0, c.ds_small, c.ds_large, c.dt)
        }
    }
}

/// One to four Gaussian bumps with random centers, widths and heights on a
/// small random background.
fn random_density_3d(grid: &PeriodicGrid, rng: &mut impl Rng) -> ScalarField {
    let l = grid.length();
    let h = grid.spacing();
    let n_bumps = rng.random_range(1..=4);
    let bumps: Vec<([f64; 3], f64, f64)> = (0..n_bumps)
        .map(|_| {
            let c = [rng.random::<f64>() * l, rng.random::<f64>() * l, rng.random::<f64>() * l];
            (c, rng.random_range(2.0 * h..4.0 * h), rng.random_range(0.5..5.0))
        })
        .collect();
    let background = rng.random_range(0.0..0.2);
    let profiles: Vec<_> = bumps.iter().map(|(c, w, a)| (periodic_bump(grid, *c, *w), *a)).collect();
    ScalarField::from_fn(*grid, |x| background + profiles.iter().map(|(b, a)| a * b(x)).sum::<f64>())
}

/// Outcome of re-reading a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub failures: usize,
    /// Files whose hash no longer matches the manifest, or that are gone.
    pub hash_mismatches: Vec<String>,
    pub text: String,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.hash_mismatches.is_empty() && self.failures == 0 && self.status == RunStatus::Completed {
            EXIT_OK
        } else if self.status == RunStatus::Failed {
            EXIT_NUMERICAL
        } else {
            EXIT_VERIFICATION
        }
    }
}

/// Re-hashes every file in the manifest and renders the pass/fail table,
/// the norm time series and the ratio tables into `<dir>/summary/`.
pub fn emit_report(dir: &Path) -> Result<RunSummary, RunError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(RunError::MissingManifest(dir.to_path_buf()));
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut mismatches = Vec::new();
    for entry in &manifest.files {
        match sha256_file(&dir.join(&entry.path)) {
            Ok(h) if h == entry.sha256 => {}
            Ok(_) => mismatches.push(entry.path.clone()),
            Err(_) => mismatches.push(format!("{} (missing)", entry.path)),
        }
    }
    let out = dir.join("summary");
    fs::create_dir_all(&out)?;
    let mut text = String::new();
    text.push_str(&format!("run status: {:?}\nmode: {:?}\nthreads: {}\n", manifest.status, manifest.config.mode, manifest.threads));
    if let Some(m) = &manifest.message {
        text.push_str(&format!("message: {m}\n"));
    }
    if mismatches.is_empty() {
        text.push_str(&format!("hashes: all {} files match\n", manifest.files.len()));
    } else {
        text.push_str("hashes: MISMATCH\n");
        for m in &mismatches {
            text.push_str(&format!("  {m}\n"));
        }
    }
    let mut failures = 0;
    let report_path = dir.join(REPORT_FILE);
    if report_path.exists() {
        let reports: Vec<Report> = serde_json::from_str(&fs::read_to_string(&report_path)?)?;
        text.push_str("\ncheck                      verdict        items  failed\n");
        let mut w = csv::Writer::from_path(out.join("ratios.csv")).map_err(|e| RunError::Io(e.into()))?;
        w.write_record(["report", "item", "lhs", "rhs", "ratio", "verdict", "tolerance"]).map_err(|e| RunError::Io(e.into()))?;
        for r in &reports {
            let failed = r.items.iter().filter(|i| i.verdict.is_failure()).count();
            if !r.passed() {
                failures += 1;
            }
            text.push_str(&format!("{:<26} {:<14} {:>5}  {:>6}\n", r.check, r.verdict.to_string(), r.items.len(), failed));
            for it in &r.items {
                w.write_record([
                    r.check.clone(),
                    it.check.clone(),
                    format!("{:?}", it.lhs),
                    format!("{:?}", it.rhs),
                    format!("{:?}", it.ratio),
                    it.verdict.to_string(),
                    format!("{:?}", it.tolerance),
                ])
                .map_err(|e| RunError::Io(e.into()))?;
            }
        }
        w.flush()?;
        text.push_str(&format!("{failures} failing check(s)\n"));
    }
    let diag = if dir.join("diagnostics.csv").exists() {
        match DiagnosticsSeries::read_csv(&dir.join("diagnostics")) {
            Ok(d) => Some(d),
            Err(e) => {
                text.push_str(&format!("diagnostics unreadable: {e}\n"));
                None
            }
        }
    } else {
        None
    };
    if let Some(diag) = diag {
        let keep: Vec<usize> = diag
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name == "t" || c.name.starts_with("f_L") || c.name.starts_with("rho_L") || c.name == "mass")
            .map(|(i, _)| i)
            .collect();
        let symmetric = manifest.config.kernel.as_ref().is_some_and(|k| k.is_symmetric());
        let f_cols: Vec<usize> = keep.iter().copied().filter(|&i| diag.columns[i].name.starts_with("f_L")).collect();
        // For symmetric kernels each f-norm gets a running flag: 1 while the
        // series has not increased by more than the tolerance.
        let flagged: &[usize] = if symmetric { &f_cols } else { &[] };
        let mut w = csv::Writer::from_path(out.join("norms.csv")).map_err(|e| RunError::Io(e.into()))?;
        let mut header: Vec<String> = keep.iter().map(|&i| diag.columns[i].name.clone()).collect();
        header.extend(flagged.iter().map(|&i| format!("{}_nonincreasing", diag.columns[i].name)));
        w.write_record(&header).map_err(|e| RunError::Io(e.into()))?;
        let mut still = vec![true; flagged.len()];
        for (k, row) in diag.rows.iter().enumerate() {
            let mut rec: Vec<String> = keep.iter().map(|&i| format!("{:?}", row[i])).collect();
            for (s, &i) in still.iter_mut().zip(flagged) {
                if k > 0 && row[i] > diag.rows[k - 1][i] + analysis::MONOTONE_TOL {
                    *s = false;
                }
                rec.push(if *s { "1".into() } else { "0".into() });
            }
            w.write_record(&rec).map_err(|e| RunError::Io(e.into()))?;
        }
        w.flush()?;
        let mut monotone = BTreeMap::new();
        for &i in &f_cols {
            let nonincreasing = diag.rows.windows(2).all(|w| w[1][i] <= w[0][i] + analysis::MONOTONE_TOL);
            monotone.insert(diag.columns[i].name.clone(), nonincreasing);
        }
        if !monotone.is_empty() {
            text.push_str(&format!("\nnorm columns (kernel symmetric: {symmetric}):\n"));
            for (name, ok) in &monotone {
                text.push_str(&format!("  {name:<20} {}\n", if *ok { "nonincreasing" } else { "increases" }));
                if symmetric && !ok {
                    failures += 1;
                }
            }
        }
        if let Some((&m0, mass)) = diag.column("mass").ok().as_ref().and_then(|m| m.first().map(|f| (f, m))) {
            let drift = mass.iter().map(|m| ((m - m0) / m0).abs()).fold(0.0, f64::max);
            text.push_str(&format!("mass drift (relative): {drift:e}\n"));
        }
    }
    fs::write(out.join("summary.txt"), &text)?;
    Ok(RunSummary {
        status: manifest.status,
        failures,
        hash_mismatches: mismatches,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinetic_config(out: &Path) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
                "mode": "kinetic",
                "grid": {{"dim": 2, "N": 16, "L": 4.0}},
                "velocity": {{"kind": "sphere", "n_v": 8}},
                "kernel": {{"kind": "symmetric", "g": {{"base": 1.0, "slope": 0.2, "chem_weight": 0.1}}}},
                "initial": {{"preset": "two-bumps", "M": 1.5, "width": 0.6, "floor": 0.2}},
                "time": {{"dt": 0.02, "t_end": 0.2}},
                "norms": [{{"p": 2, "q": 2}}],
                "snapshot_every": 5,
                "output": "{}"
            }}"#,
            out.display()
        ))
        .unwrap()
    }

    #[test]
    fn kinetic_run_writes_hashed_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = kinetic_config(tmp.path());
        let out = run_config(&cfg, None).unwrap();
        assert_eq!(out.exit_code, EXIT_OK);
        assert!(out.manifest.files.iter().any(|f| f.path == "diagnostics.csv"));
        assert!(out.manifest.files.iter().any(|f| f.path == "snapshot_000005_f.bin"));
        let summary = emit_report(tmp.path()).unwrap();
        assert!(summary.hash_mismatches.is_empty());
        assert_eq!(summary.exit_code(), EXIT_OK, "{}", summary.text);
        let norms = fs::read_to_string(tmp.path().join("summary/norms.csv")).unwrap();
        let header = norms.lines().next().unwrap();
        assert!(header.contains("f_L2x_L2v_nonincreasing"), "{header}");
        assert!(norms.lines().skip(1).all(|l| l.ends_with(",1")));

        // Tampering is caught.
        let snap = tmp.path().join("final_f.bin");
        let mut bytes = fs::read(&snap).unwrap();
        bytes[3] ^= 1;
        fs::write(&snap, bytes).unwrap();
        let summary = emit_report(tmp.path()).unwrap();
        assert_eq!(summary.hash_mismatches, vec!["final_f.bin".to_string()]);
        assert_eq!(summary.exit_code(), EXIT_VERIFICATION);
    }

    #[test]
    fn numerical_abort_keeps_last_good_state() {
        // Skips validation to reach the runtime CFL guard.
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = kinetic_config(tmp.path());
        cfg.kernel = Some(KernelSpec::Constant { c0: 10.0 });
        assert!(cfg.validate().is_err());
        let out = execute(&cfg, tmp.path().to_path_buf()).unwrap();
        assert_eq!(out.exit_code, EXIT_NUMERICAL);
        assert_eq!(out.manifest.status, RunStatus::Failed);
        assert!(out.manifest.message.as_deref().unwrap().contains("CFL"));
        assert!(out.manifest.files.iter().any(|f| f.path == "last_good_f.bin"));
        let summary = emit_report(tmp.path()).unwrap();
        assert_eq!(summary.exit_code(), EXIT_NUMERICAL);
    }

    #[test]
    fn constant_zero_kernel_keeps_mass() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = kinetic_config(tmp.path());
        cfg.kernel = Some(KernelSpec::Constant { c0: 0.0 });
        let out = run_config(&cfg, None).unwrap();
        assert_eq!(out.exit_code, EXIT_OK);
        let diag = DiagnosticsSeries::read_csv(&tmp.path().join("diagnostics")).unwrap();
        let mass = diag.column("mass").unwrap();
        assert!(mass.iter().all(|m| ((m - mass[0]) / mass[0]).abs() < 1e-13));
    }

    #[test]
    fn same_seed_gives_identical_diagnostics() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let text = |out: &Path| {
            format!(
                r#"{{
                    "mode": "particles",
                    "grid": {{"dim": 2, "N": 16, "L": 4.0}},
                    "internal": {{"model": {{"kind": "linear_exc_adapt", "tau_e": 0.1, "tau_a": 1.0}},
                                  "rate": {{"lambda0": 1.0, "lambda1": 0.5, "component": 0}},
                                  "n_particles": 2000}},
                    "initial": {{"preset": "gaussian-bump", "M": 1.0}},
                    "time": {{"dt": 0.01, "t_end": 0.3}},
                    "rho_p": [2],
                    "seed": 42,
                    "output": "{}"
                }}"#,
                out.display()
            )
        };
        for d in [a.path(), b.path()] {
            let out = run_config(&RunConfig::from_json(&text(d)).unwrap(), None).unwrap();
            assert_eq!(out.exit_code, EXIT_OK);
        }
        let read = |d: &Path| fs::read(d.join("diagnostics.csv")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = kinetic_config(&tmp.path().join("never"));
        cfg.time = None;
        let err = run_config(&cfg, None).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(!tmp.path().join("never").exists());
    }

    #[test]
    fn verify_mode_reports_each_check() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_json(&format!(
            r#"{{"mode": "verify", "output": "{}", "checks": [
                {{"check": "strichartz"}},
                {{"check": "series_convergence", "j_max": 2000}},
                {{"check": "gamma_stirling", "n_max": 50}},
                {{"check": "excitation_adaptation"}}
            ]}}"#,
            tmp.path().display()
        ))
        .unwrap();
        let out = run_config(&cfg, None).unwrap();
        assert_eq!(out.exit_code, EXIT_OK, "{:?}", out.manifest.message);
        let reports: Vec<Report> = serde_json::from_str(&fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(reports.len(), 4);
        let summary = emit_report(tmp.path()).unwrap();
        assert_eq!(summary.failures, 0);
        assert_eq!(summary.exit_code(), EXIT_OK);
    }

    #[test]
    fn failing_check_sets_exit_four() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_json(&format!(
            r#"{{"mode": "verify", "output": "{}", "checks": [
                {{"check": "strichartz", "tuple": {{"q": 2, "p": 2, "r": 2, "a": 2}}}}
            ]}}"#,
            tmp.path().display()
        ))
        .unwrap();
        let out = run_config(&cfg, None).unwrap();
        assert_eq!(out.exit_code, EXIT_VERIFICATION);
        assert_eq!(out.manifest.status, RunStatus::VerificationFailed);
    }
}
