//! Run-and-tumble particles carrying internal states, coupled to `S` through
//! cloud-in-cell deposition.

mod checkpoint;
mod run;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};
pub use run::{run_coupled, ParticleAbort, ParticleOptions, ParticleRun};

use crate::fields::{ChemState, FieldError, PeriodicGrid, Point, ScalarField};
use crate::internal::{InternalError, InternalModel, SPath, State, TumblingRate};

/// Largest admissible `dt·max λ`.
pub const RATE_CFL: f64 = 0.5;

/// Particles per deposition chunk. Fixed so that the summation order does
/// not depend on the thread count.
const DEPOSIT_CHUNK: usize = 4096;

/// RNG words reserved per particle and step.
const WORDS_PER_STEP: u128 = 1024;

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("invalid ensemble: {0}")]
    Invalid(String),
    #[error("dt·max λ = {dt}·{max_rate} exceeds {limit}; try dt = {suggested}")]
    RateCfl {
        dt: f64,
        max_rate: f64,
        limit: f64,
        suggested: f64,
    },
    #[error(transparent)]
    Internal(#[from] InternalError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run aborted at step {} (t = {}): {}", .0.step, .0.time, .0.reason)]
    Aborted(Box<ParticleAbort>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TumbleMode {
    /// At most one tumble per step, with probability `1 − e^{−λdt}`.
    #[default]
    Bernoulli,
    /// Event times from a unit-exponential hazard clock; several tumbles
    /// per step are possible and the run is split at each event.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: Point,
    pub v: Point,
    pub y: State,
    /// Unwrapped displacement since the start.
    pub disp: Point,
    /// Remaining unit-exponential hazard (exact mode).
    pub clock: f64,
    /// Time of the previous tumble.
    pub last_tumble: Option<f64>,
}

/// One tumble: the particle, its time, the time since the previous tumble
/// of that particle (NaN for the first) and the new velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumbleEvent {
    pub particle: usize,
    pub time: f64,
    pub interval: f64,
    pub velocity: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    grid: PeriodicGrid,
    particles: Vec<Particle>,
    mass: f64,
    seed: u64,
    pub step: u64,
    pub time: f64,
}

fn rng_for(seed: u64, particle: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

/// Uniform direction on the unit circle (d=2) or sphere (d=3).
pub fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    let phi = 2.0 * PI * rng.random::<f64>();
    if dim == 2 {
        [phi.cos(), phi.sin(), 0.0]
    } else {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    }
}

fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl ParticleEnsemble {
    /// Builds an ensemble from positions, unit velocities and internal
    /// states; every particle carries `mass/N_p`.
    pub fn new(
        grid: PeriodicGrid,
        positions: Vec<Point>,
        velocities: Vec<Point>,
        states: Vec<State>,
        mass: f64,
        seed: u64,
    ) -> Result<Self, ParticleError> {
        let n = positions.len();
        if n == 0 || velocities.len() != n || states.len() != n {
            return Err(ParticleError::Invalid(format!(
                "need equal, nonzero counts; got {n} positions, {} velocities, {} states",
                velocities.len(),
                states.len()
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(ParticleError::Invalid(format!("mass must be positive, got {mass}")));
        }
        let mut particles = Vec::with_capacity(n);
        for (i, ((x, v), y)) in positions.into_iter().zip(velocities).zip(states).enumerate() {
            if (norm(v) - 1.0).abs() > 1e-12 {
                return Err(ParticleError::Invalid(format!("velocity {i} is not a unit vector")));
            }
            if !(x.iter().chain(&y).all(|c| c.is_finite())) {
                return Err(ParticleError::Invalid(format!("particle {i} has non-finite data")));
            }
            let mut rng = rng_for(seed ^ 0x9e37_79b9_7f4a_7c15, i, 0);
            particles.push(Particle {
                x: grid.wrap(x),
                v,
                y,
                disp: [0.0; 3],
                clock: Exp1.sample(&mut rng),
                last_tumble: None,
            });
        }
        Ok(Self {
            grid,
            particles,
            mass,
            seed,
            step: 0,
            time: 0.0,
        })
    }

    /// `n` particles uniform in the box with uniform directions and the
    /// given internal state.
    pub fn uniform(grid: PeriodicGrid, n: usize, mass: f64, y0: State, seed: u64) -> Result<Self, ParticleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let dim = grid.dim();
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = [0.0; 3];
            for c in x.iter_mut().take(dim) {
                *c = rng.random::<f64>() * grid.length();
            }
            xs.push(x);
            vs.push(random_direction(dim, &mut rng));
        }
        Self::new(grid, xs, vs, vec![y0; n], mass, seed)
    }

    pub(crate) fn from_parts(grid: PeriodicGrid, particles: Vec<Particle>, mass: f64, seed: u64, step: u64, time: f64) -> Self {
        Self {
            grid,
            particles,
            mass,
            seed,
            step,
            time,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn weight(&self) -> f64 {
        self.mass / self.particles.len() as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `J = Σᵢ wᵢ|yᵢ|`
    pub fn first_moment(&self) -> f64 {
        self.weight() * self.particles.iter().map(|p| p.y[0].hypot(p.y[1])).sum::<f64>()
    }

    /// Mean squared unwrapped displacement.
    pub fn mean_square_displacement(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| p.disp.iter().map(|d| d * d).sum::<f64>())
            .sum::<f64>()
            / self.len() as f64
    }

    /// `(Σᵢ wᵢ S(xᵢ)^α, standard error)`: a pathwise estimator of `∫S^α ρ dx`.
    pub fn source_term(&self, s: &ScalarField, alpha: f64) -> (f64, f64) {
        let n = self.len() as f64;
        let vals: Vec<f64> = self.particles.iter().map(|p| s.sample(p.x).max(0.0).powf(alpha)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (self.mass * mean, self.mass * (var / n).sqrt())
    }
}

/// Cloud-in-cell deposition; `Σ ρ·cell_volume = M` to round-off.
pub fn deposit_density(ens: &ParticleEnsemble, grid: &PeriodicGrid) -> ScalarField {
    let scale = ens.weight() / grid.cell_volume();
    let corners = 1usize << grid.dim();
    let partial: Vec<Vec<f64>> = ens
        .particles
        .par_chunks(DEPOSIT_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; grid.len()];
            for p in chunk {
                let (idx, w) = grid.stencil(p.x);
                for c in 0..corners {
                    acc[idx[c]] += w[c];
                }
            }
            acc
        })
        .collect();
    let mut rho = vec![0.0; grid.len()];
    for acc in partial {
        for (r, a) in rho.iter_mut().zip(acc) {
            *r += a;
        }
    }
    for r in rho.iter_mut() {
        *r *= scale;
    }
    ScalarField::new(*grid, rho).expect("deposition of finite positions is finite")
}

/// Outcome of one particle step.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub tumbles: u64,
    pub max_rate: f64,
    pub events: Vec<TumbleEvent>,
}

/// Advances every particle by `dt`: straight run, RK4 for `y` with `S`
/// sampled at the mid-path point, then tumbling at rate `λ[y]`.
pub fn advance_particles(
    ens: &mut ParticleEnsemble,
    chem: &ChemState,
    model: &InternalModel,
    rate: &TumblingRate,
    dt: f64,
    mode: TumbleMode,
    record_events: bool,
) -> Result<StepReport, ParticleError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ParticleError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let max_dt = model.max_dt();
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(InternalError::StepTooLarge { dt, max: max_dt }.into());
    }
    if chem.grid() != &ens.grid {
        return Err(FieldError::GridMismatch.into());
    }
    let max_rate = ens
        .particles
        .par_iter()
        .map(|p| rate.eval(p.y))
        .reduce(|| 0.0, f64::max);
    if dt * max_rate > RATE_CFL {
        return Err(ParticleError::RateCfl {
            dt,
            max_rate,
            limit: RATE_CFL,
            suggested: 0.5 * dt,
        });
    }
    let grid = ens.grid;
    let dim = grid.dim();
    let (seed, step, t0) = (ens.seed, ens.step, ens.time);
    let results: Vec<(u64, Vec<TumbleEvent>)> = ens
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(i, p)| {
            let mid = [
                p.x[0] + 0.5 * dt * p.v[0],
                p.x[1] + 0.5 * dt * p.v[1],
                p.x[2] + 0.5 * dt * p.v[2],
            ];
            let s_mid = chem.s.sample(mid);
            let lambda = rate.eval(p.y);
            p.y = model.rk4(p.y, SPath::constant(s_mid), dt);
            let mut rng = rng_for(seed, i, step);
            let mut events = Vec::new();
            let mut count = 0u64;
            let mut tumble = |p: &mut Particle, t: f64, rng: &mut ChaCha8Rng| {
                p.v = random_direction(dim, rng);
                count += 1;
                if record_events {
                    events.push(TumbleEvent {
                        particle: i,
                        time: t,
                        interval: p.last_tumble.map_or(f64::NAN, |l| t - l),
                        velocity: p.v,
                    });
                }
                p.last_tumble = Some(t);
            };
            let run = |p: &mut Particle, tau: f64| {
                for a in 0..dim {
                    p.x[a] += p.v[a] * tau;
                    p.disp[a] += p.v[a] * tau;
                }
            };
            match mode {
                TumbleMode::Bernoulli => {
                    run(p, dt);
                    let prob = -(-lambda * dt).exp_m1();
                    if rng.random::<f64>() < prob {
                        tumble(p, t0 + dt, &mut rng);
                    }
                }
                TumbleMode::Exact => {
                    let mut elapsed = 0.0;
                    loop {
                        let left = dt - elapsed;
                        if lambda > 0.0 && p.clock < lambda * left {
                            let tau = p.clock / lambda;
                            run(p, tau);
                            elapsed += tau;
                            tumble(p, t0 + elapsed, &mut rng);
                            p.clock = Exp1.sample(&mut rng);
                        } else {
                            run(p, left);
                            p.clock -= lambda * left;
                            break;
                        }
                    }
                }
            }
            p.x = grid.wrap(p.x);
            (count, events)
        })
        .collect();
    ens.step += 1;
    ens.time = t0 + dt;
    let mut report = StepReport {
        max_rate,
        ..Default::default()
    };
    for (count, events) in results {
        report.tumbles += count;
        report.events.extend(events);
    }
    Ok(report)
}
