//! Eulerian solver for the kinetic equation `∂ₜf + v·∇ₓf = ∫T f′ dv′ − ∫T′ f dv′`
//! on the periodic box, coupled to `−ΔS + S = ρ`.

mod run;
mod scatter;
mod velocity;

use rayon::prelude::*;
use thiserror::Error;

pub use run::{run_kinetic, KineticOptions, KineticRun, RunAbort};
pub use scatter::{scattering_step, ScatterMode, CFL_LIMIT};
pub use velocity::{VelocitySet, VelocitySpec};

use crate::fields::spectral::translate_in_place;
use crate::fields::{FieldError, PeriodicGrid, Point, ScalarField};
use crate::kernels::KernelError;

#[derive(Debug, Error)]
pub enum KineticError {
    #[error("invalid velocity set: {0}")]
    InvalidVelocitySet(String),
    #[error("velocity set is {vel}-dimensional but the grid is {grid}-dimensional")]
    DimensionMismatch { grid: usize, vel: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("negative density {value} at flat index {index}")]
    Negative { index: usize, value: f64 },
    #[error("non-finite density {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("CFL violated: dt·(max loss rate) = {dt}·{rate} = {} > {limit}", dt * rate)]
    Cfl { rate: f64, dt: f64, limit: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("run aborted at step {} (t = {}): {}", .0.step, .0.time, .0.reason)]
    Aborted(Box<RunAbort>),
}

/// Phase-space density `f(x, vⱼ)` on grid nodes times velocity nodes.
///
/// Storage is velocity-major: slice `j` holds the spatial field of node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticDensity {
    grid: PeriodicGrid,
    vel: VelocitySet,
    values: Vec<f64>,
    pub time: f64,
}

impl KineticDensity {
    pub fn new(grid: PeriodicGrid, vel: VelocitySet, values: Vec<f64>, time: f64) -> Result<Self, KineticError> {
        if grid.dim() != vel.dim() {
            return Err(KineticError::DimensionMismatch {
                grid: grid.dim(),
                vel: vel.dim(),
            });
        }
        let expected = grid.len() * vel.len();
        if values.len() != expected {
            return Err(KineticError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(KineticError::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(KineticError::Negative { index, value });
            }
        }
        Ok(Self {
            grid,
            vel,
            values,
            time,
        })
    }

    pub fn from_fn(
        grid: PeriodicGrid,
        vel: VelocitySet,
        f: impl Fn(Point, Point) -> f64,
    ) -> Result<Self, KineticError> {
        let mut values = Vec::with_capacity(grid.len() * vel.len());
        for v in vel.nodes() {
            for c in 0..grid.len() {
                values.push(f(grid.node_position(c), *v));
            }
        }
        Self::new(grid, vel, values, 0.0)
    }

    pub(crate) fn from_raw(grid: PeriodicGrid, vel: VelocitySet, values: Vec<f64>, time: f64) -> Self {
        Self {
            grid,
            vel,
            values,
            time,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn velocities(&self) -> &VelocitySet {
        &self.vel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Spatial slice for velocity node `j`.
    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn get(&self, cell: usize, j: usize) -> f64 {
        self.values[j * self.grid.len() + cell]
    }

    /// `ρ(x) = Σⱼ wⱼ f(x, vⱼ)`
    pub fn density(&self) -> ScalarField {
        let n = self.grid.len();
        let mut rho = vec![0.0; n];
        for (j, w) in self.vel.weights().iter().enumerate() {
            for (r, f) in rho.iter_mut().zip(self.slice(j)) {
                *r += w * f;
            }
        }
        ScalarField::from_raw(self.grid, rho)
    }

    pub fn mass(&self) -> f64 {
        self.density().integral()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Free transport over `dt`: each velocity slice is translated by `vⱼ·dt`
/// through a Fourier phase shift.
pub fn transport_step(f: &KineticDensity, dt: f64) -> Result<KineticDensity, KineticError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticError::NonPositiveStep(dt));
    }
    Ok(transport_by(f, dt))
}

/// Translation by `vⱼ·t` for any real `t` (negative undoes a step).
pub(crate) fn transport_by(f: &KineticDensity, t: f64) -> KineticDensity {
    let grid = f.grid;
    let n = grid.len();
    let nodes = f.vel.nodes();
    let mut values = f.values.clone();
    values.par_chunks_mut(n).enumerate().for_each(|(j, slice)| {
        let v = nodes[j];
        translate_in_place(&grid, slice, [v[0] * t, v[1] * t, v[2] * t]);
    });
    KineticDensity::from_raw(grid, f.vel.clone(), values, f.time + t)
}
