//! Periodic grids, scalar/vector fields and the chemoattractant solve
//! `−ΔS + S = ρ`.
//!
//! The whole space is approximated by a torus of side `L` with `N` nodes per
//! axis. Node `i` sits at `x = i·L/N`; values are stored in row-major order
//! with axis 0 varying slowest.

mod green;
mod snapshot;
pub(crate) mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use green::{green_function, green_function_2d_with, log_bound_constants, LogBoundConstants};
pub use snapshot::{read_field, write_field, write_raw, SnapshotMeta};
pub use spectral::{
    divergence, gradient_field, laplacian, resample, solve_screened_poisson,
    time_derivative_field, translate,
};

/// A point or a velocity. Components beyond the grid dimension are ignored
/// and kept at zero.
pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("unsupported dimension {0}")]
    UnsupportedDim(usize),
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot sidecar: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self, FieldError> {
        if !(2..=3).contains(&dim) {
            return Err(FieldError::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(FieldError::InvalidGrid(format!(
                "resolution must be even and at least 4, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(FieldError::InvalidGrid(format!("box side must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Number of nodes, `N^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let n = self.n;
        let mut out = [0; 3];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % n;
            rest /= n;
        }
        out
    }

    pub fn ravel(&self, idx: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.n + idx[axis])
    }

    pub fn node_position(&self, index: usize) -> Point {
        let idx = self.unravel(index);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Signed wave number `2πm/L` of FFT bin `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        2.0 * std::f64::consts::PI * m / self.length
    }

    pub fn wrap(&self, x: Point) -> Point {
        let mut out = [0.0; 3];
        for axis in 0..self.dim {
            let mut c = x[axis].rem_euclid(self.length);
            if c >= self.length {
                c = 0.0;
            }
            out[axis] = c;
        }
        out
    }

    /// Multilinear stencil: the `2^dim` surrounding node indices and their
    /// weights. Weights are nonnegative and sum to one.
    pub fn stencil(&self, x: Point) -> ([usize; 8], [f64; 8]) {
        let h = self.spacing();
        let mut lo = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..self.dim {
            let s = x[axis].rem_euclid(self.length) / h;
            let base = s.floor();
            let mut t = s - base;
            if !(0.0..1.0).contains(&t) {
                t = t.clamp(0.0, 1.0);
            }
            lo[axis] = (base as i64).rem_euclid(self.n as i64) as usize;
            frac[axis] = t;
        }
        let mut idx = [0usize; 8];
        let mut w = [0.0f64; 8];
        for corner in 0..(1usize << self.dim) {
            let mut node = [0usize; 3];
            let mut weight = 1.0;
            for axis in 0..self.dim {
                if corner >> axis & 1 == 1 {
                    node[axis] = (lo[axis] + 1) % self.n;
                    weight *= frac[axis];
                } else {
                    node[axis] = lo[axis];
                    weight *= 1.0 - frac[axis];
                }
            }
            idx[corner] = self.ravel(node);
            w[corner] = weight;
        }
        (idx, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<(), FieldError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(FieldError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_position(i))).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        check_finite(&self.values)
    }

    /// `∫ s dx` by the rectangle rule (exact for trigonometric polynomials).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖s‖_{Lᵖ}` by grid quadrature; `p = ∞` gives the sup norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.values, p, self.grid.cell_volume())
    }

    /// Multilinear interpolation at an arbitrary (wrapped) point.
    pub fn sample(&self, x: Point) -> f64 {
        let (idx, w) = self.grid.stencil(x);
        (0..1usize << self.grid.dim)
            .map(|c| w[c] * self.values[idx[c]])
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }
}

pub(crate) fn lp_norm(values: &[f64], p: f64, measure: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return values.iter().map(|v| v.abs()).sum::<f64>() * measure;
    }
    if p == 2.0 {
        return (values.iter().map(|v| v * v).sum::<f64>() * measure).sqrt();
    }
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * measure).powf(1.0 / p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: PeriodicGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: PeriodicGrid, components: Vec<Vec<f64>>) -> Result<Self, FieldError> {
        if components.len() != grid.dim() {
            return Err(FieldError::LengthMismatch {
                expected: grid.dim(),
                got: components.len(),
            });
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(FieldError::LengthMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
            check_finite(c)?;
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Euclidean magnitude per node.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c[i] * c[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        ScalarField::from_raw(self.grid, values)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().max()
    }

    /// Multilinear interpolation of every component.
    pub fn sample(&self, x: Point) -> Point {
        let (idx, w) = self.grid.stencil(x);
        let mut out = [0.0; 3];
        for (axis, comp) in self.components.iter().enumerate() {
            out[axis] = (0..1usize << self.grid.dim)
                .map(|c| w[c] * comp[idx[c]])
                .sum();
        }
        out
    }
}

/// Chemoattractant state: `S`, `∇S`, optionally `∂ₜS`, at a given time.
#[derive(Debug, Clone)]
pub struct ChemState {
    pub s: ScalarField,
    pub grad_s: VectorField,
    pub dt_s: Option<ScalarField>,
    pub time: f64,
}

impl ChemState {
    /// Solves for `S` from the density and, when a previous state is given,
    /// forms `∂ₜS` by backward difference against it.
    pub fn from_density(
        rho: &ScalarField,
        time: f64,
        previous: Option<&ChemState>,
    ) -> Result<Self, FieldError> {
        let s = solve_screened_poisson(rho)?;
        let grad_s = gradient_field(&s)?;
        let dt_s = match previous {
            Some(prev) if time > prev.time => {
                Some(time_derivative_field(&s, &prev.s, time - prev.time)?)
            }
            _ => None,
        };
        Ok(Self {
            s,
            grad_s,
            dt_s,
            time,
        })
    }

    /// Builds a state from a prescribed `S` (used for manufactured tests).
    pub fn from_field(s: ScalarField, dt_s: Option<ScalarField>, time: f64) -> Result<Self, FieldError> {
        let grad_s = gradient_field(&s)?;
        Ok(Self {
            s,
            grad_s,
            dt_s,
            time,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.s.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> PeriodicGrid {
        PeriodicGrid::new(2, 16, 4.0).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(PeriodicGrid::new(1, 16, 1.0).is_err());
        assert!(PeriodicGrid::new(2, 15, 1.0).is_err());
        assert!(PeriodicGrid::new(2, 2, 1.0).is_err());
        assert!(PeriodicGrid::new(3, 8, 0.0).is_err());
        assert!(PeriodicGrid::new(3, 8, f64::NAN).is_err());
    }

    #[test]
    fn cell_volume_is_spacing_power() {
        let g = PeriodicGrid::new(3, 8, 3.0).unwrap();
        assert_eq!(g.cell_volume(), (3.0f64 / 8.0).powi(3));
        assert_eq!(g.len(), 512);
    }

    #[test]
    fn ravel_roundtrip() {
        let g = PeriodicGrid::new(3, 6, 1.0).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.ravel(g.unravel(i)), i);
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = grid2();
        let mut v = vec![0.0; g.len()];
        v[7] = f64::NAN;
        match ScalarField::new(g, v) {
            Err(FieldError::NonFinite { index, .. }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sample_constant_and_nodes() {
        let g = grid2();
        let c = ScalarField::constant(g, 2.5);
        assert!((c.sample([1.234, 3.9, 0.0]) - 2.5).abs() < 1e-14);
        let f = ScalarField::from_fn(g, |x| (x[0] * 1.3).sin() + x[1]);
        for i in [0, 5, 37, 255] {
            let x = g.node_position(i);
            assert!((f.sample(x) - f.values()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn sample_is_exact_on_affine_cells() {
        // Per-axis affine inside a cell: a + b x + c y + d x y.
        let g = grid2();
        let f = ScalarField::from_fn(g, |x| 1.0 + 0.5 * x[0] - 0.25 * x[1] + 0.1 * x[0] * x[1]);
        let h = g.spacing();
        let x = [3.0 * h + 0.3 * h, 5.0 * h + 0.8 * h, 0.0];
        let exact = 1.0 + 0.5 * x[0] - 0.25 * x[1] + 0.1 * x[0] * x[1];
        assert!((f.sample(x) - exact).abs() < 1e-13);
    }

    #[test]
    fn sample_single_mode_at_cell_center_within_bound() {
        let g = PeriodicGrid::new(2, 32, 2.0).unwrap();
        let k = 2.0 * std::f64::consts::PI / g.length();
        let f = ScalarField::from_fn(g, |x| (k * x[0]).cos());
        let h = g.spacing();
        // Bilinear error ≤ (h²/8)·max|∂²f| per axis.
        let bound = h * h / 8.0 * k * k;
        for i in 0..g.n() {
            let x = [(i as f64 + 0.5) * h, 0.5 * h, 0.0];
            let err = (f.sample(x) - (k * x[0]).cos()).abs();
            assert!(err <= bound, "err {err} > {bound}");
        }
    }

    #[test]
    fn wrap_handles_negative_and_large() {
        let g = grid2();
        let w = g.wrap([-0.5, 9.0, 0.0]);
        assert!((w[0] - 3.5).abs() < 1e-14);
        assert!((w[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lp_norm_of_constant() {
        let g = grid2();
        let c = ScalarField::constant(g, 2.0);
        let vol = g.volume();
        assert!((c.lp_norm(1.0) - 2.0 * vol).abs() < 1e-12);
        assert!((c.lp_norm(3.0) - 2.0 * vol.powf(1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(c.lp_norm(f64::INFINITY), 2.0);
    }
}
