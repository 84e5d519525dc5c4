//! Quadrature node sets on the velocity space `V`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::KineticError;
use crate::fields::Point;

/// Config-level description of a velocity set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    /// Unit circle (d=2) or unit sphere (d=3) with `n_v` nodes.
    Sphere { n_v: usize },
    /// Unit disk (d=2) or unit ball (d=3): `n_r` radial shells times
    /// `n_dir` directions.
    Ball { n_r: usize, n_dir: usize },
}

impl VelocitySpec {
    pub fn build(&self, dim: usize) -> Result<VelocitySet, KineticError> {
        match (*self, dim) {
            (VelocitySpec::Sphere { n_v }, 2) => VelocitySet::circle(n_v),
            (VelocitySpec::Sphere { n_v }, 3) => VelocitySet::sphere(n_v),
            (VelocitySpec::Ball { n_r, n_dir }, 2) => VelocitySet::disk(n_r, n_dir),
            (VelocitySpec::Ball { n_r, n_dir }, 3) => VelocitySet::ball(n_r, n_dir),
            (_, d) => Err(KineticError::InvalidVelocitySet(format!("unsupported dimension {d}"))),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            VelocitySpec::Sphere { n_v } => n_v,
            VelocitySpec::Ball { n_r, n_dir } => n_r * n_dir,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySet {
    dim: usize,
    nodes: Vec<Point>,
    weights: Vec<f64>,
    measure: f64,
}

/// Antipodally symmetric near-uniform directions on the unit sphere:
/// a Fibonacci spiral on the upper hemisphere and its mirror image.
fn fibonacci_directions(n: usize) -> Vec<Point> {
    let half = n / 2;
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut upper = Vec::with_capacity(half);
    for i in 0..half {
        let z = (i as f64 + 0.5) / half as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        upper.push([r * phi.cos(), r * phi.sin(), z]);
    }
    let mut out = upper.clone();
    out.extend(upper.iter().map(|v| [-v[0], -v[1], -v[2]]));
    out
}

impl VelocitySet {
    fn checked(dim: usize, nodes: Vec<Point>, weights: Vec<f64>, measure: f64) -> Result<Self, KineticError> {
        let set = Self {
            dim,
            nodes,
            weights,
            measure,
        };
        let total: f64 = set.weights.iter().sum();
        if (total - measure).abs() > 1e-12 * measure.max(1.0) {
            return Err(KineticError::InvalidVelocitySet(format!(
                "weights sum to {total}, expected {measure}"
            )));
        }
        Ok(set)
    }

    /// `n` equispaced unit vectors, weights `2π/n`.
    pub fn circle(n: usize) -> Result<Self, KineticError> {
        if n < 2 {
            return Err(KineticError::InvalidVelocitySet(format!(
                "circle needs at least 2 nodes, got {n}"
            )));
        }
        let nodes = (0..n)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / n as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect();
        Self::checked(2, nodes, vec![2.0 * PI / n as f64; n], 2.0 * PI)
    }

    /// `n` (even) unit vectors in antipodal pairs, weights `4π/n`.
    pub fn sphere(n: usize) -> Result<Self, KineticError> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(KineticError::InvalidVelocitySet(format!(
                "sphere needs an even node count ≥ 2, got {n}"
            )));
        }
        Self::checked(3, fibonacci_directions(n), vec![4.0 * PI / n as f64; n], 4.0 * PI)
    }

    /// Unit disk: shells at mid-radius, each carrying its exact annulus
    /// area split over `n_theta` angles. Alternate shells are rotated by
    /// half an angular step.
    pub fn disk(n_r: usize, n_theta: usize) -> Result<Self, KineticError> {
        if n_r == 0 || n_theta < 2 {
            return Err(KineticError::InvalidVelocitySet(format!(
                "disk needs n_r ≥ 1 and n_theta ≥ 2, got ({n_r}, {n_theta})"
            )));
        }
        let nr = n_r as f64;
        let mut nodes = Vec::with_capacity(n_r * n_theta);
        let mut weights = Vec::with_capacity(n_r * n_theta);
        for i in 0..n_r {
            let r = (i as f64 + 0.5) / nr;
            let area = PI * ((2 * i + 1) as f64) / (nr * nr);
            let offset = if i % 2 == 1 { 0.5 } else { 0.0 };
            for j in 0..n_theta {
                let th = 2.0 * PI * (j as f64 + offset) / n_theta as f64;
                nodes.push([r * th.cos(), r * th.sin(), 0.0]);
                weights.push(area / n_theta as f64);
            }
        }
        Self::checked(2, nodes, weights, PI)
    }

    /// Unit ball: shells at mid-radius with exact shell volumes, directions
    /// from [`VelocitySet::sphere`].
    pub fn ball(n_r: usize, n_dir: usize) -> Result<Self, KineticError> {
        if n_r == 0 || n_dir < 2 || !n_dir.is_multiple_of(2) {
            return Err(KineticError::InvalidVelocitySet(format!(
                "ball needs n_r ≥ 1 and an even n_dir ≥ 2, got ({n_r}, {n_dir})"
            )));
        }
        let nr = n_r as f64;
        let dirs = fibonacci_directions(n_dir);
        let mut nodes = Vec::with_capacity(n_r * n_dir);
        let mut weights = Vec::with_capacity(n_r * n_dir);
        for i in 0..n_r {
            let r = (i as f64 + 0.5) / nr;
            let i = i as f64;
            let vol = 4.0 * PI / 3.0 * ((i + 1.0).powi(3) - i.powi(3)) / nr.powi(3);
            for d in &dirs {
                nodes.push([r * d[0], r * d[1], r * d[2]]);
                weights.push(vol / n_dir as f64);
            }
        }
        Self::checked(3, nodes, weights, 4.0 * PI / 3.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> Point {
        self.nodes[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|V| = Σⱼ wⱼ`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn max_speed(&self) -> f64 {
        self.nodes
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// `Σⱼ wⱼ vⱼ`
    pub fn first_moment(&self) -> Point {
        let mut m = [0.0; 3];
        for (v, w) in self.nodes.iter().zip(&self.weights) {
            for a in 0..3 {
                m[a] += w * v[a];
            }
        }
        m
    }
}
