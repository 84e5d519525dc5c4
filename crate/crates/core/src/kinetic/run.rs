//! Strang-split time stepping with per-step diagnostics.

use serde::{Deserialize, Serialize};

use super::scatter::{scattering_step, ScatterMode};
use super::{transport_step, KineticDensity, KineticError};
use crate::analysis::{mixed_norm, MixedNormSpec};
use crate::diagnostics::{Column, DiagnosticsSeries};
use crate::fields::ChemState;
use crate::kernels::KernelSpec;

fn default_r() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticOptions {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scatter: ScatterMode,
    /// Mixed norms of `f` recorded every step.
    #[serde(default)]
    pub norms: Vec<MixedNormSpec>,
    /// Exponents `p` for `‖ρ‖_{Lᵖ}`.
    #[serde(default)]
    pub rho_p: Vec<f64>,
    /// Exponent `r` for `‖S‖_{Lʳ}`.
    #[serde(default = "default_r")]
    pub s_r: f64,
    /// Keep a copy of the state every this many steps (0 keeps none).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl KineticOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scatter: ScatterMode::default(),
            norms: Vec::new(),
            rho_p: Vec::new(),
            s_r: default_r(),
            snapshot_every: 0,
        }
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct KineticRun {
    pub state: KineticDensity,
    pub chem: ChemState,
    pub diagnostics: DiagnosticsSeries,
    /// `(step, state)` pairs at the snapshot cadence, starting with step 0.
    pub snapshots: Vec<(usize, KineticDensity)>,
}

/// A run stopped by a numerical failure, with the last accepted state.
#[derive(Debug, Clone)]
pub struct RunAbort {
    pub step: usize,
    pub time: f64,
    pub reason: String,
    pub last_good: KineticDensity,
    pub diagnostics: DiagnosticsSeries,
}

fn columns(opts: &KineticOptions) -> Vec<Column> {
    let mut cols = vec![
        Column::new("step", "1", "step index"),
        Column::new("t", "time", "simulated time"),
        Column::new("mass", "cells", "∬ f dv dx"),
    ];
    for p in &opts.rho_p {
        cols.push(Column::new(format!("rho_L{p}"), "cells/length^(dim/p')", format!("‖ρ‖ in Lebesgue space L^{p}")));
    }
    for n in &opts.norms {
        cols.push(Column::new(n.label(), "mixed", "mixed Lebesgue norm of f"));
    }
    cols.push(Column::new("sup_S", "concentration", "max |S| over nodes"));
    cols.push(Column::new(format!("S_L{}", opts.s_r), "concentration", "Lebesgue norm of S"));
    cols.push(Column::new("max_f", "cells/(length^dim·speed^dim)", "max of f over nodes"));
    cols.push(Column::new("min_f", "cells/(length^dim·speed^dim)", "min of f over nodes"));
    cols
}

fn record(step: usize, f: &KineticDensity, chem: &ChemState, opts: &KineticOptions) -> Vec<f64> {
    let rho = f.density();
    let mut row = vec![step as f64, f.time, rho.integral()];
    row.extend(opts.rho_p.iter().map(|&p| rho.lp_norm(p)));
    row.extend(opts.norms.iter().map(|n| mixed_norm(f, n)));
    row.push(chem.s.sup_norm());
    row.push(chem.s.lp_norm(opts.s_r));
    row.push(f.max());
    row.push(f.min());
    row
}

/// Integrates the coupled system from `f0` to `t_end`.
///
/// Each step is transport(dt/2), field solve from the transported density,
/// scattering(dt), transport(dt/2).
pub fn run_kinetic(f0: &KineticDensity, spec: &KernelSpec, opts: &KineticOptions) -> Result<KineticRun, KineticError> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(KineticError::NonPositiveStep(opts.dt));
    }
    if let Some(index) = f0.values().iter().position(|v| *v < 0.0) {
        return Err(KineticError::Negative {
            index,
            value: f0.values()[index],
        });
    }
    let mut diagnostics = DiagnosticsSeries::new(columns(opts));
    let mut chem = ChemState::from_density(&f0.density(), f0.time, None)?;
    let mut state = f0.clone();
    diagnostics
        .push(record(0, &state, &chem, opts))
        .expect("row matches columns");
    let mut snapshots = Vec::new();
    if opts.snapshot_every > 0 {
        snapshots.push((0, state.clone()));
    }
    let steps = opts.steps();
    let t0 = f0.time;
    let mut warned_negative = false;
    for step in 1..=steps {
        let t_target = (t0 + step as f64 * opts.dt).min(t0 + opts.t_end);
        let dt = t_target - state.time;
        let abort = |reason: String, last: &KineticDensity, diag: &DiagnosticsSeries| {
            KineticError::Aborted(Box::new(RunAbort {
                step,
                time: last.time,
                reason,
                last_good: last.clone(),
                diagnostics: diag.clone(),
            }))
        };
        let half = transport_step(&state, 0.5 * dt)?;
        let next_chem = ChemState::from_density(&half.density(), half.time, Some(&chem))
            .map_err(|e| abort(format!("field solve failed: {e}"), &state, &diagnostics))?;
        let scattered = scattering_step(&half, &next_chem, spec, dt, opts.scatter)
            .map_err(|e| abort(e.to_string(), &state, &diagnostics))?;
        let mut next = transport_step(&scattered, 0.5 * dt)?;
        next.time = t_target;
        if !next.is_finite() {
            return Err(abort("non-finite density".into(), &state, &diagnostics));
        }
        let mass = next.mass();
        if !(mass >= 0.0) {
            return Err(abort(format!("negative mass {mass}"), &state, &diagnostics));
        }
        if !warned_negative && next.min() < -1e-12 * next.max() {
            log::warn!(
                "f went negative at t = {:.4} (min {:.3e}, max {:.3e}); the grid does not resolve the solution",
                next.time,
                next.min(),
                next.max()
            );
            warned_negative = true;
        }
        state = next;
        chem = next_chem;
        diagnostics
            .push(record(step, &state, &chem, opts))
            .expect("row matches columns");
        if opts.snapshot_every > 0 && step % opts.snapshot_every == 0 {
            snapshots.push((step, state.clone()));
        }
        if step % 100 == 0 {
            log::debug!("kinetic step {step}/{steps}, t = {:.4}, mass = {mass:.12e}", state.time);
        }
    }
    Ok(KineticRun {
        state,
        chem,
        diagnostics,
        snapshots,
    })
}
