//! The coupled loop: deposit, solve, advance.

use serde::{Deserialize, Serialize};

use super::{advance_particles, deposit_density, ParticleEnsemble, ParticleError, TumbleEvent, TumbleMode};
use crate::diagnostics::{Column, DiagnosticsSeries};
use crate::fields::ChemState;
use crate::internal::{InternalModel, TumblingRate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleOptions {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub tumble: TumbleMode,
    /// Exponents `p` for `‖ρ‖_{Lᵖ}`.
    #[serde(default)]
    pub rho_p: Vec<f64>,
    /// Exponent of the source term `∫S^α ρ`; defaults to the model's
    /// growth exponent.
    #[serde(default)]
    pub source_alpha: Option<f64>,
    #[serde(default)]
    pub record_events: bool,
    /// Keep a copy of the ensemble every this many steps (0 keeps none).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl ParticleOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            tumble: TumbleMode::default(),
            rho_p: Vec::new(),
            source_alpha: None,
            record_events: false,
            snapshot_every: 0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub ensemble: ParticleEnsemble,
    pub chem: ChemState,
    pub diagnostics: DiagnosticsSeries,
    pub events: Vec<TumbleEvent>,
    pub snapshots: Vec<ParticleEnsemble>,
}

#[derive(Debug, Clone)]
pub struct ParticleAbort {
    pub step: u64,
    pub time: f64,
    pub reason: String,
    pub last_good: ParticleEnsemble,
    pub diagnostics: DiagnosticsSeries,
}

fn columns(opts: &ParticleOptions) -> Vec<Column> {
    let mut cols = vec![
        Column::new("step", "1", "step index"),
        Column::new("t", "time", "simulated time"),
        Column::new("mass", "cells", "sum of particle weights"),
    ];
    for p in &opts.rho_p {
        cols.push(Column::new(format!("rho_L{p}"), "cells/length^(dim/p')", format!("‖ρ‖ in Lebesgue space L^{p}")));
    }
    cols.extend([
        Column::new("sup_S", "concentration", "max |S| over nodes"),
        Column::new("J", "cells·[y]", "first internal moment Σ w|y|"),
        Column::new("J_stderr", "cells·[y]", "standard error of J as an ensemble mean"),
        Column::new("source", "cells·concentration^α", "Σ w S(x)^α, estimator of ∫S^α ρ dx"),
        Column::new("source_stderr", "cells·concentration^α", "standard error of source"),
        Column::new("tumbles", "1", "tumbles during the preceding step"),
        Column::new("msd", "length^2", "mean squared unwrapped displacement"),
    ]);
    cols
}

fn record(ens: &ParticleEnsemble, chem: &ChemState, rho: &crate::fields::ScalarField, alpha: f64, tumbles: u64, opts: &ParticleOptions) -> Vec<f64> {
    let mut row = vec![ens.step as f64, ens.time, ens.weight() * ens.len() as f64];
    row.extend(opts.rho_p.iter().map(|&p| rho.lp_norm(p)));
    let n = ens.len() as f64;
    let norms: Vec<f64> = ens.particles().iter().map(|p| p.y[0].hypot(p.y[1])).collect();
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let (src, src_se) = ens.source_term(&chem.s, alpha);
    row.extend([
        chem.s.sup_norm(),
        ens.first_moment(),
        ens.mass() * (var / n).sqrt(),
        src,
        src_se,
        tumbles as f64,
        ens.mean_square_displacement(),
    ]);
    row
}

/// Runs the particle system to `t_end`.
pub fn run_coupled(
    ens0: &ParticleEnsemble,
    model: &InternalModel,
    rate: &TumblingRate,
    opts: &ParticleOptions,
) -> Result<ParticleRun, ParticleError> {
    model.validate()?;
    rate.validate()?;
    let alpha = opts
        .source_alpha
        .or_else(|| model.growth_certificate().map(|c| c.alpha))
        .unwrap_or(0.0);
    let grid = *ens0.grid();
    let mut ens = ens0.clone();
    let mut rho = deposit_density(&ens, &grid);
    let mut chem = ChemState::from_density(&rho, ens.time, None)?;
    let mut diagnostics = DiagnosticsSeries::new(columns(opts));
    diagnostics
        .push(record(&ens, &chem, &rho, alpha, 0, opts))
        .expect("row matches columns");
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    if opts.snapshot_every > 0 {
        snapshots.push(ens.clone());
    }
    let steps = opts.steps();
    for n in 1..=steps {
        let last_good = ens.clone();
        let abort = |reason: String, diag: &DiagnosticsSeries| {
            ParticleError::Aborted(Box::new(ParticleAbort {
                step: last_good.step,
                time: last_good.time,
                reason,
                last_good: last_good.clone(),
                diagnostics: diag.clone(),
            }))
        };
        let report = advance_particles(&mut ens, &chem, model, rate, opts.dt, opts.tumble, opts.record_events)
            .map_err(|e| abort(e.to_string(), &diagnostics))?;
        if ens.particles().iter().any(|p| !(p.y[0].is_finite() && p.y[1].is_finite())) {
            return Err(abort("non-finite internal state".into(), &diagnostics));
        }
        rho = deposit_density(&ens, &grid);
        chem = ChemState::from_density(&rho, ens.time, Some(&chem)).map_err(|e| abort(e.to_string(), &diagnostics))?;
        diagnostics
            .push(record(&ens, &chem, &rho, alpha, report.tumbles, opts))
            .expect("row matches columns");
        events.extend(report.events);
        if opts.snapshot_every > 0 && n % opts.snapshot_every == 0 {
            snapshots.push(ens.clone());
        }
        if n % 100 == 0 {
            log::debug!("particle step {n}/{steps}, t = {:.4}", ens.time);
        }
    }
    Ok(ParticleRun {
        ensemble: ens,
        chem,
        diagnostics,
        events,
        snapshots,
    })
}
