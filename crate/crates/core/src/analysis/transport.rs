//! Checks on the kinetic solver: dispersion of free transport and Lᵖ
//! contraction under symmetric scattering.

use serde_json::json;

use super::{mixed_norm, AnalysisError, CheckItem, MixedNormSpec, NormOrder, Report, Verdict};
use crate::diagnostics::DiagnosticsSeries;
use crate::kernels::KernelSpec;
use crate::kinetic::{transport_by, KineticDensity};

/// Quadrature allowance on the dispersion ratio.
pub const DISPERSION_TOL: f64 = 0.05;
/// Allowed per-step increase of a tracked norm.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Compares `‖f₀(x−tv,v)‖_{Lᵖ_x L¹_v}` with `t^{−d/p′}‖f₀‖_{L¹_x Lᵖ_v}`.
///
/// Times at or beyond the box-crossing time `L/2` are excluded with a
/// warning: on the torus the translated mass wraps around and stops
/// spreading.
pub fn verify_dispersion(f0: &KineticDensity, p: f64, t_grid: &[f64]) -> Result<Report, AnalysisError> {
    let d = f0.grid().dim() as f64;
    let p_max = if d > 1.0 { d / (d - 1.0) } else { f64::INFINITY };
    let name = "dispersion";
    if !(p >= 1.0 && p < p_max) {
        let item = CheckItem::new(name, json!({ "p": p, "p_max": p_max }), f64::NAN, f64::NAN, Verdict::Inapplicable, DISPERSION_TOL)
            .with_note(format!("p must lie in [1, {p_max}) in dimension {d}"));
        return Ok(Report::from_items(name, vec![item], vec![]));
    }
    if !f0.is_finite() {
        return Err(AnalysisError::Refused("initial density is not finite".into()));
    }
    let lambda = d * (1.0 - 1.0 / p);
    let rhs0 = mixed_norm(f0, &MixedNormSpec::new(1.0, p, NormOrder::VelocityInner));
    let lhs_spec = MixedNormSpec::new(p, 1.0, NormOrder::VelocityInner);
    let crossing = f0.grid().length() / 2.0;
    let mut items = Vec::with_capacity(t_grid.len());
    let mut warnings = Vec::new();
    for &t in t_grid {
        let inputs = json!({ "t": t, "p": p, "lambda": lambda, "dim": d });
        if !(t > 0.0 && t.is_finite()) {
            items.push(
                CheckItem::new(name, inputs, f64::NAN, f64::NAN, Verdict::Inapplicable, DISPERSION_TOL)
                    .with_note("t must be positive: the right side diverges as t → 0"),
            );
            continue;
        }
        if t >= crossing {
            warnings.push(format!("t = {t} is beyond the box-crossing time {crossing}; excluded"));
            items.push(
                CheckItem::new(name, inputs, f64::NAN, f64::NAN, Verdict::Inapplicable, DISPERSION_TOL)
                    .with_note("beyond box-crossing time"),
            );
            continue;
        }
        let lhs = mixed_norm(&transport_by(f0, t), &lhs_spec);
        let rhs = t.powf(-lambda) * rhs0;
        items.push(CheckItem::new(name, inputs, lhs, rhs, Verdict::from_bool(lhs / rhs <= 1.0 + DISPERSION_TOL), DISPERSION_TOL));
    }
    Ok(Report::from_items(name, items, warnings))
}

/// Checks that the flat `Lᵖ_{x,v}` norms recorded by a kinetic run never
/// grow by more than [`MONOTONE_TOL`] per step.
///
/// Only kernels symmetric in `(v, v′)` are accepted.
pub fn verify_symmetrization(diag: &DiagnosticsSeries, kernel: &KernelSpec, p_list: &[f64]) -> Result<Report, AnalysisError> {
    if !kernel.is_symmetric() {
        return Err(AnalysisError::Refused(format!("kernel {} is not symmetric in (v, v')", kernel.name())));
    }
    let mut items = Vec::new();
    for &p in p_list {
        let label = MixedNormSpec::flat(p).label();
        let norms = diag.column(&label)?;
        let mut worst = (f64::NEG_INFINITY, 0usize);
        let mut max_ratio = f64::NEG_INFINITY;
        for (k, w) in norms.windows(2).enumerate() {
            let inc = w[1] - w[0];
            if inc > worst.0 || inc.is_nan() {
                worst = (inc, k + 1);
            }
            max_ratio = max_ratio.max(w[1] / w[0]);
        }
        let ok = norms.iter().all(|v| v.is_finite()) && worst.0 <= MONOTONE_TOL;
        let inputs = json!({
            "p": p,
            "steps": norms.len().saturating_sub(1),
            "worst_step": worst.1,
            "first": norms.first(),
            "last": norms.last(),
        });
        items.push(
            CheckItem::new(format!("symmetrization_L{p}"), inputs, worst.0, MONOTONE_TOL, Verdict::from_bool(ok), MONOTONE_TOL)
                .with_ratio(max_ratio)
                .with_note("lhs: largest per-step increase; ratio: largest ‖f(t_{n+1})‖/‖f(t_n)‖"),
        );
    }
    Ok(Report::from_items("symmetrization", items, vec![]))
}
