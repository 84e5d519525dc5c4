//! Single-cell response of the internal dynamics to a step in `S`.

use serde_json::json;

use super::{AnalysisError, CheckItem, Report, Verdict};
use crate::internal::{phase_trace, InternalModel};

pub const EXCITABILITY_GAIN: f64 = 5.0;
pub const RETURN_TOL: f64 = 1e-3;

/// Starts at rest under `s0`, steps the signal to `s0 + ds` and records the
/// excursion `max |y₁ − y₁*(s0)|` and the distance to the new rest state at
/// `t = 20τₐ`.
///
/// Excitability: the excursion for `ds_large` must be at least
/// [`EXCITABILITY_GAIN`] times that for `ds_small`. Adaptation: both runs
/// end within [`RETURN_TOL`] of rest.
pub fn verify_excitation_adaptation(model: &InternalModel, s0: f64, ds_small: f64, ds_large: f64, dt: f64) -> Result<Report, AnalysisError> {
    let tau_a = match model {
        InternalModel::LinearExcAdapt { tau_a, .. } | InternalModel::AlgebraicExcAdapt { tau_a, .. } | InternalModel::Fhn { tau_a, .. } => *tau_a,
        _ => return Err(AnalysisError::Refused("model has no adaptation time".into())),
    };
    model.validate().map_err(|e| AnalysisError::Refused(e.to_string()))?;
    let rest = |s: f64| model.equilibrium(s).ok_or_else(|| AnalysisError::Refused(format!("no rest state at S = {s}")));
    let eq0 = rest(s0)?;
    let t_end = 20.0 * tau_a;
    let response = |ds: f64| -> Result<(f64, f64), AnalysisError> {
        let trace = phase_trace(model, eq0, |_| s0 + ds, dt, t_end).map_err(|e| AnalysisError::Refused(e.to_string()))?;
        let y1 = trace.column("y1")?;
        let y2 = trace.column("y2")?;
        let amp = y1.iter().fold(0.0f64, |a, y| a.max((y - eq0[0]).abs()));
        let eq = rest(s0 + ds)?;
        let dist = (y1.last().unwrap() - eq[0]).abs().max((y2.last().unwrap() - eq[1]).abs());
        Ok((amp, dist))
    };
    let (amp_s, dist_s) = response(ds_small)?;
    let (amp_l, dist_l) = response(ds_large)?;
    let inputs = json!({ "S0": s0, "dS_small": ds_small, "dS_large": ds_large, "dt": dt, "t_end": t_end, "amplitude_small": amp_s, "amplitude_large": amp_l });
    let gain = amp_l / amp_s;
    let items = vec![
        CheckItem::new("excitability_gain", inputs.clone(), gain, EXCITABILITY_GAIN, Verdict::from_bool(gain >= EXCITABILITY_GAIN), 0.0),
        CheckItem::new(
            "adaptation_return",
            json!({ "S0": s0, "dS_small": ds_small, "dS_large": ds_large, "distance_small": dist_s, "distance_large": dist_l, "t_end": t_end }),
            dist_s.max(dist_l),
            RETURN_TOL,
            Verdict::from_bool(dist_s.max(dist_l) <= RETURN_TOL),
            RETURN_TOL,
        )
        .with_note("lhs: largest max-norm distance to the new rest state at t_end"),
    ];
    Ok(Report::from_items("excitation_adaptation", items, vec![]))
}
