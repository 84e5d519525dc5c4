//! Checks on particle-run diagnostics: the sublinear closure of the source
//! term and the Gronwall bound on the first internal moment.

use serde_json::json;

use super::{AnalysisError, CheckItem, Report, Verdict};
use crate::diagnostics::DiagnosticsSeries;

/// Exact `∫₀ᵗ (t−s)^{−α} g(s) ds` for `g` piecewise linear on the nodes
/// `s`, at every node `t = sₙ`.
pub fn memory_integral(s: &[f64], g: &[f64], alpha: f64) -> Vec<f64> {
    let e1 = 1.0 - alpha;
    let e2 = 2.0 - alpha;
    (0..s.len())
        .map(|n| {
            let t = s[n];
            let mut total = 0.0;
            for k in 0..n {
                // u = t − s runs from u0 down to u1 across [s_k, s_{k+1}].
                let (u0, u1) = (t - s[k], t - s[k + 1]);
                let h = s[k + 1] - s[k];
                // g = g_{k+1} + (g_k − g_{k+1})(u − u1)/h
                let slope = (g[k] - g[k + 1]) / h;
                let m0 = (u0.powf(e1) - u1.powf(e1)) / e1;
                let m1 = (u0.powf(e2) - u1.powf(e2)) / e2;
                total += (g[k + 1] - slope * u1) * m0 + slope * m1;
            }
            total
        })
        .collect()
}

/// Checks `p′α/3 + p′/q′ = 1` for `1/q = α/3 + 1/p` and `p′α/3 < 1`, then
/// monitors `I(t) = ∫₀ᵗ (t−s)^{−α}‖ρ(s)‖_p ds` along the run.
///
/// Needs the columns `t` and `rho_L{p}`.
pub fn verify_sublinear_closure(diag: &DiagnosticsSeries, alpha: f64, p: f64, q: f64) -> Result<Report, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Refused(format!("α must lie in (0, 1), got {alpha}")));
    }
    if !(p > 1.0 && p.is_finite() && q >= 1.0) {
        return Err(AnalysisError::Refused(format!("need 1 < p < ∞ and q ≥ 1, got p={p}, q={q}")));
    }
    let relation = 1.0 / q - (alpha / 3.0 + 1.0 / p);
    if relation.abs() > 1e-12 {
        return Err(AnalysisError::Refused(format!(
            "q = {q} does not satisfy 1/q = α/3 + 1/p (defect {relation:e})"
        )));
    }
    let pc = p / (p - 1.0);
    let qc = if q == 1.0 { f64::INFINITY } else { q / (q - 1.0) };
    let inputs = json!({ "alpha": alpha, "p": p, "q": q });
    let identity = pc * alpha / 3.0 + pc / qc;
    let mut items = vec![
        CheckItem::new("exponent_identity", inputs.clone(), identity, 1.0, Verdict::from_bool((identity - 1.0).abs() <= 1e-14), 1e-14)
            .with_residual(identity - 1.0),
        CheckItem::new("sublinear_window", inputs.clone(), pc * alpha / 3.0, 1.0, Verdict::from_bool(pc * alpha / 3.0 < 1.0), 0.0)
            .with_note(format!("p'α/3 < 1 holds for p > {}", 3.0 / (3.0 - alpha))),
    ];
    let t = diag.column("t")?;
    let norm = diag.column(&format!("rho_L{p}"))?;
    let integral = memory_integral(&t, &norm, alpha);
    let t_end = *t.last().unwrap_or(&0.0);
    let sup_norm = norm.iter().copied().fold(0.0, f64::max);
    let envelope = (t_end - t.first().copied().unwrap_or(0.0)).powf(1.0 - alpha) / (1.0 - alpha) * sup_norm;
    let max_i = integral.iter().copied().fold(0.0, f64::max);
    let finite = integral.iter().all(|v| v.is_finite());
    items.push(
        CheckItem::new(
            "memory_integral_bounded",
            json!({ "alpha": alpha, "p": p, "t_end": t_end, "I_end": integral.last(), "steps": t.len() }),
            max_i,
            envelope,
            Verdict::from_bool(finite && max_i <= envelope * (1.0 + 1e-12)),
            1e-12,
        )
        .with_note("rhs: t^{1-α}/(1-α) · sup ‖ρ‖_p"),
    );
    Ok(Report::from_items("sublinear_closure", items, vec![]))
}

/// Checks `dJ/dt ≤ a + bJ + c∫S^αρ` with `a = CM`, `b = c = C`, in
/// differential and Duhamel form.
///
/// The differential form compares the difference quotient of `J` with the
/// trapezoid average of the right side. The Duhamel form compares `J` with
/// `e^{bt}J₀ + (a/b)(e^{bt}−1) + c∫₀ᵗ e^{b(t−s)}src(s)ds`, accumulated by the
/// trapezoid rule. Each step is allowed `dt(1+b)·rhs + 3σ`, with `σ` built
/// from the recorded standard errors.
///
/// Needs the columns `t`, `mass`, `J`, `source`; `J_stderr` and
/// `source_stderr` are used when present. The exponent `α` is the one the
/// run used for `source` and is only echoed.
pub fn verify_moment_bound(diag: &DiagnosticsSeries, c: f64, alpha: f64) -> Result<Report, AnalysisError> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(AnalysisError::Refused(format!("C must be finite and nonnegative, got {c}")));
    }
    let t = diag.column("t")?;
    let mass = diag.column("mass")?;
    let j = diag.column("J")?;
    let src = diag.column("source")?;
    let zeros = vec![0.0; t.len()];
    let se_j = diag.column("J_stderr").unwrap_or_else(|_| zeros.clone());
    let se_src = diag.column("source_stderr").unwrap_or(zeros);
    if t.len() < 2 {
        return Err(AnalysisError::Refused("need at least two rows".into()));
    }
    let m = mass[0];
    let (a, b) = (c * m, c);
    let f = |n: usize| a + b * j[n] + c * src[n];
    let sigma = |n: usize| b * se_j[n] + c * se_src[n];

    // Differential form.
    let mut worst = (f64::NEG_INFINITY, 0usize, 0.0, 0.0, 0.0);
    let mut violations = 0usize;
    for n in 0..t.len() - 1 {
        let dt = t[n + 1] - t[n];
        let quotient = (j[n + 1] - j[n]) / dt;
        let rhs = 0.5 * (f(n) + f(n + 1));
        let tol = dt * (1.0 + b) * rhs.abs() + 3.0 * 0.5 * (sigma(n) + sigma(n + 1));
        let score = (quotient - rhs) - tol;
        if score > 0.0 {
            violations += 1;
        }
        if score > worst.0 {
            worst = (score, n, quotient, rhs, tol);
        }
    }
    let inputs = json!({ "C": c, "alpha": alpha, "a": a, "b": b, "mass": m, "steps": t.len() - 1, "worst_step": worst.1, "violations": violations });
    let differential = CheckItem::new("moment_differential", inputs, worst.2, worst.3, Verdict::from_bool(violations == 0), worst.4)
        .with_note("worst step: lhs dJ/dt, rhs a + bJ + c·src (trapezoid), tolerance dt(1+b)·rhs + 3σ");

    // Duhamel form.
    let t0 = t[0];
    let mut conv = 0.0;
    let mut worst = (f64::NEG_INFINITY, 0usize, 0.0, 0.0, 0.0);
    let mut violations = 0usize;
    let mut se_conv = 0.0;
    let mut envelope_end = 0.0;
    for n in 0..t.len() {
        if n > 0 {
            let dt = t[n] - t[n - 1];
            let g = (b * dt).exp();
            conv = g * conv + 0.5 * dt * (g * src[n - 1] + src[n]);
            se_conv = g * se_conv + 0.5 * dt * (g * se_src[n - 1] + se_src[n]);
        }
        let s = t[n] - t0;
        let growth = (b * s).exp();
        let forcing = if b > 0.0 { a / b * (growth - 1.0) } else { a * s };
        let envelope = growth * j[0] + forcing + c * conv;
        let dt = if n > 0 { t[n] - t[n - 1] } else { 0.0 };
        let tol = dt * (1.0 + b) * envelope.abs() + 3.0 * (se_j[n] + growth * se_j[0] + c * se_conv);
        let score = (j[n] - envelope) - tol;
        if score > 0.0 {
            violations += 1;
        }
        if score > worst.0 {
            worst = (score, n, j[n], envelope, tol);
        }
        envelope_end = envelope;
    }
    let j_end = *j.last().expect("nonempty");
    let inputs = json!({
        "C": c, "alpha": alpha, "worst_step": worst.1, "violations": violations,
        "J_end": j_end, "envelope_end": envelope_end, "tightness": j_end / envelope_end,
    });
    let duhamel = CheckItem::new("moment_duhamel", inputs, worst.2, worst.3, Verdict::from_bool(violations == 0), worst.4)
        .with_note("worst step: lhs J, rhs envelope; tightness = J/envelope at the end");
    Ok(Report::from_items("moment_bound", vec![differential, duhamel], vec![]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Column;

    fn series(t: &[f64], cols: &[(&str, Vec<f64>)]) -> DiagnosticsSeries {
        let mut names = vec![Column::new("t", "time", "")];
        names.extend(cols.iter().map(|(n, _)| Column::new(*n, "", "")));
        let mut d = DiagnosticsSeries::new(names);
        for (i, &ti) in t.iter().enumerate() {
            let mut row = vec![ti];
            row.extend(cols.iter().map(|(_, v)| v[i]));
            d.push(row).unwrap();
        }
        d
    }

    #[test]
    fn memory_integral_of_constant_and_linear() {
        let alpha = 0.4;
        let s: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let ones = vec![1.0; s.len()];
        for (t, i) in s.iter().zip(memory_integral(&s, &ones, alpha)) {
            assert!((i - t.powf(1.0 - alpha) / (1.0 - alpha)).abs() < 1e-12);
        }
        // g(s) = s: ∫₀ᵗ (t−s)^{−α}s ds = t^{2−α}/((1−α)(2−α)).
        for (t, i) in s.iter().zip(memory_integral(&s, &s, alpha)) {
            let want = t.powf(2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha));
            assert!((i - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn closure_identity_and_refusal() {
        let t = [0.0, 1.0];
        let p = 1.45;
        let q = 1.0 / (1.0 / p + 1.0 / 6.0);
        let d = series(&t, &[("rho_L1.45", vec![2.0, 2.0])]);
        let r = verify_sublinear_closure(&d, 0.5, p, q).unwrap();
        assert!(r.item("exponent_identity").unwrap().residual.unwrap().abs() <= 1e-14);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(matches!(verify_sublinear_closure(&d, 0.5, p, q + 0.1), Err(AnalysisError::Refused(_))));
        // α = 0.9 just below p = 3/2 is still inside the window.
        let p = 1.49;
        let q = 1.0 / (1.0 / p + 0.3);
        let d = series(&t, &[("rho_L1.49", vec![1.0, 1.0])]);
        let r = verify_sublinear_closure(&d, 0.9, p, q).unwrap();
        assert_eq!(r.item("sublinear_window").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn constant_moment_passes_both_forms() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let n = t.len();
        let d = series(&t, &[("mass", vec![1.0; n]), ("J", vec![0.3; n]), ("source", vec![0.5; n])]);
        let r = verify_moment_bound(&d, 0.7, 0.5).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn scalar_ode_saturates_the_envelope() {
        // J' = C(M + J + src) with src ≡ 1: J = (J0 + M + 1)e^{Ct} − M − 1.
        let (c, m, j0) = (0.4, 2.0, 0.5);
        let t: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let j: Vec<f64> = t.iter().map(|t| (j0 + m + 1.0) * (c * t).exp() - m - 1.0).collect();
        let n = t.len();
        let d = series(&t, &[("mass", vec![m; n]), ("J", j), ("source", vec![1.0; n])]);
        let r = verify_moment_bound(&d, c, 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
        let tight = r.item("moment_duhamel").unwrap().inputs["tightness"].as_f64().unwrap();
        assert!((tight - 1.0).abs() < 1e-4, "{tight}");
        // A faster-growing J violates both forms.
        let j: Vec<f64> = t.iter().map(|t| (j0 + m + 1.0) * (1.5 * c * t).exp() - m - 1.0).collect();
        let d = series(&t, &[("mass", vec![m; n]), ("J", j), ("source", vec![1.0; n])]);
        let r = verify_moment_bound(&d, c, 0.0).unwrap();
        assert_eq!(r.item("moment_differential").unwrap().verdict, Verdict::Fail);
        assert_eq!(r.item("moment_duhamel").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn missing_columns_are_refused() {
        let d = series(&[0.0, 1.0], &[("mass", vec![1.0, 1.0])]);
        assert!(verify_moment_bound(&d, 1.0, 0.5).is_err());
        assert!(verify_sublinear_closure(&d, 0.5, 2.0, 1.0 / (0.5 + 0.5 / 3.0)).is_err());
    }
}
