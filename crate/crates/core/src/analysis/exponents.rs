//! Scalar checks: Γ and Stirling, the root test of the series for the
//! growth bound, and the Strichartz exponent algebra.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnalysisError, CheckItem, Report, Verdict};
use crate::fields::log_bound_constants;
use crate::special::{gamma, ln_gamma, ln_stirling};

/// Margin `δ` below or above 1 for a root-test verdict.
pub const ROOT_TEST_DELTA: f64 = 0.02;
/// Tolerance on the limit of the root-test ratio when `β = 1`.
pub const ROOT_LIMIT_TOL: f64 = 1e-3;
pub const STRICHARTZ_TOL: f64 = 1e-12;

/// `n!/(√(2πn)(n/e)ⁿ)`.
pub fn stirling_ratio(n: u64) -> f64 {
    (ln_gamma(n as f64 + 1.0) - ln_stirling(n as f64)).exp()
}

pub fn gamma_stirling_checks(x_grid: &[f64], beta_grid: &[f64], n_max: u64) -> Result<Report, AnalysisError> {
    if x_grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) || beta_grid.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
        return Err(AnalysisError::Refused("x must be positive and β nonnegative".into()));
    }
    if n_max < 2 {
        return Err(AnalysisError::Refused("n_max must be at least 2".into()));
    }
    let mut items = Vec::new();
    for &x in x_grid {
        for &beta in beta_grid {
            // Compared in log space: β ln x − ln Γ(β+1) < x.
            let ln_rhs = beta * x.ln() - ln_gamma(beta + 1.0);
            items.push(
                CheckItem::new("exp_dominates_power", json!({ "x": x, "beta": beta }), x.exp(), ln_rhs.exp(), Verdict::from_bool(ln_rhs < x), 0.0)
                    .with_ratio((ln_rhs - x).exp())
                    .with_note("lhs e^x, rhs x^β/Γ(β+1); ratio rhs/lhs must stay below 1"),
            );
        }
    }

    let ratios: Vec<f64> = (2..=n_max).map(stirling_ratio).collect();
    let worst_rise = ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    items.push(
        CheckItem::new("stirling_monotone", json!({ "n_max": n_max }), worst_rise, 0.0, Verdict::from_bool(worst_rise <= 1e-12), 1e-12)
            .with_ratio(f64::NAN)
            .with_note("lhs: largest increase of the ratio between consecutive n"),
    );
    items.push(
        CheckItem::new(
            "stirling_window",
            json!({ "n_max": n_max, "min": lo, "ratio_at_10": stirling_ratio(10) }),
            hi,
            1.10,
            Verdict::from_bool(lo >= 1.0 && hi <= 1.10),
            0.0,
        )
        .with_note("lhs: largest ratio over [2, n_max]; all ratios must lie in [1, 1.10]"),
    );

    let mut fact = 1.0f64;
    let mut worst = 0.0f64;
    for n in 1..=n_max.min(170) {
        fact *= n as f64;
        worst = worst.max((gamma(n as f64 + 1.0) / fact - 1.0).abs());
    }
    items.push(
        CheckItem::new("gamma_factorials", json!({ "n_max": n_max.min(170) }), worst, 1e-13, Verdict::from_bool(worst <= 1e-13), 1e-13)
            .with_note("largest relative error of Γ(n+1) against n!"),
    );
    Ok(Report::from_items("gamma_stirling", items, vec![]))
}

/// Terms of the series `Σ (1/j!)(Aπ^{1/μj} + (1/2π)(2π)^{1/μj}Γ(μj+1)^{1/μj})^{jβ} M^{jβ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTerms {
    /// `ln a_j` for `j = 1..=j_max`.
    pub ln_terms: Vec<f64>,
    /// `ln S_J` for `J = 1..=j_max`.
    pub ln_partial_sums: Vec<f64>,
    /// `a_j^{1/j}`.
    pub ratios: Vec<f64>,
}

pub fn series_terms(beta: f64, mu: f64, m: f64, j_max: usize) -> SeriesTerms {
    let a = log_bound_constants().a;
    let mut ln_terms = Vec::with_capacity(j_max);
    let mut ln_partial_sums = Vec::with_capacity(j_max);
    let mut ratios = Vec::with_capacity(j_max);
    let mut acc = f64::NEG_INFINITY;
    for j in 1..=j_max {
        let jf = j as f64;
        let e = 1.0 / (mu * jf);
        let inner = a * PI.powf(e) + (2.0 * PI).powf(e) * (ln_gamma(mu * jf + 1.0) * e).exp() / (2.0 * PI);
        let ln_a = -ln_gamma(jf + 1.0) + jf * beta * (inner.ln() + m.ln());
        acc = if acc == f64::NEG_INFINITY {
            ln_a
        } else {
            let (hi, lo) = if acc > ln_a { (acc, ln_a) } else { (ln_a, acc) };
            hi + (lo - hi).exp().ln_1p()
        };
        ln_terms.push(ln_a);
        ln_partial_sums.push(acc);
        ratios.push((ln_a / jf).exp());
    }
    SeriesTerms {
        ln_terms,
        ln_partial_sums,
        ratios,
    }
}

/// Root test on the series: CONVERGENT if `a_j^{1/j}` stays below `1 − δ`
/// over `[j_max/2, j_max]`, DIVERGENT if it stays above `1 + δ`, otherwise
/// INCONCLUSIVE. For `β = 1` the ratio's limit is also compared with `Mμ/2π`.
pub fn series_convergence_probe(beta: f64, mu: f64, m: f64, j_max: usize) -> Result<Report, AnalysisError> {
    if !(beta > 0.0 && beta <= 1.0) || !(mu > 2.0) || !(m > 0.0) || j_max < 4 {
        return Err(AnalysisError::Refused(format!(
            "need β ∈ (0,1], μ > 2, M > 0, j_max ≥ 4; got β={beta}, μ={mu}, M={m}, j_max={j_max}"
        )));
    }
    let terms = series_terms(beta, mu, m, j_max);
    let window = &terms.ratios[j_max / 2 - 1..];
    let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let verdict = if hi < 1.0 - ROOT_TEST_DELTA {
        Verdict::Convergent
    } else if lo > 1.0 + ROOT_TEST_DELTA {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    };
    let last = *terms.ratios.last().expect("j_max ≥ 4");
    let inputs = json!({ "beta": beta, "mu": mu, "M": m, "j_max": j_max });
    let limit_item = if beta == 1.0 {
        let predicted = m * mu / (2.0 * PI);
        CheckItem::new("root_test_limit", inputs.clone(), last, predicted, Verdict::from_bool((last - predicted).abs() <= ROOT_LIMIT_TOL), ROOT_LIMIT_TOL)
            .with_residual(last - predicted)
    } else {
        // The limit is 0; require a decreasing trend over the window.
        let mid = window[0];
        CheckItem::new("root_test_limit", inputs.clone(), last, 0.0, Verdict::from_bool(last < mid), ROOT_LIMIT_TOL)
            .with_ratio(last / mid)
            .with_note("limit 0 for β < 1; ratio compares a_j^{1/j} at j_max with j_max/2")
    };
    let ln_sum = *terms.ln_partial_sums.last().expect("j_max ≥ 4");
    let verdict_item = CheckItem::new(
        "root_test",
        json!({ "beta": beta, "mu": mu, "M": m, "j_max": j_max, "window_min": lo, "ln_partial_sum": ln_sum }),
        hi,
        1.0 - ROOT_TEST_DELTA,
        verdict,
        ROOT_TEST_DELTA,
    )
    .with_note("lhs: largest a_j^{1/j} over [j_max/2, j_max]");
    let overall = if limit_item.verdict.is_failure() { Verdict::Fail } else { verdict };
    Ok(Report {
        check: "series_convergence".into(),
        verdict: overall,
        items: vec![limit_item, verdict_item],
        warnings: vec![],
    })
}

/// Exponents `(q, p, r, a)` of a space–time estimate for transport in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrichartzTuple {
    pub q: f64,
    #[serde(with = "super::exponent")]
    pub p: f64,
    pub r: f64,
    pub a: f64,
}

impl StrichartzTuple {
    /// `q = 1+√2, p = (9+3√2)/7, r = 3(√2−1), a = 3/2`.
    pub fn critical() -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            q: 1.0 + s,
            p: (9.0 + 3.0 * s) / 7.0,
            r: 3.0 * (s - 1.0),
            a: 1.5,
        }
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// Hölder conjugate, with `1′ = ∞` and `∞′ = 1`.
fn conj(x: f64) -> f64 {
    if x.is_infinite() {
        1.0
    } else if x == 1.0 {
        f64::INFINITY
    } else {
        x / (x - 1.0)
    }
}

/// Evaluates each exponent constraint and reports its residual.
pub fn strichartz_exponent_check(t: &StrichartzTuple) -> Report {
    let StrichartzTuple { q, p, r, a } = *t;
    let (ip, ir) = (recip(p), recip(r));
    let inputs = json!({ "q": q, "p": if p.is_infinite() { json!("inf") } else { json!(p) }, "r": r, "a": a });
    let tol = STRICHARTZ_TOL;
    // (name, lhs, rhs, satisfied)
    let inequality = |name: &str, lhs: f64, rhs: f64, ok: bool| {
        CheckItem::new(name, inputs.clone(), lhs, rhs, Verdict::from_bool(ok), tol).with_residual(lhs - rhs)
    };
    let identity = |name: &str, lhs: f64, rhs: f64| {
        let res = lhs - rhs;
        CheckItem::new(name, inputs.clone(), lhs, rhs, Verdict::from_bool(res.abs() <= tol), tol).with_residual(res)
    };
    let pc = conj(p);
    let rc = conj(r);
    let qc = conj(q);
    let items = vec![
        inequality("r_at_least_1", r, 1.0, r >= 1.0 - tol),
        inequality("r_at_most_p", r, p, r <= p + tol),
        inequality("gap_nonnegative", ir - ip, 0.0, ir - ip >= -tol),
        inequality("gap_below_third", ir - ip, 1.0 / 3.0, ir - ip < 1.0 / 3.0),
        inequality("reciprocal_sum_at_least_1", ir + ip, 1.0, ir + ip >= 1.0 - tol),
        identity("scaling", 2.0 * recip(q), 3.0 * (ir - ip)),
        identity("a_harmonic_mean", a, 2.0 / (ip + ir)),
        inequality("p_above_3_2", p, 1.5, p > 1.5),
        identity("time_exponent", qc * (1.0 + pc * recip(rc)), q),
        identity("critical_sum", ip + ir, 4.0 / 3.0),
    ];
    Report::from_items("strichartz_exponents", items, vec![])
}
