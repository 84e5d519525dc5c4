//! Goodness-of-fit tests for the tumbling process.

use std::f64::consts::PI;

use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{AnalysisError, CheckItem, Report, Verdict};
use crate::fields::Point;
use crate::particles::TumbleEvent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2Σ_{k≥1}(−1)^{k−1}e^{−2k²x²}`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; Q is 1 to machine
        // precision below this point.
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against `Exp(λ)`, with the p-value
/// from the asymptotic distribution of `(√n + 0.12 + 0.11/√n)D`.
pub fn ks_exponential(samples: &[f64], lambda: f64) -> Result<TestResult, AnalysisError> {
    if samples.is_empty() || !(lambda > 0.0) {
        return Err(AnalysisError::Refused("need samples and λ > 0".into()));
    }
    let mut xs = samples.to_vec();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::Refused("non-finite sample".into()));
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-lambda * x.max(0.0)).exp();
            (cdf - i as f64 / n).max((i as f64 + 1.0) / n - cdf)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
        n: xs.len(),
    })
}

/// Pearson chi-square test of uniformity of unit directions.
///
/// In 2D the angle is binned; in 3D the `z` component, which is uniform on
/// `[−1, 1]` for isotropic directions.
pub fn chi_square_directions(dirs: &[Point], dim: usize, bins: usize) -> Result<TestResult, AnalysisError> {
    if bins < 2 || dirs.len() < 5 * bins {
        return Err(AnalysisError::Refused(format!("need at least {} directions for {bins} bins", 5 * bins)));
    }
    let mut counts = vec![0u64; bins];
    for v in dirs {
        let u = match dim {
            2 => (v[1].atan2(v[0]) + PI) / (2.0 * PI),
            3 => (v[2] + 1.0) / 2.0,
            d => return Err(AnalysisError::Refused(format!("directions in dim {d} not supported"))),
        };
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = dirs.len() as f64 / bins as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: stat,
        p_value: dist.sf(stat),
        n: dirs.len(),
    })
}

/// KS on inter-tumble intervals and chi-square on post-tumble directions,
/// each at significance `level`.
pub fn verify_tumble_statistics(events: &[TumbleEvent], lambda: f64, dim: usize, bins: usize, level: f64) -> Result<Report, AnalysisError> {
    let intervals: Vec<f64> = events.iter().map(|e| e.interval).filter(|x| !x.is_nan()).collect();
    let dirs: Vec<Point> = events.iter().map(|e| e.velocity).collect();
    let ks = ks_exponential(&intervals, lambda)?;
    let chi = chi_square_directions(&dirs, dim, bins)?;
    let items = vec![
        CheckItem::new(
            "ks_exponential",
            json!({ "lambda": lambda, "n": ks.n, "D": ks.statistic }),
            ks.p_value,
            level,
            Verdict::from_bool(ks.p_value >= level),
            level,
        )
        .with_note("lhs: p-value; rejects at p < level"),
        CheckItem::new(
            "chi_square_directions",
            json!({ "bins": bins, "n": chi.n, "chi2": chi.statistic, "dim": dim }),
            chi.p_value,
            level,
            Verdict::from_bool(chi.p_value >= level),
            level,
        )
        .with_note("lhs: p-value; rejects at p < level"),
    ];
    Ok(Report::from_items("tumble_statistics", items, vec![]))
}
