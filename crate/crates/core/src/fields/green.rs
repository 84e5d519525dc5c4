//! Whole-space Bessel potential `G` with `−ΔG + G = δ`.
//!
//! Kept independent of the spectral solver so the two can cross-check.

use std::f64::consts::PI;

use crate::special::{Estimate, Quadrature};

use super::FieldError;

/// Evaluates `G` at radius `r > 0`.
///
/// In 3D this is the Yukawa kernel `e^{−r}/(4πr)`. In 2D it is the integral
/// `(1/4π)∫₀^∞ e^{−πr²/s} e^{−s/4π} ds/s`, evaluated by adaptive quadrature
/// in the variable `u = ln s` to relative accuracy 1e−12.
pub fn green_function(dim: usize, r: f64) -> Result<f64, FieldError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(FieldError::NonPositiveRadius(r));
    }
    match dim {
        2 => Ok(green_function_2d_with(r, &Quadrature::with_rel_tol(1e-12)).value),
        3 => Ok((-r).exp() / (4.0 * PI * r)),
        d => Err(FieldError::UnsupportedDim(d)),
    }
}

/// The 2D integral with an explicit quadrature rule, returning the error
/// estimate as well.
pub fn green_function_2d_with(r: f64, quad: &Quadrature) -> Estimate {
    let a = PI * r * r;
    let b = 1.0 / (4.0 * PI);
    // With s = e^u: integrand exp(−a e^{−u} − b e^u), doubly-exponential decay
    // on both sides of [ln a, ln(1/b)].
    let lo = a.ln() - 7.0;
    let hi = (1.0 / b).ln() + 7.0;
    let mut est = quad.integrate(|u: f64| (-a * (-u).exp() - b * u.exp()).exp(), lo, hi);
    est.value /= 4.0 * PI;
    est.error /= 4.0 * PI;
    est
}

/// Constants of the logarithmic majorant `G(x) ≤ A + (1/2π)|ln|x||` on the
/// unit disk, with `A = A₁ + A₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBoundConstants {
    /// `(1/4π)∫₀¹ e^{−π/t} dt/t`
    pub a1: f64,
    /// `(1/4π)∫₁^∞ e^{−s/4π} ds`
    pub a2: f64,
    pub a: f64,
}

pub fn log_bound_constants() -> LogBoundConstants {
    let quad = Quadrature::with_rel_tol(1e-13);
    let a1 = quad
        .integrate(
            |t: f64| if t <= 0.0 { 0.0 } else { (-PI / t).exp() / t },
            0.0,
            1.0,
        )
        .value
        / (4.0 * PI);
    let a2 = quad
        .integrate_to_infinity(|s| (-s / (4.0 * PI)).exp(), 1.0)
        .value
        / (4.0 * PI);
    LogBoundConstants { a1, a2, a: a1 + a2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// K₀ by its power series, independent of the integral representation.
    fn bessel_k0_series(x: f64) -> f64 {
        let q = x * x / 4.0;
        let mut term = 1.0; // (x²/4)^k/(k!)²
        let mut harmonic = 0.0;
        let mut i0 = 0.0;
        let mut tail = 0.0;
        for k in 0..60 {
            if k > 0 {
                term *= q / (k as f64 * k as f64);
                harmonic += 1.0 / k as f64;
            }
            i0 += term;
            tail += term * harmonic;
        }
        -((x / 2.0).ln() + crate::special::EULER_GAMMA) * i0 + tail
    }

    #[test]
    fn three_dimensional_closed_form() {
        let g = green_function(3, 1.0).unwrap();
        assert!((g - 0.029_275_6).abs() < 1e-6);
        assert!((g - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn two_dimensional_matches_k0() {
        for r in [1e-6, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let g = green_function(2, r).unwrap();
            let oracle = bessel_k0_series(r) / (2.0 * PI);
            assert!((g - oracle).abs() / oracle < 1e-8, "r={r}: {g} vs {oracle}");
        }
    }

    #[test]
    fn small_radius_value() {
        // (1/2π)K₀(10⁻³); the integral and the series agree on 1.1178548…
        let g = green_function(2, 1e-3).unwrap();
        assert!((g - 1.117_854_8).abs() < 1e-6, "{g}");
    }

    #[test]
    fn decays_at_large_radius() {
        assert!(green_function(2, 10.0).unwrap() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(green_function(2, 0.0).is_err());
        assert!(green_function(3, -1.0).is_err());
        assert!(green_function(4, 1.0).is_err());
    }

    #[test]
    fn log_bound_constants_values() {
        let c = log_bound_constants();
        assert!((c.a2 - (-1.0 / (4.0 * PI)).exp()).abs() < 1e-13);
        // A₁ = E₁(π)/(4π), E₁(π) = 0.010906300899…
        assert!((c.a1 - 0.010_906_300_899_274 / (4.0 * PI)).abs() < 1e-14, "{}", c.a1);
    }
}
