//! Turning-kernel families `T[S](t, x, v, v′)`.
//!
//! Each family is a growth hypothesis on the rate at which a cell moving with
//! `v′` switches to `v`. The simulator uses the saturated form of every
//! bound, so runs exercise the largest rate the hypothesis admits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{ChemState, Point};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel {kernel} needs the {field} field, which the chemical state does not carry")]
    MissingField {
        kernel: &'static str,
        field: &'static str,
    },
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    0.1
}

/// The decreasing response `ψ` of the directional-derivative kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiSpec {
    /// `ψ(η) = 1` for `η < 0`, else `0`.
    HardStep,
    /// `ψ(η) = 1/(1 + e^{kη})`.
    SmoothStep { steepness: f64 },
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec::SmoothStep { steepness: 20.0 }
    }
}

impl PsiSpec {
    pub fn eval(&self, eta: f64) -> f64 {
        match *self {
            PsiSpec::HardStep => {
                if eta < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PsiSpec::SmoothStep { steepness } => {
                let z = steepness * eta;
                // Stable on both tails.
                if z > 0.0 {
                    let e = (-z).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + z.exp())
                }
            }
        }
    }

    fn validate(&self) -> Result<(), KernelError> {
        if let PsiSpec::SmoothStep { steepness } = *self {
            if !(steepness > 0.0 && steepness.is_finite()) {
                return Err(KernelError::InvalidParameter(format!(
                    "psi steepness must be positive, got {steepness}"
                )));
            }
        }
        // Range and monotonicity on a sample sweep.
        let mut prev = f64::INFINITY;
        for i in -200..=200 {
            let eta = i as f64 * 0.05;
            let v = self.eval(eta);
            if !(0.0..=1.0).contains(&v) || v > prev {
                return Err(KernelError::InvalidParameter(format!(
                    "psi must be nonnegative, bounded by 1 and nonincreasing (fails at {eta})"
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Which delocalized terms enter `1 + S(x−εv′) + |∇S|(x−εv′) + S(x+εv) + |∇S|(x+εv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelocalizedTerms {
    #[serde(default)]
    pub s_behind: bool,
    #[serde(default)]
    pub grad_behind: bool,
    #[serde(default)]
    pub s_ahead: bool,
    #[serde(default)]
    pub grad_ahead: bool,
}

/// Symmetric kernel `g(x, |v − v′|) = (base + slope·|v − v′|)(1 + chem_weight·S(x)⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricProfile {
    #[serde(default = "one")]
    pub base: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub chem_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Constant {
        c0: f64,
    },
    /// `C(1 + S(t,x))`
    PointwiseLinear {
        #[serde(default = "one")]
        c: f64,
    },
    /// `C(1 + ‖S‖∞^α)`
    SupPower {
        #[serde(default = "one")]
        c: f64,
        alpha: f64,
    },
    /// `C(1 + exp(‖S‖∞^β))`
    ExpGrowth {
        #[serde(default = "one")]
        c: f64,
        beta: f64,
    },
    /// `C(1 + ‖S‖_{Lʳ}^α)`
    LrPower {
        #[serde(default = "one")]
        c: f64,
        r: f64,
        alpha: f64,
    },
    Delocalized {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        terms: DelocalizedTerms,
    },
    /// `T₀ + ψ(∂ₜS + v′·∇S)`
    DirectionalDerivative {
        t0: f64,
        #[serde(default)]
        psi: PsiSpec,
    },
    Symmetric {
        g: SymmetricProfile,
    },
}

fn nonneg(name: &str, v: f64) -> Result<(), KernelError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {v}"
        )))
    }
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Constant { .. } => "constant",
            KernelSpec::PointwiseLinear { .. } => "pointwise_linear",
            KernelSpec::SupPower { .. } => "sup_power",
            KernelSpec::ExpGrowth { .. } => "exp_growth",
            KernelSpec::LrPower { .. } => "lr_power",
            KernelSpec::Delocalized { .. } => "delocalized",
            KernelSpec::DirectionalDerivative { .. } => "directional_derivative",
            KernelSpec::Symmetric { .. } => "symmetric",
        }
    }

    /// Checks parameter ranges. In strict mode an `LrPower` kernel with
    /// `r > 3` must satisfy `0 < α < r/(r−3)`.
    pub fn validate(&self, strict: bool) -> Result<(), KernelError> {
        match *self {
            KernelSpec::Constant { c0 } => nonneg("c0", c0),
            KernelSpec::PointwiseLinear { c } => nonneg("c", c),
            KernelSpec::SupPower { c, alpha } => {
                nonneg("c", c)?;
                nonneg("alpha", alpha)
            }
            KernelSpec::ExpGrowth { c, beta } => {
                nonneg("c", c)?;
                nonneg("beta", beta)
            }
            KernelSpec::LrPower { c, r, alpha } => {
                nonneg("c", c)?;
                nonneg("alpha", alpha)?;
                if !(r >= 1.0 && r.is_finite()) {
                    return Err(KernelError::InvalidParameter(format!(
                        "r must be a finite exponent ≥ 1, got {r}"
                    )));
                }
                if strict && r > 3.0 {
                    let limit = r / (r - 3.0);
                    if !(alpha > 0.0 && alpha < limit) {
                        return Err(KernelError::InvalidParameter(format!(
                            "alpha = {alpha} outside the open window (0, {limit}) for r = {r}"
                        )));
                    }
                }
                Ok(())
            }
            KernelSpec::Delocalized { c, eps, .. } => {
                nonneg("c", c)?;
                nonneg("eps", eps)
            }
            KernelSpec::DirectionalDerivative { t0, psi } => {
                nonneg("t0", t0)?;
                psi.validate()
            }
            KernelSpec::Symmetric { g } => {
                nonneg("base", g.base)?;
                nonneg("slope", g.slope)?;
                nonneg("chem_weight", g.chem_weight)
            }
        }
    }

    /// True when the rate depends on neither `v` nor `v′`.
    pub fn is_velocity_independent(&self) -> bool {
        matches!(
            self,
            KernelSpec::Constant { .. }
                | KernelSpec::PointwiseLinear { .. }
                | KernelSpec::SupPower { .. }
                | KernelSpec::ExpGrowth { .. }
                | KernelSpec::LrPower { .. }
        )
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, KernelSpec::Symmetric { .. }) || self.is_velocity_independent()
    }

    /// Precomputes the norms of `S` the family needs.
    pub fn evaluator<'a>(&'a self, chem: &'a ChemState) -> Result<KernelEvaluator<'a>, KernelError> {
        if let KernelSpec::DirectionalDerivative { .. } = self {
            if chem.dt_s.is_none() {
                return Err(KernelError::MissingField {
                    kernel: "directional_derivative",
                    field: "dt_s",
                });
            }
        }
        let s_max = chem.s.max().max(0.0);
        let s_sup = chem.s.sup_norm();
        let grad_max = match self {
            KernelSpec::Delocalized { .. } => chem.grad_s.max_magnitude(),
            _ => 0.0,
        };
        let uniform = match *self {
            KernelSpec::Constant { c0 } => Some(c0),
            KernelSpec::SupPower { c, alpha } => Some(c * (1.0 + s_sup.powf(alpha))),
            KernelSpec::ExpGrowth { c, beta } => Some(c * (1.0 + s_sup.powf(beta).exp())),
            KernelSpec::LrPower { c, r, alpha } => Some(c * (1.0 + chem.s.lp_norm(r).powf(alpha))),
            _ => None,
        };
        Ok(KernelEvaluator {
            spec: self,
            chem,
            uniform,
            s_max,
            grad_max,
        })
    }
}

/// A kernel bound to one chemical state.
pub struct KernelEvaluator<'a> {
    spec: &'a KernelSpec,
    chem: &'a ChemState,
    uniform: Option<f64>,
    s_max: f64,
    grad_max: f64,
}

fn shifted(x: Point, v: Point, eps: f64) -> Point {
    [x[0] + eps * v[0], x[1] + eps * v[1], x[2] + eps * v[2]]
}

fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl KernelEvaluator<'_> {
    pub fn spec(&self) -> &KernelSpec {
        self.spec
    }

    pub(crate) fn chem(&self) -> &ChemState {
        self.chem
    }

    /// The `x`-independent rate of the sup/Lʳ families, if any.
    pub fn uniform_rate(&self) -> Option<f64> {
        self.uniform
    }

    /// Rate of switching from `v_prime` to `v` at `x`.
    pub fn rate(&self, x: Point, v: Point, v_prime: Point) -> f64 {
        if let Some(r) = self.uniform {
            return r;
        }
        let chem = self.chem;
        match *self.spec {
            KernelSpec::PointwiseLinear { c } => c * (1.0 + chem.s.sample(x)).max(0.0),
            KernelSpec::Delocalized { c, eps, terms } => {
                let mut acc = 1.0;
                if terms.s_behind || terms.grad_behind {
                    let p = shifted(x, v_prime, -eps);
                    if terms.s_behind {
                        acc += chem.s.sample(p);
                    }
                    if terms.grad_behind {
                        acc += norm(chem.grad_s.sample(p));
                    }
                }
                if terms.s_ahead || terms.grad_ahead {
                    let p = shifted(x, v, eps);
                    if terms.s_ahead {
                        acc += chem.s.sample(p);
                    }
                    if terms.grad_ahead {
                        acc += norm(chem.grad_s.sample(p));
                    }
                }
                c * acc.max(0.0)
            }
            KernelSpec::DirectionalDerivative { t0, psi } => {
                let dt_s = chem
                    .dt_s
                    .as_ref()
                    .expect("evaluator checked dt_s presence");
                let grad = chem.grad_s.sample(x);
                let eta = dt_s.sample(x)
                    + v_prime[0] * grad[0]
                    + v_prime[1] * grad[1]
                    + v_prime[2] * grad[2];
                t0 + psi.eval(eta)
            }
            KernelSpec::Symmetric { g } => {
                let d = norm([v[0] - v_prime[0], v[1] - v_prime[1], v[2] - v_prime[2]]);
                (g.base + g.slope * d) * (1.0 + g.chem_weight * chem.s.sample(x).max(0.0))
            }
            // Uniform families returned above.
            _ => unreachable!("uniform kernel without precomputed rate"),
        }
    }

    /// The velocity-independent majorant `T[S](t)` of the hypothesis,
    /// taken as a supremum over `x`. Velocities are assumed to satisfy
    /// `|v| ≤ 1`.
    pub fn bound(&self) -> f64 {
        if let Some(r) = self.uniform {
            return r;
        }
        match *self.spec {
            KernelSpec::PointwiseLinear { c } => c * (1.0 + self.s_max),
            KernelSpec::Delocalized { c, terms, .. } => {
                let s_terms = terms.s_behind as u8 + terms.s_ahead as u8;
                let g_terms = terms.grad_behind as u8 + terms.grad_ahead as u8;
                c * (1.0 + s_terms as f64 * self.s_max + g_terms as f64 * self.grad_max)
            }
            KernelSpec::DirectionalDerivative { t0, .. } => t0 + 1.0,
            KernelSpec::Symmetric { g } => {
                (g.base + 2.0 * g.slope) * (1.0 + g.chem_weight * self.s_max)
            }
            _ => unreachable!("uniform kernel without precomputed rate"),
        }
    }
}

pub fn eval_turning_rate(
    spec: &KernelSpec,
    chem: &ChemState,
    x: Point,
    v: Point,
    v_prime: Point,
) -> Result<f64, KernelError> {
    Ok(spec.evaluator(chem)?.rate(x, v, v_prime))
}

pub fn hypothesis_bound(spec: &KernelSpec, chem: &ChemState) -> Result<f64, KernelError> {
    Ok(spec.evaluator(chem)?.bound())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PeriodicGrid, ScalarField};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(2, 32, 4.0).unwrap()
    }

    fn mode_state(amp: f64) -> ChemState {
        let g = grid();
        let k = 2.0 * PI / g.length();
        let s = ScalarField::from_fn(g, |x| 1.0 + amp * (k * x[0]).cos() * (k * x[1]).sin());
        let dt_s = ScalarField::from_fn(g, |x| 0.3 * (k * x[1]).cos());
        ChemState::from_field(s, Some(dt_s), 0.0).unwrap()
    }

    fn all_specs() -> Vec<KernelSpec> {
        let all = DelocalizedTerms {
            s_behind: true,
            grad_behind: true,
            s_ahead: true,
            grad_ahead: true,
        };
        vec![
            KernelSpec::Constant { c0: 2.0 },
            KernelSpec::PointwiseLinear { c: 1.5 },
            KernelSpec::SupPower { c: 1.0, alpha: 2.0 },
            KernelSpec::ExpGrowth { c: 1.0, beta: 0.5 },
            KernelSpec::LrPower { c: 1.0, r: 6.0, alpha: 1.5 },
            KernelSpec::Delocalized { c: 1.0, eps: 0.1, terms: all },
            KernelSpec::DirectionalDerivative { t0: 1.0, psi: PsiSpec::HardStep },
            KernelSpec::DirectionalDerivative { t0: 0.5, psi: PsiSpec::default() },
            KernelSpec::Symmetric {
                g: SymmetricProfile { base: 1.0, slope: 0.5, chem_weight: 0.3 },
            },
        ]
    }

    #[test]
    fn exp_growth_at_zero_field() {
        let s = ChemState::from_field(ScalarField::zeros(grid()), None, 0.0).unwrap();
        let spec = KernelSpec::ExpGrowth { c: 1.0, beta: 1.0 };
        let r = eval_turning_rate(&spec, &s, [0.3, 0.2, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r, 2.0);
    }

    #[test]
    fn sup_power_bound() {
        let s = ChemState::from_field(ScalarField::constant(grid(), 3.0), None, 0.0).unwrap();
        let spec = KernelSpec::SupPower { c: 2.0, alpha: 1.0 };
        assert_eq!(hypothesis_bound(&spec, &s).unwrap(), 8.0);
        let c = KernelSpec::Constant { c0: 5.0 };
        assert_eq!(hypothesis_bound(&c, &mode_state(0.7)).unwrap(), 5.0);
    }

    #[test]
    fn directional_derivative_hard_step() {
        // S = 0.5·x₁ locally (a single mode is not affine, so use ∂ₜS instead):
        // ∂ₜS = 0.5, ∇S = 0 ⇒ η = +0.5 ⇒ ψ = 0.
        let g = grid();
        let s = ChemState::from_field(
            ScalarField::constant(g, 1.0),
            Some(ScalarField::constant(g, 0.5)),
            0.0,
        )
        .unwrap();
        let spec = KernelSpec::DirectionalDerivative { t0: 1.0, psi: PsiSpec::HardStep };
        let r = eval_turning_rate(&spec, &s, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, 1.0);
        let neg = ChemState::from_field(
            ScalarField::constant(g, 1.0),
            Some(ScalarField::constant(g, -0.5)),
            0.0,
        )
        .unwrap();
        let r = eval_turning_rate(&spec, &neg, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, 2.0);
    }

    #[test]
    fn directional_derivative_requires_time_derivative() {
        let s = ChemState::from_field(ScalarField::zeros(grid()), None, 0.0).unwrap();
        let spec = KernelSpec::DirectionalDerivative { t0: 1.0, psi: PsiSpec::HardStep };
        assert_eq!(
            eval_turning_rate(&spec, &s, [0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(KernelError::MissingField {
                kernel: "directional_derivative",
                field: "dt_s"
            })
        );
    }

    #[test]
    fn delocalized_samples_behind() {
        let g = grid();
        let k = 2.0 * PI / g.length();
        let s = ScalarField::from_fn(g, |x| 0.5 * (k * x[0]).cos());
        let chem = ChemState::from_field(s, None, 0.0).unwrap();
        let spec = KernelSpec::Delocalized {
            c: 1.0,
            eps: 0.1,
            terms: DelocalizedTerms {
                s_behind: true,
                grad_behind: false,
                s_ahead: false,
                grad_ahead: false,
            },
        };
        let x = [1.37, 2.11, 0.0];
        let vp = [0.6, 0.8, 0.0];
        let r = eval_turning_rate(&spec, &chem, x, [1.0, 0.0, 0.0], vp).unwrap();
        let exact = 1.0 + 0.5 * (k * (x[0] - 0.1 * vp[0])).cos();
        let h = g.spacing();
        assert!((r - exact).abs() <= 0.5 * k * k * h * h / 8.0 + 1e-14, "{r} vs {exact}");
    }

    #[test]
    fn lr_power_strict_window() {
        let at = |alpha| KernelSpec::LrPower { c: 1.0, r: 6.0, alpha }.validate(true);
        assert!(at(2.0).is_err());
        assert!(at(1.99).is_ok());
        assert!(KernelSpec::LrPower { c: 1.0, r: 6.0, alpha: 2.0 }.validate(false).is_ok());
        assert!(KernelSpec::LrPower { c: 1.0, r: 2.0, alpha: 50.0 }.validate(true).is_ok());
        assert!(KernelSpec::Constant { c0: -1.0 }.validate(false).is_err());
    }

    #[test]
    fn hard_step_is_monotone() {
        let psi = PsiSpec::HardStep;
        for i in -50..50 {
            let a = i as f64 * 0.1;
            assert!(psi.eval(a) >= psi.eval(a + 0.1));
        }
        assert!(psi.validate().is_ok());
        assert!(PsiSpec::default().validate().is_ok());
        assert!(PsiSpec::SmoothStep { steepness: -1.0 }.validate().is_err());
    }

    #[test]
    fn serde_roundtrip_keeps_defaults() {
        let spec: KernelSpec = serde_json::from_str(r#"{"kind":"directional_derivative","t0":1.0}"#).unwrap();
        assert_eq!(
            spec,
            KernelSpec::DirectionalDerivative { t0: 1.0, psi: PsiSpec::SmoothStep { steepness: 20.0 } }
        );
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    fn unit(theta: f64) -> Point {
        [theta.cos(), theta.sin(), 0.0]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rate_is_dominated_by_bound(
            idx in 0usize..9,
            x0 in 0.0f64..4.0, x1 in 0.0f64..4.0,
            a in 0.0f64..6.3, b in 0.0f64..6.3, amp in 0.0f64..0.9,
        ) {
            let chem = mode_state(amp);
            let spec = &all_specs()[idx];
            let ev = spec.evaluator(&chem).unwrap();
            let r = ev.rate([x0, x1, 0.0], unit(a), unit(b));
            prop_assert!(r >= 0.0);
            prop_assert!(r <= ev.bound() + 1e-10, "{} > {}", r, ev.bound());
        }

        #[test]
        fn symmetric_kernel_is_symmetric(
            x0 in 0.0f64..4.0, x1 in 0.0f64..4.0, a in 0.0f64..6.3, b in 0.0f64..6.3,
        ) {
            let chem = mode_state(0.5);
            let spec = KernelSpec::Symmetric {
                g: SymmetricProfile { base: 0.2, slope: 1.3, chem_weight: 0.7 },
            };
            let ev = spec.evaluator(&chem).unwrap();
            let x = [x0, x1, 0.0];
            prop_assert_eq!(ev.rate(x, unit(a), unit(b)), ev.rate(x, unit(b), unit(a)));
        }
    }
}
