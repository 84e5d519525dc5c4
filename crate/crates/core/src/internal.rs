//! Internal cell dynamics `dy/dt = G(y, S)` and the tumbling rate `λ[y]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{Column, DiagnosticsSeries};

pub type State = [f64; 2];

#[derive(Debug, Error, PartialEq)]
pub enum InternalError {
    #[error("invalid internal-model parameter: {0}")]
    InvalidParameter(String),
    #[error("step {dt} exceeds the stiffness limit {max}")]
    StepTooLarge { dt: f64, max: f64 },
}

/// Signal transduction `h(S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HSpec {
    /// `S/(1+S)`
    Saturating,
    /// `S^α`, `0 ≤ α < 1`
    PowerCap { alpha: f64 },
}

impl HSpec {
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match *self {
            HSpec::Saturating => s / (1.0 + s),
            HSpec::PowerCap { alpha } => s.powf(alpha),
        }
    }

    /// Exponent `α` with `h(S) ≤ 1 + S^α`.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            HSpec::Saturating => 0.0,
            HSpec::PowerCap { alpha } => alpha,
        }
    }

    fn validate(&self) -> Result<(), InternalError> {
        if let HSpec::PowerCap { alpha } = *self {
            if !(0.0..1.0).contains(&alpha) {
                return Err(InternalError::InvalidParameter(format!(
                    "power-cap exponent must lie in [0, 1), got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

fn fhn_q() -> [f64; 4] {
    // u(u − 1)(u − 0.2) = u³ − 1.2u² + 0.2u, lowest degree first.
    [0.0, 0.2, -1.2, 1.0]
}

fn saturating() -> HSpec {
    HSpec::Saturating
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InternalModel {
    /// `G ≡ 0`.
    Inert,
    /// `y₁′ = (h − y₁ − y₂)/τₑ`, `y₂′ = (h − y₂)/τₐ`
    LinearExcAdapt {
        tau_e: f64,
        tau_a: f64,
        #[serde(default = "saturating")]
        h: HSpec,
    },
    /// `y₁ = (h − y₂)₊`, `y₂′ = (h − y₂)/τₐ`
    AlgebraicExcAdapt {
        tau_a: f64,
        #[serde(default = "saturating")]
        h: HSpec,
    },
    /// `y₁′ = (h − q(y₁) − y₂)/τₑ`, `y₂′ = (h + y₁ − y₂)/τₐ`
    Fhn {
        tau_e: f64,
        tau_a: f64,
        /// Cubic coefficients of `q`, lowest degree first.
        #[serde(default = "fhn_q")]
        q: [f64; 4],
        #[serde(default = "saturating")]
        h: HSpec,
    },
    /// `G = rate·(1 + |y| + S^α)·y/|y|`: the largest field the growth
    /// hypothesis admits, pointing outward.
    RadialGrowth { rate: f64, alpha: f64 },
}

/// Constants `C, α` with `|G(y, S)| ≤ C(1 + |y| + S^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub c: f64,
    pub alpha: f64,
}

/// `S` along one step: values at the start, midpoint and end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SPath {
    pub start: f64,
    pub mid: f64,
    pub end: f64,
}

impl SPath {
    pub fn constant(s: f64) -> Self {
        Self {
            start: s,
            mid: s,
            end: s,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), InternalError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(InternalError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn excitable(tau_e: f64, tau_a: f64) -> Result<(), InternalError> {
    positive("tau_e", tau_e)?;
    positive("tau_a", tau_a)?;
    if tau_a / tau_e < 10.0 {
        return Err(InternalError::InvalidParameter(format!(
            "excitable regime needs tau_a/tau_e ≥ 10, got {}",
            tau_a / tau_e
        )));
    }
    Ok(())
}

fn cubic(q: &[f64; 4], u: f64) -> f64 {
    ((q[3] * u + q[2]) * u + q[1]) * u + q[0]
}

fn cubic_derivative(q: &[f64; 4], u: f64) -> f64 {
    (3.0 * q[3] * u + 2.0 * q[2]) * u + q[1]
}

impl InternalModel {
    pub fn validate(&self) -> Result<(), InternalError> {
        match self {
            InternalModel::Inert => Ok(()),
            InternalModel::LinearExcAdapt { tau_e, tau_a, h } => {
                excitable(*tau_e, *tau_a)?;
                h.validate()
            }
            InternalModel::AlgebraicExcAdapt { tau_a, h } => {
                positive("tau_a", *tau_a)?;
                h.validate()
            }
            InternalModel::Fhn { tau_e, tau_a, q, h } => {
                excitable(*tau_e, *tau_a)?;
                if q.iter().any(|c| !c.is_finite()) {
                    return Err(InternalError::InvalidParameter("q coefficients must be finite".into()));
                }
                h.validate()
            }
            InternalModel::RadialGrowth { rate, alpha } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(InternalError::InvalidParameter(format!("rate must be ≥ 0, got {rate}")));
                }
                if !(0.0..1.0).contains(alpha) {
                    return Err(InternalError::InvalidParameter(format!(
                        "alpha must lie in [0, 1), got {alpha}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `dy/dt`. For the algebraic model only the second component is a
    /// derivative; the first is zero and `y₁` comes from [`Self::observe`].
    pub fn rhs(&self, y: State, s: f64) -> State {
        match self {
            InternalModel::Inert => [0.0, 0.0],
            InternalModel::LinearExcAdapt { tau_e, tau_a, h } => {
                let hs = h.eval(s);
                [(hs - y[0] - y[1]) / tau_e, (hs - y[1]) / tau_a]
            }
            InternalModel::AlgebraicExcAdapt { tau_a, h } => [0.0, (h.eval(s) - y[1]) / tau_a],
            InternalModel::Fhn { tau_e, tau_a, q, h } => {
                let hs = h.eval(s);
                [(hs - cubic(q, y[0]) - y[1]) / tau_e, (hs + y[0] - y[1]) / tau_a]
            }
            InternalModel::RadialGrowth { rate, alpha } => {
                let r = y[0].hypot(y[1]);
                let mag = rate * (1.0 + r + s.max(0.0).powf(*alpha));
                if r > 0.0 {
                    [mag * y[0] / r, mag * y[1] / r]
                } else {
                    [mag, 0.0]
                }
            }
        }
    }

    /// Fills in algebraic components: `y₁ = (h(S) − y₂)₊` for the algebraic
    /// model, identity otherwise.
    pub fn observe(&self, y: State, s: f64) -> State {
        match self {
            InternalModel::AlgebraicExcAdapt { h, .. } => [(h.eval(s) - y[1]).max(0.0), y[1]],
            _ => y,
        }
    }

    /// Largest step accepted by [`Self::integrate`].
    pub fn max_dt(&self) -> f64 {
        match self {
            InternalModel::Inert => f64::INFINITY,
            InternalModel::LinearExcAdapt { tau_e, .. } | InternalModel::Fhn { tau_e, .. } => tau_e / 10.0,
            InternalModel::AlgebraicExcAdapt { tau_a, .. } => tau_a / 10.0,
            InternalModel::RadialGrowth { rate, .. } => {
                if *rate > 0.0 {
                    0.1 / rate
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// One classical RK4 step with `S` taken from `path`.
    pub fn integrate(&self, y: State, path: SPath, dt: f64) -> Result<State, InternalError> {
        let max = self.max_dt();
        if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
            return Err(InternalError::StepTooLarge { dt, max });
        }
        Ok(self.rk4(y, path, dt))
    }

    pub(crate) fn rk4(&self, y: State, path: SPath, dt: f64) -> State {
        let add = |a: State, b: State, c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
        let k1 = self.rhs(y, path.start);
        let k2 = self.rhs(add(y, k1, 0.5 * dt), path.mid);
        let k3 = self.rhs(add(y, k2, 0.5 * dt), path.mid);
        let k4 = self.rhs(add(y, k3, dt), path.end);
        let next = [
            y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        self.observe(next, path.end)
    }

    /// Resting state under constant `S`.
    pub fn equilibrium(&self, s: f64) -> Option<State> {
        match self {
            InternalModel::Inert | InternalModel::RadialGrowth { .. } => None,
            InternalModel::LinearExcAdapt { h, .. } | InternalModel::AlgebraicExcAdapt { h, .. } => {
                Some([0.0, h.eval(s)])
            }
            InternalModel::Fhn { q, h, .. } => {
                // y₂ = h + y₁ reduces the system to q(y₁) + y₁ = 0.
                let hs = h.eval(s);
                let g = |u: f64| cubic(q, u) + u;
                let dg = |u: f64| cubic_derivative(q, u) + 1.0;
                let mut u = 0.0;
                for _ in 0..100 {
                    let d = dg(u);
                    if d == 0.0 {
                        break;
                    }
                    let step = g(u) / d;
                    u -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                (g(u).abs() < 1e-12).then_some([u, hs + u])
            }
        }
    }

    /// Growth constants, when `G` grows at most linearly in `y`.
    pub fn growth_certificate(&self) -> Option<GrowthCertificate> {
        match self {
            InternalModel::Inert => Some(GrowthCertificate { c: 0.0, alpha: 0.0 }),
            // |G| ≤ (1/τₑ + 1/τₐ)(h + |y₁| + |y₂|) ≤ √2(1/τₑ + 1/τₐ)(1 + |y| + S^α)
            InternalModel::LinearExcAdapt { tau_e, tau_a, h } => Some(GrowthCertificate {
                c: std::f64::consts::SQRT_2 * (1.0 / tau_e + 1.0 / tau_a),
                alpha: h.growth_exponent(),
            }),
            InternalModel::AlgebraicExcAdapt { tau_a, h } => Some(GrowthCertificate {
                c: 1.0 / tau_a,
                alpha: h.growth_exponent(),
            }),
            InternalModel::Fhn { .. } => None,
            InternalModel::RadialGrowth { rate, alpha } => Some(GrowthCertificate { c: *rate, alpha: *alpha }),
        }
    }
}

/// `λ[y] = λ₀ + λ₁·max(0, y_sel)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumblingRate {
    pub lambda0: f64,
    pub lambda1: f64,
    #[serde(default)]
    pub component: usize,
}

impl TumblingRate {
    pub fn constant(lambda: f64) -> Self {
        Self {
            lambda0: lambda,
            lambda1: 0.0,
            component: 0,
        }
    }

    pub fn validate(&self) -> Result<(), InternalError> {
        for (name, v) in [("lambda0", self.lambda0), ("lambda1", self.lambda1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(InternalError::InvalidParameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if self.component > 1 {
            return Err(InternalError::InvalidParameter(format!(
                "component must be 0 or 1, got {}",
                self.component
            )));
        }
        Ok(())
    }

    pub fn eval(&self, y: State) -> f64 {
        self.lambda0 + self.lambda1 * y[self.component].max(0.0)
    }

    /// `C` with `λ[y] ≤ C(1 + |y|)`.
    pub fn linear_bound(&self) -> f64 {
        self.lambda0 + self.lambda1
    }
}

pub fn tumbling_rate(rate: &TumblingRate, y: State) -> f64 {
    rate.eval(y)
}

/// Integrates a single cell under a prescribed signal and records
/// `(t, y₁, y₂, S)`.
pub fn phase_trace(
    model: &InternalModel,
    y0: State,
    signal: impl Fn(f64) -> f64,
    dt: f64,
    t_end: f64,
) -> Result<DiagnosticsSeries, InternalError> {
    let mut out = DiagnosticsSeries::new(vec![
        Column::new("t", "time", "time"),
        Column::new("y1", "1", "excitation"),
        Column::new("y2", "1", "adaptation"),
        Column::new("S", "concentration", "signal"),
    ]);
    let steps = (t_end / dt).round() as usize;
    let mut y = model.observe(y0, signal(0.0));
    out.push(vec![0.0, y[0], y[1], signal(0.0)]).expect("4 columns");
    for n in 0..steps {
        let t = n as f64 * dt;
        let path = SPath {
            start: signal(t),
            mid: signal(t + 0.5 * dt),
            end: signal(t + dt),
        };
        y = model.integrate(y, path, dt)?;
        out.push(vec![t + dt, y[0], y[1], path.end]).expect("4 columns");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear() -> InternalModel {
        InternalModel::LinearExcAdapt {
            tau_e: 0.01,
            tau_a: 1.0,
            h: HSpec::Saturating,
        }
    }

    fn fhn() -> InternalModel {
        InternalModel::Fhn {
            tau_e: 0.01,
            tau_a: 1.0,
            q: fhn_q(),
            h: HSpec::Saturating,
        }
    }

    /// Closed form of the linear model under constant `S`.
    fn linear_exact(y0: State, hs: f64, tau_e: f64, tau_a: f64, t: f64) -> State {
        let e2 = y0[1] - hs;
        let (ae, aa) = ((-t / tau_e).exp(), (-t / tau_a).exp());
        let y1 = y0[0] * ae - e2 / tau_e * (aa - ae) / (1.0 / tau_e - 1.0 / tau_a);
        [y1, hs + e2 * aa]
    }

    #[test]
    fn linear_rest_state_is_stationary() {
        let s = 0.7;
        let y = [0.0, HSpec::Saturating.eval(s)];
        assert_eq!(linear().rhs(y, s), [0.0, 0.0]);
        assert_eq!(linear().equilibrium(s), Some(y));
    }

    #[test]
    fn fhn_equilibrium_solves_both_nullclines() {
        // Independent 2×2 Newton on the full system.
        let s = 0.4;
        let hs = s / (1.0 + s);
        let q = |u: f64| u * (u - 1.0) * (u - 0.2);
        let dq = |u: f64| 3.0 * u * u - 2.4 * u + 0.2;
        let mut y = [0.3, 0.1];
        for _ in 0..50 {
            let f = [hs - q(y[0]) - y[1], hs + y[0] - y[1]];
            // Jacobian [[−q′, −1], [1, −1]]
            let (a, b, c, d) = (-dq(y[0]), -1.0, 1.0, -1.0);
            let det = a * d - b * c;
            y[0] -= (d * f[0] - b * f[1]) / det;
            y[1] -= (-c * f[0] + a * f[1]) / det;
        }
        let eq = fhn().equilibrium(s).unwrap();
        assert!((eq[0] - y[0]).abs() < 1e-12 && (eq[1] - y[1]).abs() < 1e-12);
        let r = fhn().rhs(eq, s);
        assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10);
    }

    #[test]
    fn rk4_matches_closed_form_at_fourth_order() {
        let m = linear();
        let s = 2.0;
        let hs = HSpec::Saturating.eval(s);
        let y0 = [0.3, -0.2];
        let t_end = 5.0;
        let exact = linear_exact(y0, hs, 0.01, 1.0, t_end);
        let solve = |dt: f64| {
            let mut y = y0;
            for _ in 0..(t_end / dt).round() as usize {
                y = m.integrate(y, SPath::constant(s), dt).unwrap();
            }
            y
        };
        let y = solve(1e-3);
        assert!((y[0] - exact[0]).abs() < 1e-8 && (y[1] - exact[1]).abs() < 1e-8);
        // Short horizon, transient-dominated: error ratio under halving ≈ 16.
        let short = 0.05;
        let exact = linear_exact(y0, hs, 0.01, 1.0, short);
        let err = |dt: f64| {
            let mut y = y0;
            for _ in 0..(short / dt).round() as usize {
                y = m.integrate(y, SPath::constant(s), dt).unwrap();
            }
            (y[0] - exact[0]).abs()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn zero_signal_keeps_zero_state() {
        let y = linear().integrate([0.0, 0.0], SPath::constant(0.0), 1e-3).unwrap();
        assert_eq!(y, [0.0, 0.0]);
    }

    #[test]
    fn step_guard() {
        assert_eq!(
            linear().integrate([0.0, 0.0], SPath::constant(0.0), 0.01),
            Err(InternalError::StepTooLarge { dt: 0.01, max: 0.001 })
        );
    }

    #[test]
    fn validation() {
        assert!(InternalModel::LinearExcAdapt { tau_e: 0.5, tau_a: 1.0, h: HSpec::Saturating }
            .validate()
            .is_err());
        assert!(InternalModel::AlgebraicExcAdapt { tau_a: 1.0, h: HSpec::PowerCap { alpha: 1.0 } }
            .validate()
            .is_err());
        assert!(fhn().validate().is_ok());
        assert!(TumblingRate { lambda0: 1.0, lambda1: 1.0, component: 2 }.validate().is_err());
    }

    #[test]
    fn algebraic_model_rectifies_downward_steps() {
        let m = InternalModel::AlgebraicExcAdapt { tau_a: 1.0, h: HSpec::Saturating };
        let trace = phase_trace(&m, [0.0, HSpec::Saturating.eval(2.0)], |t| if t < 0.5 { 2.0 } else { 0.5 }, 0.01, 5.0)
            .unwrap();
        assert!(trace.column("y1").unwrap().iter().all(|&y| y == 0.0));
        let up = phase_trace(&m, [0.0, HSpec::Saturating.eval(0.5)], |t| if t < 0.5 { 0.5 } else { 2.0 }, 0.01, 5.0)
            .unwrap();
        assert!(up.column("y1").unwrap().iter().any(|&y| y > 0.1));
    }

    #[test]
    fn linear_model_adapts() {
        let m = linear();
        let trace = phase_trace(&m, [0.0, 0.0], |_| 1.0, 1e-3, 10.0).unwrap();
        let last = trace.last().unwrap();
        assert!(last[1].abs() < 1e-3);
        assert!((last[2] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn fhn_is_excitable() {
        let m = fhn();
        let amplitude = |ds: f64| {
            let eq = m.equilibrium(0.4).unwrap();
            let trace = phase_trace(&m, eq, |_| 0.4 + ds, 1e-3, 20.0).unwrap();
            trace.column("y1").unwrap().iter().fold(0.0f64, |a, y| a.max((y - eq[0]).abs()))
        };
        let (big, small) = (amplitude(0.1), amplitude(0.01));
        assert!(big > 5.0 * small, "{big} vs {small}");
    }

    #[test]
    fn sampled_growth_certificates_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let models = [
            InternalModel::LinearExcAdapt { tau_e: 0.1, tau_a: 2.0, h: HSpec::PowerCap { alpha: 0.5 } },
            InternalModel::LinearExcAdapt { tau_e: 0.01, tau_a: 1.0, h: HSpec::Saturating },
            InternalModel::AlgebraicExcAdapt { tau_a: 0.5, h: HSpec::PowerCap { alpha: 0.5 } },
            InternalModel::RadialGrowth { rate: 0.3, alpha: 0.5 },
            InternalModel::Inert,
        ];
        for m in &models {
            let cert = m.growth_certificate().unwrap();
            for _ in 0..1000 {
                let y = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
                let s: f64 = rng.random_range(0.0..100.0);
                let g = m.rhs(y, s);
                let lhs = g[0].hypot(g[1]);
                let rhs = cert.c * (1.0 + y[0].hypot(y[1]) + s.powf(cert.alpha));
                assert!(lhs <= rhs * (1.0 + 1e-12), "{m:?}: {lhs} > {rhs}");
            }
        }
        assert!(fhn().growth_certificate().is_none());
    }

    #[test]
    fn tumbling_rate_examples() {
        let r = TumblingRate { lambda0: 1.0, lambda1: 0.5, component: 0 };
        assert_eq!(r.eval([0.0, 0.0]), 1.0);
        assert_eq!(r.eval([-3.0, 0.0]), 1.0);
        assert_eq!(r.eval([2.0, 0.0]), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let y = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            assert!(r.eval(y) <= r.linear_bound() * (1.0 + y[0].hypot(y[1])));
        }
    }
}
