//! The velocity-jump operator, applied cell by cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{KineticDensity, KineticError, VelocitySet};
use crate::fields::{ChemState, FieldError, Point};
use crate::kernels::{KernelEvaluator, KernelSpec};

/// Largest admissible `dt·(max loss rate)` for the explicit update.
pub const CFL_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterMode {
    /// Forward Euler in gain and loss, guarded by the CFL bound.
    #[default]
    Explicit,
    /// Each node's loss is integrated exactly over the step and the lost
    /// mass is redistributed in proportion to `T(·, vₖ)`. Unconditionally
    /// positive and mass conserving.
    Exponential,
}

/// Per-cell rates `T(vⱼ ← vₖ)`.
enum CellRates<'a> {
    /// `T_jk = c_k`: depends on the pre-tumble velocity only.
    Column,
    /// Full `n × n` matrix.
    Full { sym: Option<&'a [f64]> },
}

struct CellOperator<'a> {
    ev: KernelEvaluator<'a>,
    vel: &'a VelocitySet,
    shape: CellRates<'a>,
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl CellOperator<'_> {
    /// Fills `out` with `c_k` (column form) or `T_jk` row-major (full form).
    fn fill(&self, cell: usize, x: Point, out: &mut [f64]) {
        let chem = self.ev.chem();
        let nodes = self.vel.nodes();
        let n = nodes.len();
        if let Some(a) = self.ev.uniform_rate() {
            out[..n].fill(a);
            return;
        }
        match (self.ev.spec().clone(), &self.shape) {
            (KernelSpec::PointwiseLinear { c }, _) => {
                out[..n].fill(c * (1.0 + chem.s.values()[cell]).max(0.0));
            }
            (KernelSpec::DirectionalDerivative { t0, psi }, _) => {
                let dt_s = chem.dt_s.as_ref().expect("evaluator checked dt_s")
                    .values()[cell];
                let g = chem.grad_s.components();
                let mut grad = [0.0; 3];
                for (a, comp) in g.iter().enumerate() {
                    grad[a] = comp[cell];
                }
                for (o, v) in out.iter_mut().zip(nodes) {
                    *o = t0 + psi.eval(dt_s + dot(*v, grad));
                }
            }
            (KernelSpec::Symmetric { g }, CellRates::Full { sym: Some(m) }) => {
                let factor = 1.0 + g.chem_weight * chem.s.values()[cell].max(0.0);
                for (o, t) in out.iter_mut().zip(m.iter()) {
                    *o = factor * t;
                }
            }
            (KernelSpec::Delocalized { .. }, _) => {
                for j in 0..n {
                    for k in 0..n {
                        out[j * n + k] = self.ev.rate(x, nodes[j], nodes[k]);
                    }
                }
            }
            _ => unreachable!("cell operator shape does not match kernel"),
        }
    }
}

fn prepare<'a>(ev: KernelEvaluator<'a>, vel: &'a VelocitySet, sym: &'a mut Vec<f64>) -> CellOperator<'a> {
    let shape = match *ev.spec() {
        KernelSpec::Symmetric { g } => {
            let nodes = vel.nodes();
            sym.clear();
            for vj in nodes {
                for vk in nodes {
                    let d = [vj[0] - vk[0], vj[1] - vk[1], vj[2] - vk[2]];
                    sym.push(g.base + g.slope * dot(d, d).sqrt());
                }
            }
            CellRates::Full { sym: Some(sym) }
        }
        KernelSpec::Delocalized { .. } => CellRates::Full { sym: None },
        _ => CellRates::Column,
    };
    CellOperator { ev, vel, shape }
}

/// Updates one cell in place and returns its largest loss rate.
fn update_cell(
    op: &CellOperator,
    mode: ScatterMode,
    dt: f64,
    f: &mut [f64],
    rates: &mut [f64],
    loss: &mut [f64],
    gain: &mut [f64],
) -> f64 {
    let w = op.vel.weights();
    let n = w.len();
    let measure = op.vel.measure();
    match op.shape {
        CellRates::Column => {
            let c = &rates[..n];
            for j in 0..n {
                loss[j] = measure * c[j];
            }
            match mode {
                ScatterMode::Explicit => {
                    let g: f64 = (0..n).map(|k| w[k] * c[k] * f[k]).sum();
                    for j in 0..n {
                        f[j] += dt * (g - loss[j] * f[j]);
                    }
                }
                ScatterMode::Exponential => {
                    let g: f64 = (0..n)
                        .map(|k| w[k] * f[k] * -(-dt * loss[k]).exp_m1())
                        .sum::<f64>()
                        / measure;
                    for j in 0..n {
                        f[j] = f[j] * (-dt * loss[j]).exp() + g;
                    }
                }
            }
        }
        CellRates::Full { .. } => {
            let t = &rates[..n * n];
            loss[..n].fill(0.0);
            for j in 0..n {
                for k in 0..n {
                    loss[k] += w[j] * t[j * n + k];
                }
            }
            match mode {
                ScatterMode::Explicit => {
                    for j in 0..n {
                        gain[j] = (0..n).map(|k| w[k] * t[j * n + k] * f[k]).sum();
                    }
                    for j in 0..n {
                        f[j] += dt * (gain[j] - loss[j] * f[j]);
                    }
                }
                ScatterMode::Exponential => {
                    // Mass leaving node k, per unit of its loss rate.
                    for k in 0..n {
                        loss[n + k] = if loss[k] > 0.0 {
                            w[k] * f[k] * -(-dt * loss[k]).exp_m1() / loss[k]
                        } else {
                            0.0
                        };
                    }
                    for j in 0..n {
                        gain[j] = (0..n).map(|k| t[j * n + k] * loss[n + k]).sum();
                    }
                    for j in 0..n {
                        f[j] = f[j] * (-dt * loss[j]).exp() + gain[j];
                    }
                }
            }
        }
    }
    loss[..n].iter().copied().fold(0.0, f64::max)
}

/// One scattering step of length `dt`.
///
/// In explicit mode the step is rejected when `dt·(max loss rate)` exceeds
/// [`CFL_LIMIT`]; gain and loss share one quadrature so cell mass is
/// conserved to round-off.
pub fn scattering_step(
    f: &KineticDensity,
    chem: &ChemState,
    spec: &KernelSpec,
    dt: f64,
    mode: ScatterMode,
) -> Result<KineticDensity, KineticError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticError::NonPositiveStep(dt));
    }
    let grid = *f.grid();
    if chem.grid() != &grid {
        return Err(FieldError::GridMismatch.into());
    }
    let ev = spec.evaluator(chem)?;
    let vel = f.velocities();
    let nv = vel.len();
    let cells = grid.len();
    let mut sym = Vec::new();
    let op = prepare(ev, vel, &mut sym);

    // Cell-major working copy.
    let mut work = vec![0.0; cells * nv];
    for j in 0..nv {
        for (c, v) in f.slice(j).iter().enumerate() {
            work[c * nv + j] = *v;
        }
    }
    let max_loss = work
        .par_chunks_mut(nv)
        .enumerate()
        .map_init(
            || (vec![0.0; nv * nv], vec![0.0; 2 * nv], vec![0.0; nv]),
            |(rates, loss, gain), (cell, fc)| {
                op.fill(cell, grid.node_position(cell), rates);
                update_cell(&op, mode, dt, fc, rates, loss, gain)
            },
        )
        .reduce(|| 0.0, f64::max);
    if mode == ScatterMode::Explicit && dt * max_loss > CFL_LIMIT {
        return Err(KineticError::Cfl {
            rate: max_loss,
            dt,
            limit: CFL_LIMIT,
        });
    }
    let mut values = vec![0.0; cells * nv];
    for c in 0..cells {
        for j in 0..nv {
            values[j * cells + c] = work[c * nv + j];
        }
    }
    Ok(KineticDensity::from_raw(grid, vel.clone(), values, f.time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PeriodicGrid, ScalarField};
    use crate::kernels::{DelocalizedTerms, PsiSpec, SymmetricProfile};
    use std::f64::consts::PI;

    fn chem(g: PeriodicGrid) -> ChemState {
        let k = 2.0 * PI / g.length();
        let s = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (k * x[0]).sin());
        let dt_s = ScalarField::from_fn(g, |x| 0.2 * (k * x[1]).cos());
        ChemState::from_field(s, Some(dt_s), 0.0).unwrap()
    }

    fn anisotropic(g: PeriodicGrid, vel: VelocitySet) -> KineticDensity {
        let k = 2.0 * PI / g.length();
        KineticDensity::from_fn(g, vel, |x, v| {
            (1.0 + 0.8 * v[0] + 0.3 * v[1] * v[1]) * (1.5 + (k * x[1]).cos())
        })
        .unwrap()
    }

    fn specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Constant { c0: 0.7 },
            KernelSpec::PointwiseLinear { c: 0.5 },
            KernelSpec::SupPower { c: 0.3, alpha: 1.0 },
            KernelSpec::DirectionalDerivative { t0: 0.5, psi: PsiSpec::default() },
            KernelSpec::Symmetric {
                g: SymmetricProfile { base: 0.2, slope: 0.4, chem_weight: 0.5 },
            },
            KernelSpec::Delocalized {
                c: 0.2,
                eps: 0.1,
                terms: DelocalizedTerms { s_behind: true, grad_behind: true, s_ahead: true, grad_ahead: false },
            },
        ]
    }

    #[test]
    fn zero_kernel_is_identity() {
        let g = PeriodicGrid::new(2, 8, 4.0).unwrap();
        let f = anisotropic(g, VelocitySet::circle(6).unwrap());
        let out = scattering_step(&f, &chem(g), &KernelSpec::Constant { c0: 0.0 }, 0.1, ScatterMode::Explicit).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn uniform_in_v_is_fixed_for_velocity_independent_kernels() {
        let g = PeriodicGrid::new(2, 8, 4.0).unwrap();
        let f = KineticDensity::from_fn(g, VelocitySet::circle(8).unwrap(), |x, _| 1.0 + 0.1 * x[0]).unwrap();
        for spec in &specs()[..3] {
            for mode in [ScatterMode::Explicit, ScatterMode::Exponential] {
                let out = scattering_step(&f, &chem(g), spec, 0.05, mode).unwrap();
                for (a, b) in out.values().iter().zip(f.values()) {
                    assert!((a - b).abs() < 1e-13 * b, "{}", spec.name());
                }
            }
        }
    }

    #[test]
    fn every_kernel_conserves_cell_mass_and_positivity() {
        let g = PeriodicGrid::new(2, 8, 4.0).unwrap();
        let f = anisotropic(g, VelocitySet::circle(12).unwrap());
        let rho0 = f.density();
        for spec in specs() {
            for mode in [ScatterMode::Explicit, ScatterMode::Exponential] {
                let out = scattering_step(&f, &chem(g), &spec, 0.05, mode).unwrap();
                let rho = out.density();
                for (a, b) in rho.values().iter().zip(rho0.values()) {
                    assert!((a - b).abs() < 1e-13 * b, "{} {mode:?}: {a} vs {b}", spec.name());
                }
                assert!(out.min() >= 0.0);
            }
        }
    }

    #[test]
    fn two_node_relaxation_matches_closed_form() {
        // Nodes ±e₁ with weights π each; T ≡ 1 ⇒ f₁ − f₂ decays at rate |V| = 2π.
        let g = PeriodicGrid::new(2, 4, 1.0).unwrap();
        let vel = VelocitySet::circle(2).unwrap();
        let (a, b) = (3.0, 1.0);
        let f0 = KineticDensity::from_fn(g, vel, |_, v| if v[0] > 0.0 { a } else { b }).unwrap();
        let spec = KernelSpec::Constant { c0: 1.0 };
        let zero = ChemState::from_field(ScalarField::zeros(g), None, 0.0).unwrap();
        let t = 0.5;
        let exact = |t: f64| {
            let m = 0.5 * (a + b);
            let d = 0.5 * (a - b) * (-2.0 * PI * t).exp();
            (m + d, m - d)
        };
        let (e1, e2) = exact(t);

        let exp = scattering_step(&f0, &zero, &spec, t, ScatterMode::Exponential).unwrap();
        assert!((exp.get(0, 0) - e1).abs() < 1e-14);
        assert!((exp.get(0, 1) - e2).abs() < 1e-14);

        // Explicit Euler converges at first order.
        let mut errs = Vec::new();
        for steps in [100, 200, 400] {
            let dt = t / steps as f64;
            let mut f = f0.clone();
            for _ in 0..steps {
                f = scattering_step(&f, &zero, &spec, dt, ScatterMode::Explicit).unwrap();
            }
            errs.push((f.get(0, 0) - e1).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
        }
    }

    #[test]
    fn cfl_violation_reports_rate() {
        let g = PeriodicGrid::new(2, 4, 1.0).unwrap();
        let f = KineticDensity::from_fn(g, VelocitySet::circle(4).unwrap(), |_, _| 1.0).unwrap();
        let zero = ChemState::from_field(ScalarField::zeros(g), None, 0.0).unwrap();
        match scattering_step(&f, &zero, &KernelSpec::Constant { c0: 1.0 }, 1.0, ScatterMode::Explicit) {
            Err(KineticError::Cfl { rate, .. }) => assert!((rate - 2.0 * PI).abs() < 1e-12),
            other => panic!("expected CFL error, got {other:?}"),
        }
        assert!(scattering_step(&f, &zero, &KernelSpec::Constant { c0: 1.0 }, 1.0, ScatterMode::Exponential).is_ok());
    }

    #[test]
    fn symmetric_scattering_contracts_every_lp_norm() {
        let g = PeriodicGrid::new(2, 8, 4.0).unwrap();
        let f = anisotropic(g, VelocitySet::circle(16).unwrap());
        let spec = &specs()[4];
        let out = scattering_step(&f, &chem(g), spec, 0.05, ScatterMode::Explicit).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let norm = |k: &KineticDensity| -> f64 {
                let w = k.velocities().weights();
                (0..w.len())
                    .map(|j| w[j] * k.slice(j).iter().map(|v| v.powf(p)).sum::<f64>())
                    .sum::<f64>()
            };
            assert!(norm(&out) < norm(&f));
        }
    }
}
