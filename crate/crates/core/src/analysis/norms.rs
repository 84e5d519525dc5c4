//! Mixed Lebesgue norms on phase space.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fields::lp_norm;
use crate::kinetic::KineticDensity;

/// Which variable the inner integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    /// `‖f‖_{Lᵖ_x L^q_v}`: inner over `v`.
    #[default]
    VelocityInner,
    /// `‖f‖_{Lᵖ_v L^q_x}`: inner over `x`.
    SpaceInner,
}

/// Exponents accept a number or the string `"inf"` in JSON.
pub mod exponent {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("not an exponent: {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    /// Outer exponent.
    #[serde(with = "exponent")]
    pub p: f64,
    /// Inner exponent.
    #[serde(with = "exponent")]
    pub q: f64,
    #[serde(default)]
    pub order: NormOrder,
}

impl MixedNormSpec {
    pub fn new(p: f64, q: f64, order: NormOrder) -> Self {
        Self { p, q, order }
    }

    /// The product-measure norm `‖f‖_{Lᵖ_{x,v}}`.
    pub fn flat(p: f64) -> Self {
        Self::new(p, p, NormOrder::VelocityInner)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, e) in [("p", self.p), ("q", self.q)] {
            if !(e >= 1.0) || e.is_nan() {
                return Err(format!("exponent {name} must be ≥ 1, got {e}"));
            }
        }
        Ok(())
    }

    /// Column label such as `f_L2x_L1v`.
    pub fn label(&self) -> String {
        let fmt = |e: f64| if e.is_infinite() { "inf".to_string() } else { format!("{e}") };
        match self.order {
            NormOrder::VelocityInner => format!("f_L{}x_L{}v", fmt(self.p), fmt(self.q)),
            NormOrder::SpaceInner => format!("f_L{}v_L{}x", fmt(self.p), fmt(self.q)),
        }
    }
}

/// Quadrature of the mixed norm with cell volumes and velocity weights.
pub fn mixed_norm(f: &KineticDensity, spec: &MixedNormSpec) -> f64 {
    let grid = f.grid();
    let w = f.velocities().weights();
    let cells = grid.len();
    let nv = w.len();
    let inner = |vals: &mut dyn Iterator<Item = (f64, f64)>, q: f64| -> f64 {
        // (value, measure) pairs
        if q.is_infinite() {
            vals.fold(0.0, |m, (v, _)| m.max(v.abs()))
        } else if q == 1.0 {
            vals.map(|(v, m)| m * v.abs()).sum()
        } else {
            vals.map(|(v, m)| m * v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
        }
    };
    match spec.order {
        NormOrder::VelocityInner => {
            let per_cell: Vec<f64> = (0..cells)
                .map(|c| inner(&mut (0..nv).map(|j| (f.get(c, j), w[j])), spec.q))
                .collect();
            lp_norm(&per_cell, spec.p, grid.cell_volume())
        }
        NormOrder::SpaceInner => {
            let vol = grid.cell_volume();
            let per_node: Vec<(f64, f64)> = (0..nv)
                .map(|j| (lp_norm(f.slice(j), spec.q, vol), w[j]))
                .collect();
            inner(&mut per_node.into_iter(), spec.p)
        }
    }
}
