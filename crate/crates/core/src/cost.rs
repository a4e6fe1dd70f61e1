//! The soft transport cost `c_{ψ,δ}((x,y),(x̃,ỹ)) = ψ(‖x̃ − x‖ − δ) 1_{‖x̃−x‖ ≥ δ} + ∞ 1_{y ≠ ỹ}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::objective::Point;
use crate::penalty::Penalty;
use crate::registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0_f64, |m, a| m.max(a.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L2 => a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt(),
            Norm::Linf => a.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs())),
        }
    }

    /// Norm of the dual space (L1 for L∞).
    pub fn dual_eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => Norm::L2.eval(v),
            Norm::Linf => v.iter().map(|a| a.abs()).sum(),
        }
    }

    /// Diameter of `[−B, B]^d` in this norm.
    pub fn box_diameter(self, bound: f64, dim: usize) -> f64 {
        match self {
            Norm::L2 => 2.0 * bound * (dim as f64).sqrt(),
            Norm::Linf => 2.0 * bound,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportCost {
    pub penalty: Arc<dyn Penalty>,
    pub delta: f64,
    pub norm: Norm,
    /// Uniform bound on finite costs.
    pub max_cost: f64,
}

#[derive(Deserialize)]
struct CostConfig {
    penalty: Value,
    #[serde(default)]
    delta: f64,
    #[serde(default = "default_norm")]
    norm: Norm,
    #[serde(rename = "M", default)]
    max_cost: f64,
}

fn default_norm() -> Norm {
    Norm::L2
}

impl TransportCost {
    pub fn new(penalty: Arc<dyn Penalty>, delta: f64, norm: Norm, max_cost: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be finite and >= 0, got {delta}")));
        }
        if !(max_cost >= 0.0) {
            return Err(Error::invalid(format!("M must be >= 0, got {max_cost}")));
        }
        Ok(Self { penalty, delta, norm, max_cost })
    }

    pub fn from_config(config: &Value) -> Result<Self> {
        let c: CostConfig = serde_json::from_value(config.clone())?;
        let penalty = registry::penalties().build(&c.penalty)?;
        Self::new(penalty, c.delta, c.norm, c.max_cost)
    }

    pub fn to_config(&self) -> Value {
        json!({
            "penalty": self.penalty.to_config(),
            "delta": self.delta,
            "norm": self.norm,
            "M": self.max_cost,
        })
    }

    /// `φ_{ψ,δ}(t) = ψ(t − δ) 1_{t ≥ δ}`.
    pub fn phi(&self, t: f64) -> Result<ExtReal> {
        if t <= self.delta {
            if t < 0.0 {
                return Err(Error::invalid(format!("distance must be >= 0, got {t}")));
            }
            return Ok(ExtReal::ZERO);
        }
        self.penalty.psi(t - self.delta)
    }

    pub fn eval(&self, z: &Point, z_tilde: &Point) -> Result<ExtReal> {
        if z.y != z_tilde.y {
            return Ok(ExtReal::PosInf);
        }
        if z.x.len() != z_tilde.x.len() {
            return Err(Error::invalid("points differ in dimension"));
        }
        self.phi(self.norm.dist(&z.x, &z_tilde.x))
    }

    /// The hard cost `c_δ`: zero inside the closed δ-ball, `+∞` elsewhere.
    pub fn eval_hard(&self, z: &Point, z_tilde: &Point) -> ExtReal {
        if z.y != z_tilde.y || self.norm.dist(&z.x, &z_tilde.x) > self.delta {
            ExtReal::PosInf
        } else {
            ExtReal::ZERO
        }
    }

    /// Checks `M` against the finite costs of the given same-label pairs.
    pub fn validate_max_cost(&self, pairs: &[(Point, Point)]) -> Result<()> {
        for (a, b) in pairs {
            if let ExtReal::Finite(c) = self.eval(a, b)? {
                if c > self.max_cost * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::BoundViolation(format!(
                        "sampled cost {c} exceeds the declared M = {}",
                        self.max_cost
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::{HardBall, PowerLaw};

    fn pt(x: f64, y: f64) -> Point {
        Point { x: vec![x], y }
    }

    fn cost(delta: f64) -> TransportCost {
        TransportCost::new(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), delta, Norm::L2, 4.0).unwrap()
    }

    #[test]
    fn cost_examples() {
        let c = cost(1.0);
        assert_eq!(c.eval(&pt(0.0, 1.0), &pt(0.5, 1.0)).unwrap(), ExtReal::ZERO);
        assert_eq!(c.eval(&pt(0.0, 1.0), &pt(2.0, 1.0)).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(c.eval(&pt(0.0, 1.0), &pt(0.0, -1.0)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn hard_ball_cost_is_zero_or_infinite() {
        let c = TransportCost::new(Arc::new(HardBall), 0.5, Norm::Linf, 0.0).unwrap();
        assert_eq!(c.eval(&pt(0.0, 1.0), &pt(0.5, 1.0)).unwrap(), ExtReal::ZERO);
        assert_eq!(c.eval(&pt(0.0, 1.0), &pt(0.51, 1.0)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn parses_json_config() {
        let cfg = json!({"penalty":{"family":"power_law","alpha":1.0,"q":2.0},"delta":0.1,"norm":"l2","M":4.0});
        let c = TransportCost::from_config(&cfg).unwrap();
        assert_eq!(c.norm, Norm::L2);
        assert_eq!(c.max_cost, 4.0);
        assert_eq!(c.to_config()["penalty"]["family"], "power_law");
    }

    #[test]
    fn max_cost_validation_flags_excess() {
        let c = cost(0.0);
        assert!(c.validate_max_cost(&[(pt(0.0, 1.0), pt(1.9, 1.0))]).is_ok());
        assert!(c.validate_max_cost(&[(pt(0.0, 1.0), pt(2.5, 1.0))]).is_err());
    }
}
