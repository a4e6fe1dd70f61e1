//! Penalty functions ψ for the soft transport cost `ψ(t − δ) 1_{t ≥ δ}`,
//! their conjugates `ψ*(s) = sup_{t ≥ 0} {s t − ψ(t)}` and the threshold
//! `λ*(ε₂) = inf {λ > 0 : λ ψ*(L_X/λ) ≤ ε₂}`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::numeric::bisect_threshold;
use crate::registry::params;

/// Relative tolerance of the λ* bisection.
const LAMBDA_STAR_RTOL: f64 = 1e-14;

/// Parameters of the shipped families, used where closed forms depend on
/// the family rather than on ψ as a function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyShape {
    HardBall,
    PowerLaw { alpha: f64, q: f64 },
    PowerPlusLinear { alpha: f64, eta: f64, q: f64 },
    Exponential { alpha: f64, q: f64 },
    Custom,
}

pub trait Penalty: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn to_config(&self) -> Value;

    fn shape(&self) -> PenaltyShape {
        PenaltyShape::Custom
    }

    /// `ψ(t)` for `t ≥ 0`.
    fn psi(&self, t: f64) -> Result<ExtReal>;

    /// Right derivative of ψ on the finite region.
    fn psi_deriv(&self, t: f64) -> f64;

    /// `ψ*(s)`; zero for `s ≤ 0` since ψ is non-decreasing with ψ(0) = 0.
    fn psi_star(&self, s: f64) -> f64;

    /// Largest `t` with `ψ(t) ≤ v`.
    fn reach(&self, v: f64) -> f64;

    /// Supremum of the slopes `s` with `ψ*(s) = 0`.
    fn zero_conjugate_threshold(&self) -> f64;

    /// True when ψ is `+∞` off zero (the hard δ-ball cost).
    fn is_hard(&self) -> bool {
        self.zero_conjugate_threshold() == f64::INFINITY
    }

    fn lambda_star(&self, eps2: f64, l_x: f64) -> Result<f64> {
        check_lambda_star_args(eps2, l_x)?;
        let thr = self.zero_conjugate_threshold();
        if thr == f64::INFINITY {
            return Ok(0.0);
        }
        let g = |lam: f64| lam > 0.0 && lam * self.psi_star(l_x / lam) <= eps2;
        let mut hi = if thr > 0.0 { l_x / thr } else { 1.0 };
        while !g(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NonConvergence {
                    iterations: 1000,
                    detail: "lambda_star bracket growth".into(),
                });
            }
        }
        Ok(bisect_threshold(g, 0.0, hi, LAMBDA_STAR_RTOL))
    }
}

fn check_lambda_star_args(eps2: f64, l_x: f64) -> Result<()> {
    if !(eps2 > 0.0) || !(l_x > 0.0) {
        return Err(Error::invalid(format!("lambda_star needs eps2 > 0 and L_X > 0, got {eps2}, {l_x}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        Err(Error::invalid(format!("psi is evaluated on t >= 0, got {t}")))
    } else {
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HardBall;

impl Penalty for HardBall {
    fn name(&self) -> &'static str {
        "hard_ball"
    }

    fn to_config(&self) -> Value {
        json!({"family": "hard_ball"})
    }

    fn shape(&self) -> PenaltyShape {
        PenaltyShape::HardBall
    }

    fn psi(&self, t: f64) -> Result<ExtReal> {
        check_t(t)?;
        Ok(if t > 0.0 { ExtReal::PosInf } else { ExtReal::ZERO })
    }

    fn psi_deriv(&self, _t: f64) -> f64 {
        0.0
    }

    fn psi_star(&self, _s: f64) -> f64 {
        0.0
    }

    fn reach(&self, _v: f64) -> f64 {
        0.0
    }

    fn zero_conjugate_threshold(&self) -> f64 {
        f64::INFINITY
    }
}

/// `ψ(t) = α t^q`, q > 1.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    pub alpha: f64,
    pub q: f64,
}

impl PowerLaw {
    pub fn new(alpha: f64, q: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::invalid(format!("power_law needs q > 1, got {q}")));
        }
        Ok(Self { alpha, q })
    }
}

/// `α (q − 1) (s/(α q))^{q/(q−1)}` for `s > 0`.
fn power_conjugate(alpha: f64, q: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    alpha * (q - 1.0) * (s / (alpha * q)).powf(q / (q - 1.0))
}

impl Penalty for PowerLaw {
    fn name(&self) -> &'static str {
        "power_law"
    }

    fn to_config(&self) -> Value {
        json!({"family": "power_law", "alpha": self.alpha, "q": self.q})
    }

    fn shape(&self) -> PenaltyShape {
        PenaltyShape::PowerLaw { alpha: self.alpha, q: self.q }
    }

    fn psi(&self, t: f64) -> Result<ExtReal> {
        check_t(t)?;
        Ok(ExtReal::from_f64(self.alpha * t.powf(self.q)))
    }

    fn psi_deriv(&self, t: f64) -> f64 {
        self.alpha * self.q * t.max(0.0).powf(self.q - 1.0)
    }

    fn psi_star(&self, s: f64) -> f64 {
        power_conjugate(self.alpha, self.q, s)
    }

    fn reach(&self, v: f64) -> f64 {
        (v.max(0.0) / self.alpha).powf(1.0 / self.q)
    }

    fn zero_conjugate_threshold(&self) -> f64 {
        0.0
    }

    fn lambda_star(&self, eps2: f64, l_x: f64) -> Result<f64> {
        check_lambda_star_args(eps2, l_x)?;
        let q = self.q;
        Ok((l_x / q).powf(q) * (q - 1.0).powf(q - 1.0) * eps2.powf(-(q - 1.0)) / self.alpha)
    }
}

/// `ψ(t) = α t^q + η t`.
#[derive(Debug, Clone, Copy)]
pub struct PowerPlusLinear {
    pub alpha: f64,
    pub eta: f64,
    pub q: f64,
}

impl PowerPlusLinear {
    pub fn new(alpha: f64, eta: f64, q: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("eta", eta)?;
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::invalid(format!("power_plus_linear needs q > 1, got {q}")));
        }
        Ok(Self { alpha, eta, q })
    }
}

impl Penalty for PowerPlusLinear {
    fn name(&self) -> &'static str {
        "power_plus_linear"
    }

    fn to_config(&self) -> Value {
        json!({"family": "power_plus_linear", "alpha": self.alpha, "eta": self.eta, "q": self.q})
    }

    fn shape(&self) -> PenaltyShape {
        PenaltyShape::PowerPlusLinear { alpha: self.alpha, eta: self.eta, q: self.q }
    }

    fn psi(&self, t: f64) -> Result<ExtReal> {
        check_t(t)?;
        Ok(ExtReal::from_f64(self.alpha * t.powf(self.q) + self.eta * t))
    }

    fn psi_deriv(&self, t: f64) -> f64 {
        self.alpha * self.q * t.max(0.0).powf(self.q - 1.0) + self.eta
    }

    fn psi_star(&self, s: f64) -> f64 {
        power_conjugate(self.alpha, self.q, s - self.eta)
    }

    fn reach(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let hi = (v / self.eta).min((v / self.alpha).powf(1.0 / self.q));
        bisect_threshold(|t| self.alpha * t.powf(self.q) + self.eta * t > v, 0.0, hi, 1e-15)
    }

    fn zero_conjugate_threshold(&self) -> f64 {
        self.eta
    }
}

/// `ψ(t) = α (e^{q t} − 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Exponential {
    pub alpha: f64,
    pub q: f64,
}

impl Exponential {
    pub fn new(alpha: f64, q: f64) -> Result<Self> {
        Ok(Self { alpha: positive("alpha", alpha)?, q: positive("q", q)? })
    }
}

impl Penalty for Exponential {
    fn name(&self) -> &'static str {
        "exponential"
    }

    fn to_config(&self) -> Value {
        json!({"family": "exponential", "alpha": self.alpha, "q": self.q})
    }

    fn shape(&self) -> PenaltyShape {
        PenaltyShape::Exponential { alpha: self.alpha, q: self.q }
    }

    fn psi(&self, t: f64) -> Result<ExtReal> {
        check_t(t)?;
        Ok(ExtReal::from_f64(self.alpha * (self.q * t).exp_m1()))
    }

    fn psi_deriv(&self, t: f64) -> f64 {
        self.alpha * self.q * (self.q * t.max(0.0)).exp()
    }

    fn psi_star(&self, s: f64) -> f64 {
        let aq = self.alpha * self.q;
        // The breakpoint s = αq belongs to the zero branch; both agree there.
        if s <= aq {
            return 0.0;
        }
        let ratio = s / aq;
        ((s / self.q) * ratio.ln() - self.alpha * (ratio - 1.0)).max(0.0)
    }

    fn reach(&self, v: f64) -> f64 {
        (v.max(0.0) / self.alpha).ln_1p() / self.q
    }

    fn zero_conjugate_threshold(&self) -> f64 {
        self.alpha * self.q
    }
}

pub(crate) fn build_hard_ball(_config: &Value) -> Result<Arc<dyn Penalty>> {
    Ok(Arc::new(HardBall))
}

#[derive(Deserialize)]
struct PowerParams {
    alpha: f64,
    q: f64,
}

#[derive(Deserialize)]
struct PowerLinearParams {
    alpha: f64,
    eta: f64,
    q: f64,
}

pub(crate) fn build_power_law(config: &Value) -> Result<Arc<dyn Penalty>> {
    let p: PowerParams = params(config)?;
    Ok(Arc::new(PowerLaw::new(p.alpha, p.q)?))
}

pub(crate) fn build_power_plus_linear(config: &Value) -> Result<Arc<dyn Penalty>> {
    let p: PowerLinearParams = params(config)?;
    Ok(Arc::new(PowerPlusLinear::new(p.alpha, p.eta, p.q)?))
}

pub(crate) fn build_exponential(config: &Value) -> Result<Arc<dyn Penalty>> {
    let p: PowerParams = params(config)?;
    Ok(Arc::new(Exponential::new(p.alpha, p.q)?))
}
