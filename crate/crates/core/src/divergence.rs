//! f-divergence generators, their Legendre transforms, and the constants the
//! OT-regularized concentration bounds extract from them.
//!
//! Two families ship: KL (`f(t) = t log t`) and the α-family
//! (`f(t) = (t^α − 1)/(α(α − 1))`, α > 1).

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::registry::params;

/// Largest α accepted by [`AlphaDivergence`].
pub const ALPHA_MAX: f64 = 64.0;

pub trait Divergence: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Serializable description, e.g. `{"family":"kl"}`.
    fn to_config(&self) -> Value;

    /// Generator `f`, extended by continuity to `[a, b]` and `+∞` beyond.
    fn f(&self, t: f64) -> Result<ExtReal>;

    /// `f'(t)` for `t` in the open domain.
    fn f_deriv(&self, t: f64) -> f64;

    /// `f''(t)` for `t` in the open domain.
    fn f_second_deriv(&self, t: f64) -> f64;

    /// Legendre transform `f*(s) = sup_t {s t − f(t)}`.
    fn f_star(&self, s: f64) -> ExtReal;

    /// Right derivative `(f*)'₊(s)`; non-decreasing and non-negative.
    fn f_star_right_deriv(&self, s: f64) -> f64;

    /// Smallest `s` with `(f*)'₊(s) ≥ y`, for `y > 0`.
    fn f_star_deriv_inverse(&self, y: f64) -> f64;

    /// `s₀ = f'₊(1)`.
    fn s0(&self) -> f64;

    fn inf_f_star(&self) -> f64;

    /// Largest `ν̃` of the family's closed form satisfying
    /// `(f*)'₊(−M − ν̃) ≥ 1/p₀`.
    fn nu_tilde_closed_form(&self, p0: f64, max_cost: f64) -> f64;

    /// Bound on `sup_{s ≥ ν̃} |s (f*)'₊(−s)|`.
    fn tail_sup(&self, nu_tilde: f64) -> f64;

    /// Finite value of `f*`, treating `+∞` as an error.
    fn f_star_finite(&self, s: f64) -> Result<f64> {
        self.f_star(s)
            .finite()
            .ok_or_else(|| Error::invalid(format!("f* is infinite at {s}")))
    }

    fn select_nu_tilde(&self, p0: f64, max_cost: f64) -> Result<f64> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::invalid(format!("p0 must lie in (0,1), got {p0}")));
        }
        if !(max_cost >= 0.0) {
            return Err(Error::invalid(format!("M must be non-negative, got {max_cost}")));
        }
        let nu = self.nu_tilde_closed_form(p0, max_cost);
        let slope = self.f_star_right_deriv(-max_cost - nu);
        if slope < 1.0 / p0 - 1e-9 * (1.0 / p0) {
            return Err(Error::BoundViolation(format!(
                "(f*)'(-M - nu_tilde) = {slope} < 1/p0 = {}",
                1.0 / p0
            )));
        }
        Ok(nu)
    }

    fn constants(&self, p0: f64, max_cost: f64) -> Result<DivergenceConstants> {
        let nu_tilde = self.select_nu_tilde(p0, max_cost)?;
        Ok(DivergenceConstants {
            s0: self.s0(),
            inf_fstar: self.inf_f_star(),
            nu_tilde,
            p0,
            max_cost,
            tail_sup: self.tail_sup(nu_tilde),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConstants {
    pub s0: f64,
    pub inf_fstar: f64,
    pub nu_tilde: f64,
    pub p0: f64,
    #[serde(rename = "M")]
    pub max_cost: f64,
    pub tail_sup: f64,
}

fn check_nonneg(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        Err(Error::invalid(format!("f is evaluated on t >= 0, got {t}")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KlDivergence;

impl Divergence for KlDivergence {
    fn name(&self) -> &'static str {
        "kl"
    }

    fn to_config(&self) -> Value {
        json!({"family": "kl"})
    }

    fn f(&self, t: f64) -> Result<ExtReal> {
        check_nonneg(t)?;
        if t == 0.0 {
            return Ok(ExtReal::ZERO);
        }
        Ok(ExtReal::from_f64(t * t.ln()))
    }

    fn f_deriv(&self, t: f64) -> f64 {
        t.ln() + 1.0
    }

    fn f_second_deriv(&self, t: f64) -> f64 {
        1.0 / t
    }

    fn f_star(&self, s: f64) -> ExtReal {
        ExtReal::from_f64((s - 1.0).exp())
    }

    fn f_star_right_deriv(&self, s: f64) -> f64 {
        (s - 1.0).exp()
    }

    fn f_star_deriv_inverse(&self, y: f64) -> f64 {
        1.0 + y.ln()
    }

    fn s0(&self) -> f64 {
        1.0
    }

    fn inf_f_star(&self) -> f64 {
        0.0
    }

    fn nu_tilde_closed_form(&self, p0: f64, max_cost: f64) -> f64 {
        -1.0 - max_cost - (1.0 / p0).ln()
    }

    fn tail_sup(&self, nu_tilde: f64) -> f64 {
        // Stated as a max of two expressions; kept verbatim.
        (-2f64).exp().max(-nu_tilde * (-nu_tilde - 1.0).exp())
    }
}

/// The α-divergence generator.
///
/// The prefactors `(α − 1)^{1/(α−1)}` and `(α − 1)^{α/(α−1)}` underflow as
/// α → 1⁺; they are clamped below at `f64::MIN_POSITIVE`.
#[derive(Debug, Clone, Copy)]
pub struct AlphaDivergence {
    alpha: f64,
    /// (α − 1)^{1/(α−1)}
    deriv_coef: f64,
    /// α^{-1} (α − 1)^{α/(α−1)}
    conj_coef: f64,
}

impl AlphaDivergence {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= ALPHA_MAX) {
            return Err(Error::invalid(format!("alpha must lie in (1, {ALPHA_MAX}], got {alpha}")));
        }
        let am1 = alpha - 1.0;
        let deriv_coef = (am1.ln() / am1).exp().max(f64::MIN_POSITIVE);
        let conj_coef = ((alpha / am1) * am1.ln()).exp().max(f64::MIN_POSITIVE) / alpha;
        Ok(Self { alpha, deriv_coef, conj_coef })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn conj_exponent(&self) -> f64 {
        self.alpha / (self.alpha - 1.0)
    }

    fn floor(&self) -> f64 {
        1.0 / (self.alpha * (self.alpha - 1.0))
    }
}

impl Divergence for AlphaDivergence {
    fn name(&self) -> &'static str {
        "alpha"
    }

    fn to_config(&self) -> Value {
        json!({"family": "alpha", "alpha": self.alpha})
    }

    fn f(&self, t: f64) -> Result<ExtReal> {
        check_nonneg(t)?;
        Ok(ExtReal::from_f64((t.powf(self.alpha) - 1.0) * self.floor()))
    }

    fn f_deriv(&self, t: f64) -> f64 {
        t.powf(self.alpha - 1.0) / (self.alpha - 1.0)
    }

    fn f_second_deriv(&self, t: f64) -> f64 {
        t.powf(self.alpha - 2.0)
    }

    fn f_star(&self, s: f64) -> ExtReal {
        let pos = s.max(0.0);
        ExtReal::from_f64(self.conj_coef * pos.powf(self.conj_exponent()) + self.floor())
    }

    fn f_star_right_deriv(&self, s: f64) -> f64 {
        self.deriv_coef * s.max(0.0).powf(1.0 / (self.alpha - 1.0))
    }

    fn f_star_deriv_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        y.powf(self.alpha - 1.0) / (self.alpha - 1.0)
    }

    fn s0(&self) -> f64 {
        1.0 / (self.alpha - 1.0)
    }

    fn inf_f_star(&self) -> f64 {
        self.floor()
    }

    fn nu_tilde_closed_form(&self, p0: f64, max_cost: f64) -> f64 {
        -max_cost - p0.powf(-(self.alpha - 1.0)) / (self.alpha - 1.0)
    }

    fn tail_sup(&self, nu_tilde: f64) -> f64 {
        self.deriv_coef * (-nu_tilde).max(0.0).powf(self.conj_exponent())
    }
}

pub(crate) fn build_kl(_config: &Value) -> Result<Arc<dyn Divergence>> {
    Ok(Arc::new(KlDivergence))
}

#[derive(Deserialize)]
struct AlphaParams {
    alpha: f64,
}

pub(crate) fn build_alpha(config: &Value) -> Result<Arc<dyn Divergence>> {
    let p: AlphaParams = params(config)?;
    Ok(Arc::new(AlphaDivergence::new(p.alpha)?))
}

/// `Σ μ_i f(ν_i / μ_i)` when `ν ≪ μ`, else `+∞`.
pub fn f_divergence_finite(div: &dyn Divergence, nu: &[f64], mu: &[f64]) -> Result<ExtReal> {
    if nu.len() != mu.len() {
        return Err(Error::invalid("distributions must share an index set"));
    }
    let mut total = ExtReal::ZERO;
    for (&n, &m) in nu.iter().zip(mu) {
        if m == 0.0 {
            if n > 0.0 {
                return Ok(ExtReal::PosInf);
            }
            continue;
        }
        total = total.add(div.f(n / m)?.scale(m));
    }
    Ok(total)
}
