//! Certificate quantities of the concentration theorems: covering numbers of
//! the c-transformed class, the entropy integrals `D_n`, `R_n`, `R̃_n`, their
//! closed-form bounds, the constants `C₁`, `C₂`, the tail probabilities, and
//! an empirical check of the uniform and Lipschitz bounds on `g_{θ,λ,ν}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::TransportCost;
use crate::ctransform::Adversary;
use crate::divergence::{Divergence, DivergenceConstants};
use crate::error::{Error, Result};
use crate::numeric::composite_gauss_legendre;
use crate::objective::{covering_log, FamilyConstants, Point};
use crate::penalty::PenaltyShape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Integration {
    /// Total nodes on the main interval.
    pub points: usize,
    /// Gauss–Legendre order per panel.
    pub order: usize,
}

impl Default for Integration {
    fn default() -> Self {
        Self { points: 2048, order: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaNRule {
    #[serde(rename = "C")]
    pub c: f64,
    /// Defaults to `max((q − 1)/2, 1/2)` for power-type penalties, else 1/2.
    pub exponent: Option<f64>,
}

impl Default for LambdaNRule {
    fn default() -> Self {
        Self { c: 1.0, exponent: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// `h₁ = γ ε̃`, `h₂ = (1 − γ) ε̃`; defaults to the closed-form optimum.
    pub split_gamma: Option<f64>,
    /// Three-way split for `R̃_n`.
    pub splits: [f64; 3],
    pub lambda_n: LambdaNRule,
    pub p0: Option<f64>,
    pub integration: Integration,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            split_gamma: None,
            splits: [1.0 / 3.0; 3],
            lambda_n: LambdaNRule::default(),
            p0: None,
            integration: Integration::default(),
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.split_gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::invalid(format!("split_gamma must lie in (0, 1], got {g}")));
            }
        }
        let s: f64 = self.splits.iter().sum();
        if self.splits.iter().any(|v| !(*v > 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("splits must be positive and sum to 1, got {:?}", self.splits)));
        }
        if !(self.lambda_n.c > 0.0) {
            return Err(Error::invalid("lambda_n.C must be positive"));
        }
        if self.integration.points < self.integration.order || self.integration.order == 0 {
            return Err(Error::invalid("integration needs points >= order >= 1"));
        }
        Ok(())
    }
}

/// `∫₀^upper √(max(log N(ε), 0)) dε`: composite Gauss–Legendre on
/// `[ε₀, upper]` plus the substitution `ε = u²` on `[0, ε₀]`, `ε₀ = upper/points`.
pub fn entropy_integral<F: Fn(f64) -> f64>(log_n: F, upper: f64, scheme: &Integration) -> f64 {
    if !(upper > 0.0) {
        return 0.0;
    }
    let root = |e: f64| log_n(e).max(0.0).sqrt();
    let eps0 = upper / scheme.points as f64;
    let panels = (scheme.points / scheme.order).max(1);
    let main = composite_gauss_legendre(root, eps0, upper, panels, scheme.order);
    let head = composite_gauss_legendre(|u| 2.0 * u * root(u * u), 0.0, eps0.sqrt(), 4, scheme.order);
    main + head
}

/// The family of closed-form entropy-integral bounds a cost belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppendixCase {
    PowerLaw,
    PowerPlusLinear,
    Exponential,
    HardBall,
}

pub fn appendix_case(cost: &TransportCost) -> Option<AppendixCase> {
    match cost.penalty.shape() {
        PenaltyShape::PowerLaw { .. } => Some(AppendixCase::PowerLaw),
        PenaltyShape::PowerPlusLinear { .. } => Some(AppendixCase::PowerPlusLinear),
        PenaltyShape::Exponential { .. } => Some(AppendixCase::Exponential),
        PenaltyShape::HardBall => Some(AppendixCase::HardBall),
        PenaltyShape::Custom => None,
    }
}

/// `log [(⌈M λ*(ε₂)/(2ε₂)⌉ + 1) (1 + 2L_Θ/ε₁)^k]`.
pub fn covering_bound_gc(fc: &FamilyConstants, cost: &TransportCost, eps1: f64, eps2: f64) -> Result<f64> {
    if !(eps1 > 0.0 && eps2 > 0.0) {
        return Err(Error::invalid("covering radii must be positive"));
    }
    Ok(lambda_grid_log(fc, cost, eps2)? + covering_log(fc.k, fc.l_theta, eps1))
}

fn lambda_grid_log(fc: &FamilyConstants, cost: &TransportCost, eps2: f64) -> Result<f64> {
    if cost.max_cost == 0.0 || cost.penalty.is_hard() {
        return Ok(0.0);
    }
    let ls = cost.penalty.lambda_star(eps2, fc.l_x)?;
    Ok(((cost.max_cost * ls / (2.0 * eps2)).ceil() + 1.0).ln())
}

/// Terms `A`, `B` of `(1 − γ)⁻¹ A + γ⁻¹ B` whose minimum over γ gives the
/// closed forms; `None` for the hard ball and custom penalties.
fn split_terms(fc: &FamilyConstants, cost: &TransportCost) -> Option<(f64, f64)> {
    let (beta, m, l_x) = (fc.beta, cost.max_cost, fc.l_x);
    let b = 2.0 * fc.k as f64 * fc.l_theta / beta;
    let linear = |eta: f64| m * l_x / (2.0 * eta * beta);
    match cost.penalty.shape() {
        PenaltyShape::PowerLaw { alpha, q } => {
            let a = q * (m * (l_x / q).powf(q) * (q - 1.0).powf(q - 1.0) / (2.0 * alpha * beta.powf(q)) + 1.0);
            Some((a, b))
        }
        PenaltyShape::PowerPlusLinear { eta, .. } => Some((linear(eta), b)),
        PenaltyShape::Exponential { alpha, q } => Some((linear(alpha * q), b)),
        _ => None,
    }
}

/// Default `γ`: the minimizer `√B/(√A + √B)` where a closed form exists,
/// 1 for the hard ball, 1/2 otherwise.
pub fn default_gamma(fc: &FamilyConstants, cost: &TransportCost) -> f64 {
    if cost.penalty.is_hard() {
        return 1.0;
    }
    match split_terms(fc, cost) {
        Some((a, b)) if a > 0.0 => b.sqrt() / (a.sqrt() + b.sqrt()),
        Some(_) if cost.max_cost == 0.0 => 1.0,
        _ => 0.5,
    }
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 1.0) {
        return Err(Error::invalid(format!("sample size must be >= 1, got {n}")));
    }
    Ok(())
}

/// `D_n = 12 n^{−1/2} ∫₀^β √log((⌈Mλ*(h₂)/(2h₂)⌉+1) N(h₁, G)) dε̃`.
pub fn dn_bound(fc: &FamilyConstants, cost: &TransportCost, n: f64, cfg: &BoundConfig) -> Result<f64> {
    check_n(n)?;
    cfg.validate()?;
    let gamma = cfg.split_gamma.unwrap_or_else(|| default_gamma(fc, cost));
    let grid_needed = !(cost.max_cost == 0.0 || cost.penalty.is_hard());
    if gamma >= 1.0 && grid_needed {
        return Err(Error::invalid("split_gamma = 1 leaves no room for the lambda grid"));
    }
    let failure = std::cell::RefCell::new(None);
    let integral = entropy_integral(
        |e| {
            let grid = if grid_needed {
                match lambda_grid_log(fc, cost, (1.0 - gamma) * e) {
                    Ok(v) => v,
                    Err(err) => {
                        failure.borrow_mut().get_or_insert(err);
                        0.0
                    }
                }
            } else {
                0.0
            };
            grid + covering_log(fc.k, fc.l_theta, gamma * e)
        },
        fc.beta,
        &cfg.integration,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(12.0 * integral / n.sqrt())
}

/// Closed-form upper bounds on `D_n` for the four shipped penalty families.
pub fn dn_closed_form(fc: &FamilyConstants, cost: &TransportCost, n: f64) -> Result<f64> {
    check_n(n)?;
    let (beta, k, lt, m, l_x) = (fc.beta, fc.k as f64, fc.l_theta, cost.max_cost, fc.l_x);
    let pre = 24.0 / n.sqrt();
    let linear = |eta: f64| {
        pre * beta
            * (1.0 + m * l_x / (2.0 * eta * beta) + 2.0 * k * lt / beta + (2.0 / beta) * (k * m * l_x * lt / eta).sqrt())
                .sqrt()
    };
    match cost.penalty.shape() {
        PenaltyShape::PowerLaw { alpha, q } => {
            let inner = m * (l_x / q).powf(q) * (q - 1.0).powf(q - 1.0) / (2.0 * alpha * beta.powf(q)) + 1.0;
            Ok(pre * beta * (q.sqrt() * inner.sqrt() + (2.0 * k * lt / beta).sqrt()))
        }
        PenaltyShape::PowerPlusLinear { eta, .. } => Ok(linear(eta)),
        PenaltyShape::Exponential { alpha, q } => Ok(linear(alpha * q)),
        PenaltyShape::HardBall => Ok(24.0 * (2.0 * lt * beta * k / n).sqrt()),
        PenaltyShape::Custom => Err(Error::invalid("no closed form for a custom penalty")),
    }
}

/// `λ_n = C n^r`.
pub fn lambda_n(cost: &TransportCost, n: f64, rule: &LambdaNRule) -> f64 {
    let r = rule.exponent.unwrap_or(match cost.penalty.shape() {
        PenaltyShape::PowerLaw { q, .. } | PenaltyShape::PowerPlusLinear { q, .. } => ((q - 1.0) / 2.0).max(0.5),
        _ => 0.5,
    });
    rule.c * n.powf(r)
}

/// `R_n = 2λ_nψ*(L_X/λ_n) + 2β((f*)'₊(β/λ_n + s₀) − (f*)'₊(s₀)) + 24 n^{−1/2} ∫₀^β √log N(ε̃, G) dε̃`.
pub fn rn_bound(fc: &FamilyConstants, cost: &TransportCost, div: &dyn Divergence, n: f64, cfg: &BoundConfig) -> Result<f64> {
    check_n(n)?;
    cfg.validate()?;
    let ln = lambda_n(cost, n, &cfg.lambda_n);
    let s0 = div.s0();
    let first = 2.0 * ln * cost.penalty.psi_star(fc.l_x / ln);
    let second = 2.0 * fc.beta * (div.f_star_right_deriv(fc.beta / ln + s0) - div.f_star_right_deriv(s0));
    let integral = entropy_integral(|e| covering_log(fc.k, fc.l_theta, e), fc.beta, &cfg.integration);
    Ok(first + second + 24.0 * integral / n.sqrt())
}

/// `C₁` and `C₂` of the `R̃_n` covering bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GConstants {
    pub c1: f64,
    pub c2: f64,
}

/// `C₂ = (f*)'₊(−ν̃)`, `C₁ = f*(−ν̃) − inf f* + sup_{t≥ν̃}|t(f*)'₊(−t)| + C₂(max(−s₀, −ν̃) + M)`.
pub fn g_constants(div: &dyn Divergence, consts: &DivergenceConstants) -> Result<GConstants> {
    let nu = consts.nu_tilde;
    let c2 = div.f_star_right_deriv(-nu);
    let c1 = div.f_star_finite(-nu)? - consts.inf_fstar + consts.tail_sup + c2 * ((-consts.s0).max(-nu) + consts.max_cost);
    Ok(GConstants { c1, c2 })
}

/// `R̃_n = 24 n^{−1/2} ∫₀^{βC₂} √log(⌈λ_nC₁/(2h₁)⌉ ⌈(−s₀−ν̃)λ_nC₂/h₂⌉ N(h₃/C₂, G)) dε̃`.
pub fn rn_tilde_bound(
    fc: &FamilyConstants,
    cost: &TransportCost,
    div: &dyn Divergence,
    n: f64,
    cfg: &BoundConfig,
    consts: &DivergenceConstants,
) -> Result<f64> {
    check_n(n)?;
    cfg.validate()?;
    if !(consts.nu_tilde < -consts.s0) {
        return Err(Error::invalid(format!("need nu_tilde < -s0, got {} and s0 = {}", consts.nu_tilde, consts.s0)));
    }
    let GConstants { c1, c2 } = g_constants(div, consts)?;
    let ln = lambda_n(cost, n, &cfg.lambda_n);
    let [g1, g2, g3] = cfg.splits;
    let width = -consts.s0 - consts.nu_tilde;
    let integral = entropy_integral(
        |e| {
            let a = (ln * c1 / (2.0 * g1 * e)).ceil().max(1.0).ln();
            let b = (width * ln * c2 / (g2 * e)).ceil().max(1.0).ln();
            a + b + covering_log(fc.k, fc.l_theta, g3 * e / c2)
        },
        fc.beta * c2,
        &cfg.integration,
    );
    Ok(24.0 * integral / n.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    OtValues,
    OtErm,
    OtRegValues,
    OtRegErm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TailInputs {
    pub beta: f64,
    /// `(f*)'₊(−ν̃)`; OT-regularized theorems only.
    pub c2: Option<f64>,
    /// Class probabilities `p_y`; OT-regularized theorems only.
    pub class_probs: Vec<f64>,
    pub p0: Option<f64>,
    /// Failure probability of the optimizer; ERM theorems only.
    pub delta_opt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    pub value: f64,
    /// The raw expression before clamping to 1.
    pub raw: f64,
    pub clamped: bool,
}

/// Right-hand side of the stated tail bound at `(n, ε)`.
pub fn tail_probability(theorem: Theorem, n: f64, eps: f64, t: &TailInputs) -> Result<TailValue> {
    check_n(n)?;
    if !(eps >= 0.0) || !(t.beta > 0.0) {
        return Err(Error::invalid("tail bounds need eps >= 0 and beta > 0"));
    }
    let b2 = t.beta * t.beta;
    let e2 = eps * eps;
    let reg = || -> Result<(f64, f64)> {
        let c2 = t.c2.ok_or_else(|| Error::invalid("OT-regularized tails need C2"))?;
        let p0 = t.p0.ok_or_else(|| Error::invalid("OT-regularized tails need p0"))?;
        if t.class_probs.is_empty() {
            return Err(Error::invalid("OT-regularized tails need class probabilities"));
        }
        let classes: f64 = t.class_probs.iter().map(|p| (-2.0 * n * (p - p0).powi(2)).exp()).sum();
        Ok((c2, classes))
    };
    let raw = match theorem {
        Theorem::OtValues => (-2.0 * e2 * n / b2).exp(),
        Theorem::OtErm => (-e2 * n / (2.0 * b2)).exp() + t.delta_opt,
        Theorem::OtRegValues => {
            let (c2, classes) = reg()?;
            (-2.0 * n * e2 / b2).exp() + (-2.0 * n * e2 / (b2 * c2 * c2)).exp() + classes
        }
        Theorem::OtRegErm => {
            let (c2, classes) = reg()?;
            t.delta_opt + 2.0 * (-n * e2 / (2.0 * b2)).exp() + 2.0 * (-n * e2 / (2.0 * b2 * c2 * c2)).exp() + 2.0 * classes
        }
    };
    Ok(TailValue { value: raw.min(1.0), raw, clamped: raw > 1.0 })
}

/// Everything `bounds` reports for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: f64,
    pub eps: f64,
    pub constants: FamilyConstants,
    #[serde(rename = "M")]
    pub max_cost: f64,
    pub gamma: f64,
    #[serde(rename = "D_n")]
    pub d_n: f64,
    #[serde(rename = "D_n_closed_form")]
    pub d_n_closed_form: Option<f64>,
    pub lambda_n: Option<f64>,
    #[serde(rename = "R_n")]
    pub r_n: Option<f64>,
    #[serde(rename = "R_n_tilde")]
    pub r_n_tilde: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    pub divergence_constants: Option<DivergenceConstants>,
    pub tails: Vec<(Theorem, TailValue)>,
    /// Natural logs of the positive entries above.
    pub log: serde_json::Map<String, serde_json::Value>,
}

/// Assembles a [`BoundReport`].
pub fn bound_report(
    fc: &FamilyConstants,
    cost: &TransportCost,
    div: Option<&dyn Divergence>,
    class_probs: &[f64],
    n: f64,
    eps: f64,
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    let gamma = cfg.split_gamma.unwrap_or_else(|| default_gamma(fc, cost));
    let d_n = dn_bound(fc, cost, n, cfg)?;
    let d_n_closed_form = dn_closed_form(fc, cost, n).ok();
    let mut tails = vec![
        (Theorem::OtValues, tail_probability(Theorem::OtValues, n, eps, &TailInputs { beta: fc.beta, ..Default::default() })?),
        (Theorem::OtErm, tail_probability(Theorem::OtErm, n, eps, &TailInputs { beta: fc.beta, ..Default::default() })?),
    ];
    let (mut lambda_nv, mut r_n, mut r_n_tilde, mut c1, mut c2, mut dc) = (None, None, None, None, None, None);
    if let Some(div) = div {
        let min_p = class_probs.iter().copied().fold(f64::INFINITY, f64::min);
        let p0 = match cfg.p0 {
            Some(p) => p,
            None if min_p.is_finite() => 0.5 * min_p,
            None => return Err(Error::invalid("p0 or class probabilities are required with a divergence")),
        };
        if min_p.is_finite() && !(p0 < min_p) {
            return Err(Error::invalid(format!("p0 = {p0} must be below min_y p_y = {min_p}")));
        }
        let consts = div.constants(p0, cost.max_cost)?;
        let g = g_constants(div, &consts)?;
        lambda_nv = Some(lambda_n(cost, n, &cfg.lambda_n));
        r_n = Some(rn_bound(fc, cost, div, n, cfg)?);
        r_n_tilde = Some(rn_tilde_bound(fc, cost, div, n, cfg, &consts)?);
        c1 = Some(g.c1);
        c2 = Some(g.c2);
        dc = Some(consts);
        if !class_probs.is_empty() {
            let inputs = TailInputs { beta: fc.beta, c2: Some(g.c2), class_probs: class_probs.to_vec(), p0: Some(p0), delta_opt: 0.0 };
            tails.push((Theorem::OtRegValues, tail_probability(Theorem::OtRegValues, n, eps, &inputs)?));
            tails.push((Theorem::OtRegErm, tail_probability(Theorem::OtRegErm, n, eps, &inputs)?));
        }
    }
    let mut log = serde_json::Map::new();
    let mut put = |k: &str, v: Option<f64>| {
        if let Some(v) = v.filter(|v| *v > 0.0) {
            log.insert(k.to_owned(), serde_json::json!(v.ln()));
        }
    };
    put("D_n", Some(d_n));
    put("D_n_closed_form", d_n_closed_form);
    put("R_n", r_n);
    put("R_n_tilde", r_n_tilde);
    put("C1", c1);
    put("C2", c2);
    for (th, tv) in &tails {
        let key = serde_json::to_value(th).ok().and_then(|v| v.as_str().map(|s| format!("tail_{s}")));
        if let Some(key) = key {
            put(&key, Some(tv.value));
        }
    }
    Ok(BoundReport {
        n,
        eps,
        constants: *fc,
        max_cost: cost.max_cost,
        gamma,
        d_n,
        d_n_closed_form,
        lambda_n: lambda_nv,
        r_n,
        r_n_tilde,
        c1,
        c2,
        divergence_constants: dc,
        tails,
        log,
    })
}

/// One failed inequality with the tuple that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GWitness {
    pub property: String,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub nu: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCheckReport {
    pub tuples: usize,
    pub checks: usize,
    pub constants: GConstants,
    pub lambda_n: f64,
    pub violations: Vec<GWitness>,
    /// Tuples where the θ-difference exceeded `C₂ L_Θ ‖Δθ‖` but stayed
    /// within `2C₂ L_Θ ‖Δθ‖`.
    pub single_factor_exceedances: usize,
}

impl GCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.violations.first() {
            None => Ok(self),
            Some(w) => Err(Error::BoundViolation(format!(
                "{} violated: {} > {} at theta={:?} lambda={} nu={} x={:?} y={}",
                w.property, w.lhs, w.rhs, w.theta, w.lambda, w.nu, w.x, w.y
            ))),
        }
    }
}

const G_SLACK: f64 = 1e-7;

/// Samples `(θ, λ, ν, z)` with `θ` in the unit ball, `λ ∈ (0, λ_n)`,
/// `ν ∈ [ν̃, −s₀]`, `z` in the box, and checks on each tuple:
/// `0 ≤ g ≤ βC₂`; `|g(θ₁) − g(θ₂)| ≤ 2C₂ L_Θ ‖θ₁ − θ₂‖`;
/// `|g(ν₁) − g(ν₂)| ≤ 2λ_nC₂|ν₁ − ν₂|`; `|∂_λ g| ≤ C₁` by central differences.
///
/// The θ bound carries a factor 2 because `ΔL^c` moves with both
/// `sup_Z L_θ` and `L^c_θ`; a single `C₂` fails on ordinary instances.
pub fn g_function_bounds_check(
    adversary: &Adversary,
    div: &dyn Divergence,
    consts: &DivergenceConstants,
    lambda_n: f64,
    tuples: usize,
    seed: u64,
) -> Result<GCheckReport> {
    let fam = adversary.family.as_ref();
    let fc = fam.constants(adversary.cost.norm);
    let g_c = g_constants(div, consts)?;
    let (nu_lo, nu_hi) = (consts.nu_tilde, -consts.s0);
    if !(nu_lo < nu_hi) {
        return Err(Error::invalid("need nu_tilde < -s0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = fam.dim();
    let b = fam.bound();
    let g = |theta: &[f64], lam: f64, nu: f64, z: &Point| -> Result<f64> {
        let delta = fam.sup_loss(theta)? - adversary.c_transform(theta, lam, z)?.value;
        Ok(lam * (div.f_star_finite(-nu)? - div.f_star_finite(-delta / lam - nu)?))
    };
    let random_theta = |rng: &mut ChaCha8Rng| loop {
        let t: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if t.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return t;
        }
    };
    let mut violations = Vec::new();
    let mut checks = 0;
    let mut single_factor_exceedances = 0;
    for _ in 0..tuples {
        let theta = random_theta(&mut rng);
        let lam = lambda_n * rng.random_range(0.01..1.0);
        let nu = rng.random_range(nu_lo..=nu_hi);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-b..=b)).collect();
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let z = Point { x: x.clone(), y };
        let report = |property: &str, lhs: f64, rhs: f64, violations: &mut Vec<GWitness>| {
            if lhs > rhs + G_SLACK {
                violations.push(GWitness {
                    property: property.to_owned(),
                    theta: theta.clone(),
                    lambda: lam,
                    nu,
                    x: x.clone(),
                    y,
                    lhs,
                    rhs,
                });
            }
        };
        let g0 = g(&theta, lam, nu, &z)?;
        report("lower", -g0, 0.0, &mut violations);
        report("upper", g0, fc.beta * g_c.c2, &mut violations);

        let mut theta2: Vec<f64> = theta.iter().map(|t| t + rng.random_range(-0.05..=0.05)).collect();
        crate::dual::project_unit_ball(&mut theta2);
        let dtheta = theta.iter().zip(&theta2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dg = (g0 - g(&theta2, lam, nu, &z)?).abs();
        let single = g_c.c2 * fc.l_theta * dtheta;
        if dg > single + G_SLACK && dg <= 2.0 * single + G_SLACK {
            single_factor_exceedances += 1;
        }
        report("theta_lipschitz", dg, 2.0 * single, &mut violations);

        let nu2 = rng.random_range(nu_lo..=nu_hi);
        report("nu_lipschitz", (g0 - g(&theta, lam, nu2, &z)?).abs(), 2.0 * lambda_n * g_c.c2 * (nu - nu2).abs(), &mut violations);

        let h = 1e-5 * lam;
        let slope = (g(&theta, lam + h, nu, &z)? - g(&theta, lam - h, nu, &z)?) / (2.0 * h);
        report("lambda_slope", slope.abs(), g_c.c1, &mut violations);
        checks += 5;
    }
    Ok(GCheckReport { tuples, checks, constants: g_c, lambda_n, violations, single_factor_exceedances })
}
