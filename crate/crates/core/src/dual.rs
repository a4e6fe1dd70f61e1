//! Dual DRO objectives.
//!
//! * OT: `inf_{λ>0} {λ r + E_P[L^c_λ]}`.
//! * OT-regularized f-divergence: `inf_{λ>0} {λ r + λ Λ_f^P[L^c_λ/λ]}` with
//!   `Λ_f^Q[φ] = inf_ν {ν + E_Q[f*(φ − ν)]}`.
//! * KL: `inf_{λ>0} {λ r + λ log E_P[exp(L^c_λ/λ)]}`.
//!
//! The outer search runs golden section on `log λ`. Per-sample transforms
//! come from a [`TransformOracle`], so the same code serves continuous
//! samples and finite primal instances.

use std::cell::RefCell;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost::TransportCost;
use crate::ctransform::{Adversary, Certificate, InnerSolver};
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::numeric::{golden_section_min, log_sum_exp_weighted};
use crate::objective::{Dataset, LossFamily};
use crate::registry::params;

const LAMBDA_GRID_LO: f64 = 1e-3;
const LAMBDA_GRID_HI: f64 = 1e3;
const LAMBDA_GROWTH: f64 = 4.0;
const LAMBDA_FLOOR: f64 = 1e-8;
const LAMBDA_CEIL: f64 = 1e12;
const GOLDEN_MAX_ITER: usize = 400;
pub const DEFAULT_OUTER_TOL: f64 = 1e-10;

/// Per-sample c-transform values as a function of λ.
pub trait TransformOracle {
    /// Weights of the nominal distribution; they sum to 1.
    fn weights(&self) -> &[f64];

    /// `L^c_λ(z_i)` for `λ > 0`.
    fn transforms(&self, lambda: f64) -> Result<(Vec<f64>, Certificate)>;

    /// `lim_{λ→0⁺} L^c_λ(z_i)`.
    fn transforms_limit_zero(&self) -> Result<(Vec<f64>, Certificate)>;

    /// True when the transforms do not depend on λ (hard δ-ball cost).
    fn lambda_free(&self) -> bool;
}

/// Transforms of an [`Adversary`] on a sample with uniform weights.
pub struct SampleOracle<'a> {
    pub adversary: &'a Adversary,
    pub theta: &'a [f64],
    pub sample: &'a Dataset,
    weights: Vec<f64>,
}

impl<'a> SampleOracle<'a> {
    pub fn new(adversary: &'a Adversary, theta: &'a [f64], sample: &'a Dataset) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::invalid("the sample is empty"));
        }
        let n = sample.len();
        Ok(Self { adversary, theta, sample, weights: vec![1.0 / n as f64; n] })
    }

    /// Per-point `L^{c_δ}` values.
    pub fn delta_transforms(&self) -> Result<Vec<f64>> {
        self.sample
            .points
            .iter()
            .map(|z| Ok(self.adversary.c_delta_transform(self.theta, z)?.value))
            .collect()
    }
}

fn collect<I>(it: I) -> Result<(Vec<f64>, Certificate)>
where
    I: Iterator<Item = Result<crate::ctransform::TransformResult>>,
{
    let mut cert = Certificate::Exact;
    let mut vals = Vec::new();
    for r in it {
        let r = r?;
        cert = cert.and(r.certificate);
        vals.push(r.value);
    }
    Ok((vals, cert))
}

impl TransformOracle for SampleOracle<'_> {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn transforms(&self, lambda: f64) -> Result<(Vec<f64>, Certificate)> {
        collect(self.sample.points.iter().map(|z| self.adversary.c_transform(self.theta, lambda, z)))
    }

    fn transforms_limit_zero(&self) -> Result<(Vec<f64>, Certificate)> {
        collect(self.sample.points.iter().map(|z| self.adversary.c_transform_limit_zero(self.theta, z)))
    }

    fn lambda_free(&self) -> bool {
        self.adversary.cost.penalty.is_hard()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub value: f64,
    /// Zero when the infimum is the `λ → 0⁺` limit.
    pub lambda_opt: f64,
    pub nu_opt: Option<f64>,
    pub rho_opt: Option<f64>,
    pub evaluations: usize,
    pub certificate: Certificate,
    /// Set when the infimum is approached as `λ → 0⁺` and not attained.
    pub at_boundary: bool,
}

struct LambdaMin {
    lambda: f64,
    value: f64,
    evaluations: usize,
    at_boundary: bool,
}

/// Minimizes a convex `g` over `λ > 0`, comparing against its `λ → 0⁺` limit.
fn minimize_over_lambda<G>(mut g: G, limit_zero: f64, tol: f64) -> Result<LambdaMin>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut lams = Vec::new();
    let mut vals = Vec::new();
    let mut lam = LAMBDA_GRID_LO;
    while lam <= LAMBDA_GRID_HI * 1.5 {
        lams.push(lam);
        vals.push(g(lam)?);
        lam *= LAMBDA_GROWTH;
    }
    let argmin = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b });
    let mut best = argmin(&vals);
    while best == lams.len() - 1 {
        let next = lams[best] * LAMBDA_GROWTH;
        if next > LAMBDA_CEIL {
            return Err(Error::Bracketing(format!(
                "objective still decreasing at lambda = {next:e}; last values {:?}",
                &vals[vals.len().saturating_sub(3)..]
            )));
        }
        lams.push(next);
        vals.push(g(next)?);
        best = argmin(&vals);
    }
    while best == 0 && lams[0] > LAMBDA_FLOOR {
        let prev = lams[0] / LAMBDA_GROWTH;
        lams.insert(0, prev);
        vals.insert(0, g(prev)?);
        best = argmin(&vals);
    }
    let lo = lams[best.saturating_sub(1)];
    let hi = lams[best + 1];
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let m = golden_section_min(
        |s| match g(s.exp()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        },
        lo.ln(),
        hi.ln(),
        tol,
        GOLDEN_MAX_ITER,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let evaluations = lams.len() + m.evaluations;
    let (mut lambda, mut value) = (m.x.exp(), m.value);
    if vals[best] < value {
        lambda = lams[best];
        value = vals[best];
    }
    if limit_zero <= value + 1e-13 * (1.0 + value.abs()) {
        return Ok(LambdaMin { lambda: 0.0, value: limit_zero, evaluations, at_boundary: true });
    }
    Ok(LambdaMin { lambda, value, evaluations, at_boundary: false })
}

fn weighted_mean(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive and finite, got {r}")));
    }
    Ok(())
}

/// OT-DRO dual value.
pub fn ot_dual(oracle: &dyn TransformOracle, r: f64, tol: f64) -> Result<DualSolution> {
    check_radius(r)?;
    let w = oracle.weights();
    let (lim, lim_cert) = oracle.transforms_limit_zero()?;
    let limit_zero = weighted_mean(w, &lim);
    if oracle.lambda_free() {
        return Ok(DualSolution {
            value: limit_zero,
            lambda_opt: 0.0,
            nu_opt: None,
            rho_opt: None,
            evaluations: 1,
            certificate: lim_cert,
            at_boundary: true,
        });
    }
    let cert = RefCell::new(lim_cert);
    let m = minimize_over_lambda(
        |lam| {
            let (v, c) = oracle.transforms(lam)?;
            let mut cur = cert.borrow_mut();
            *cur = cur.and(c);
            Ok(lam * r + weighted_mean(w, &v))
        },
        limit_zero,
        tol,
    )?;
    Ok(DualSolution {
        value: m.value,
        lambda_opt: m.lambda,
        nu_opt: None,
        rho_opt: None,
        evaluations: m.evaluations,
        certificate: cert.into_inner(),
        at_boundary: m.at_boundary,
    })
}

/// How the ν-search of [`lambda_f`] is bracketed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuDomain {
    /// `[min φ − s₀, max φ − s₀]`.
    Simple,
    /// `[ν_α̃, max φ − s₀]` where `Q(φ ≥ α̃) ≥ p` and `ν_α̃ = α̃ − ((f*)')⁻¹(1/p)`.
    Tail { alpha_tilde: f64, p: f64 },
    Explicit { lo: f64, hi: f64 },
}

/// Resolves a [`NuDomain`] for the given distribution and integrand.
pub fn nu_domain(weights: &[f64], phi: &[f64], div: &dyn Divergence, domain: NuDomain) -> Result<(f64, f64)> {
    if phi.is_empty() || phi.len() != weights.len() {
        return Err(Error::invalid("phi and weights must be non-empty and of equal length"));
    }
    let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let s0 = div.s0();
    match domain {
        NuDomain::Simple => Ok((min - s0, max - s0)),
        NuDomain::Tail { alpha_tilde, p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("tail mass must lie in (0,1], got {p}")));
            }
            let mass: f64 = weights.iter().zip(phi).filter(|(_, f)| **f >= alpha_tilde).map(|(w, _)| w).sum();
            if mass < p * (1.0 - 1e-12) {
                return Err(Error::invalid(format!("Q(phi >= {alpha_tilde}) = {mass} < {p}")));
            }
            Ok((alpha_tilde - div.f_star_deriv_inverse(1.0 / p), max - s0))
        }
        NuDomain::Explicit { lo, hi } => Ok((lo, hi)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaF {
    pub value: f64,
    pub nu_opt: f64,
    pub evaluations: usize,
}

/// `inf_{ν ∈ [lo, hi]} {ν + Σ w_i f*(φ_i − ν)}` by golden section.
pub fn lambda_f(weights: &[f64], phi: &[f64], div: &dyn Divergence, domain: (f64, f64)) -> Result<LambdaF> {
    let (lo, hi) = domain;
    if !(lo <= hi) {
        return Err(Error::EmptyDomain { lo, hi });
    }
    let obj = |nu: f64| {
        let mut s = nu;
        for (w, f) in weights.iter().zip(phi) {
            if *w == 0.0 {
                continue;
            }
            match div.f_star(f - nu).finite() {
                Some(v) => s += w * v,
                None => return f64::INFINITY,
            }
        }
        s
    };
    let tol = 1e-13 * (1.0 + lo.abs().max(hi.abs()));
    let m = golden_section_min(obj, lo, hi, tol, GOLDEN_MAX_ITER)?;
    // The ends are checked too so boundary optima are not lost to the midpoint rule.
    let (mut nu, mut value) = (m.x, m.value);
    for e in [lo, hi] {
        let v = obj(e);
        if v < value {
            nu = e;
            value = v;
        }
    }
    Ok(LambdaF { value, nu_opt: nu, evaluations: m.evaluations + 2 })
}

/// `λ Λ_f[L/λ]` computed on the shifted integrand `(L − max L)/λ ≤ 0`;
/// returns the value and the unshifted ν.
pub fn scaled_lambda_f(weights: &[f64], losses: &[f64], lambda: f64, div: &dyn Divergence) -> Result<(f64, f64)> {
    let top = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi: Vec<f64> = losses.iter().map(|l| (l - top) / lambda).collect();
    let p_top: f64 = weights.iter().zip(&phi).filter(|(_, f)| **f == 0.0).map(|(w, _)| w).sum();
    let (s_lo, hi) = nu_domain(weights, &phi, div, NuDomain::Simple)?;
    let (t_lo, _) = nu_domain(weights, &phi, div, NuDomain::Tail { alpha_tilde: 0.0, p: p_top.min(1.0) })?;
    let lo = s_lo.max(t_lo).min(hi);
    let r = lambda_f(weights, &phi, div, (lo, hi))?;
    Ok((top + lambda * r.value, top / lambda + r.nu_opt))
}

/// OT-regularized f-divergence dual value.
pub fn otreg_dual(oracle: &dyn TransformOracle, div: &dyn Divergence, r: f64, tol: f64) -> Result<DualSolution> {
    check_radius(r)?;
    let w = oracle.weights();
    let (lim, lim_cert) = oracle.transforms_limit_zero()?;
    let limit_zero = lim.iter().zip(w).filter(|(_, w)| **w > 0.0).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let cert = RefCell::new(lim_cert);
    let m = minimize_over_lambda(
        |lam| {
            let (v, c) = oracle.transforms(lam)?;
            let mut cur = cert.borrow_mut();
            *cur = cur.and(c);
            Ok(lam * r + scaled_lambda_f(w, &v, lam, div)?.0)
        },
        limit_zero,
        tol,
    )?;
    let (nu_opt, rho_opt) = if m.at_boundary {
        (None, None)
    } else {
        let (v, _) = oracle.transforms(m.lambda)?;
        let nu = scaled_lambda_f(w, &v, m.lambda, div)?.1;
        (Some(nu), Some(m.lambda * nu))
    };
    Ok(DualSolution {
        value: m.value,
        lambda_opt: m.lambda,
        nu_opt,
        rho_opt,
        evaluations: m.evaluations,
        certificate: cert.into_inner(),
        at_boundary: m.at_boundary,
    })
}

/// KL dual through the closed form `λ log E exp(L^c_λ/λ)`.
pub fn kl_dual(oracle: &dyn TransformOracle, r: f64, tol: f64) -> Result<DualSolution> {
    check_radius(r)?;
    let w = oracle.weights();
    let (lim, lim_cert) = oracle.transforms_limit_zero()?;
    let limit_zero = lim.iter().zip(w).filter(|(_, w)| **w > 0.0).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let scaled = |v: &[f64], lam: f64| {
        let a: Vec<f64> = v.iter().map(|l| l / lam).collect();
        lam * log_sum_exp_weighted(w, &a)
    };
    let cert = RefCell::new(lim_cert);
    let m = minimize_over_lambda(
        |lam| {
            let (v, c) = oracle.transforms(lam)?;
            let mut cur = cert.borrow_mut();
            *cur = cur.and(c);
            Ok(lam * r + scaled(&v, lam))
        },
        limit_zero,
        tol,
    )?;
    let (nu_opt, rho_opt) = if m.at_boundary {
        (None, None)
    } else {
        let (v, _) = oracle.transforms(m.lambda)?;
        let nu = scaled(&v, m.lambda) / m.lambda - 1.0;
        (Some(nu), Some(m.lambda * nu))
    };
    Ok(DualSolution {
        value: m.value,
        lambda_opt: m.lambda,
        nu_opt,
        rho_opt,
        evaluations: m.evaluations,
        certificate: cert.into_inner(),
        at_boundary: m.at_boundary,
    })
}

/// A full dual problem on a sample.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub adversary: Adversary,
    pub divergence: Option<Arc<dyn Divergence>>,
    pub radius: f64,
    pub theta: Vec<f64>,
    pub sample: Dataset,
    pub outer_tol: f64,
}

impl DualProblem {
    pub fn new(
        family: Arc<dyn LossFamily>,
        cost: TransportCost,
        inner: Arc<dyn InnerSolver>,
        divergence: Option<Arc<dyn Divergence>>,
        radius: f64,
        theta: Vec<f64>,
        sample: Dataset,
    ) -> Result<Self> {
        check_radius(radius)?;
        if sample.is_empty() {
            return Err(Error::invalid("the sample is empty"));
        }
        Ok(Self {
            adversary: Adversary::new(family, cost, inner),
            divergence,
            radius,
            theta,
            sample,
            outer_tol: DEFAULT_OUTER_TOL,
        })
    }

    pub fn oracle(&self) -> Result<SampleOracle<'_>> {
        SampleOracle::new(&self.adversary, &self.theta, &self.sample)
    }

    pub fn ot_dro_dual(&self) -> Result<DualSolution> {
        if self.divergence.is_some() {
            return Err(Error::invalid("ot_dro_dual expects no divergence"));
        }
        ot_dual(&self.oracle()?, self.radius, self.outer_tol)
    }

    pub fn otreg_fdiv_dual(&self) -> Result<DualSolution> {
        let div = self.divergence.as_ref().ok_or_else(|| Error::invalid("otreg_fdiv_dual needs a divergence"))?;
        otreg_dual(&self.oracle()?, div.as_ref(), self.radius, self.outer_tol)
    }

    pub fn kl_dro_dual(&self) -> Result<DualSolution> {
        match &self.divergence {
            Some(d) if d.name() == "kl" => kl_dual(&self.oracle()?, self.radius, self.outer_tol),
            _ => Err(Error::invalid("kl_dro_dual needs the KL divergence")),
        }
    }

    /// Dispatches on the presence of a divergence.
    pub fn solve(&self) -> Result<DualSolution> {
        match &self.divergence {
            None => self.ot_dro_dual(),
            Some(_) => self.otreg_fdiv_dual(),
        }
    }

    /// Same problem at another parameter.
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self { theta, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub lambda: f64,
    pub actual: f64,
    pub bound: f64,
}

impl LimitRow {
    pub fn holds(&self) -> bool {
        self.actual <= self.bound + 1e-8
    }
}

/// Compares `|λ Λ_f[L^c_λ/λ] − E[L^{c_δ}]|` with
/// `λ ψ*(L_X/λ) + β ((f*)'₊(β/λ + s₀) − (f*)'₊(s₀))` on a λ-grid.
pub fn lambda_limit_check(prob: &DualProblem, lambda_grid: &[f64]) -> Result<Vec<LimitRow>> {
    let div = prob.divergence.as_ref().ok_or_else(|| Error::invalid("lambda_limit_check needs a divergence"))?;
    let oracle = prob.oracle()?;
    let w = oracle.weights();
    let mean_delta = weighted_mean(w, &oracle.delta_transforms()?);
    let beta = prob.adversary.family.constants(prob.adversary.cost.norm).beta;
    let s0 = div.s0();
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for &lam in lambda_grid {
        let (v, _) = oracle.transforms(lam)?;
        let (val, _) = scaled_lambda_f(w, &v, lam, div.as_ref())?;
        let bound = prob.adversary.sandwich_bound(lam)
            + beta * (div.f_star_right_deriv(beta / lam + s0) - div.f_star_right_deriv(s0));
        rows.push(LimitRow { lambda: lam, actual: (val - mean_delta).abs(), bound });
    }
    Ok(rows)
}

/// Outcome of an ERM search over the unit θ-ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmResult {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Coarse best minus refined best; an estimate of the optimization error.
    pub eps_opt: f64,
    pub evaluations: usize,
    /// `LowerBound` when the budget ran out before the search finished.
    pub certificate: Certificate,
}

pub type Objective<'a> = dyn Fn(&[f64]) -> Result<f64> + Sync + 'a;

pub trait ErmSearch: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn to_config(&self) -> Value;

    fn search(&self, objective: &Objective<'_>, k: usize) -> Result<ErmResult>;
}

/// Projects onto the Euclidean unit ball.
pub fn project_unit_ball(theta: &mut [f64]) {
    let n = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if n > 1.0 {
        for t in theta.iter_mut() {
            *t /= n;
        }
    }
}

/// Points of the regular grid with `m` points per axis on `[−1, 1]^k`
/// that fall inside the unit ball.
pub fn ball_grid(k: usize, m: usize) -> Vec<Vec<f64>> {
    let m = m.max(2);
    let axis: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * m);
        for p in &out {
            for a in &axis {
                let mut q = p.clone();
                q.push(*a);
                next.push(q);
            }
        }
        out = next;
    }
    out.retain(|p| p.iter().map(|t| t * t).sum::<f64>() <= 1.0 + 1e-12);
    out
}

fn best_of(objective: &Objective<'_>, points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let mut best = (points[0].clone(), f64::INFINITY);
    for p in points {
        let v = objective(p)?;
        if v < best.1 {
            best = (p.clone(), v);
        }
    }
    Ok(best)
}

/// Exhaustive grid; ε_opt compares against a grid of twice the resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearch {
    pub points_per_axis: usize,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self { points_per_axis: 9 }
    }
}

impl ErmSearch for GridSearch {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn to_config(&self) -> Value {
        json!({"search": "grid", "points_per_axis": self.points_per_axis})
    }

    fn search(&self, objective: &Objective<'_>, k: usize) -> Result<ErmResult> {
        if k == 0 || k > 4 {
            return Err(Error::invalid(format!("grid search supports 1 <= k <= 4, got {k}")));
        }
        let m = self.points_per_axis.max(2);
        let coarse = ball_grid(k, m);
        let fine = ball_grid(k, 2 * m - 1);
        let (_, coarse_best) = best_of(objective, &coarse)?;
        let (theta, value) = best_of(objective, &fine)?;
        Ok(ErmResult {
            theta,
            value,
            eps_opt: (coarse_best - value).max(0.0),
            evaluations: coarse.len() + fine.len(),
            certificate: Certificate::Exact,
        })
    }
}

fn random_in_ball<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if p.iter().map(|t| t * t).sum::<f64>() <= 1.0 {
            return p;
        }
    }
}

/// Uniform samples in the ball; ε_opt compares the first half with the whole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomSearch {
    pub samples: usize,
    pub seed: u64,
}

impl Default for RandomSearch {
    fn default() -> Self {
        Self { samples: 200, seed: 0 }
    }
}

impl ErmSearch for RandomSearch {
    fn name(&self) -> &'static str {
        "random_search"
    }

    fn to_config(&self) -> Value {
        json!({"search": "random_search", "samples": self.samples, "seed": self.seed})
    }

    fn search(&self, objective: &Objective<'_>, k: usize) -> Result<ErmResult> {
        if k == 0 {
            return Err(Error::invalid("parameter dimension must be positive"));
        }
        let n = self.samples.max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut points = vec![vec![0.0; k]];
        points.extend((1..n).map(|_| random_in_ball(&mut rng, k)));
        let (_, half) = best_of(objective, &points[..n / 2])?;
        let (theta, value) = best_of(objective, &points)?;
        Ok(ErmResult {
            theta,
            value,
            eps_opt: (half - value).max(0.0),
            evaluations: n,
            certificate: Certificate::LowerBound,
        })
    }
}

/// Projected descent with central finite-difference (sub)gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgradientDescent {
    pub steps: usize,
    pub step_size: f64,
    pub fd_step: f64,
}

impl Default for SubgradientDescent {
    fn default() -> Self {
        Self { steps: 100, step_size: 0.5, fd_step: 1e-4 }
    }
}

impl ErmSearch for SubgradientDescent {
    fn name(&self) -> &'static str {
        "subgradient_descent"
    }

    fn to_config(&self) -> Value {
        json!({"search": "subgradient_descent", "steps": self.steps, "step_size": self.step_size, "fd_step": self.fd_step})
    }

    fn search(&self, objective: &Objective<'_>, k: usize) -> Result<ErmResult> {
        if k == 0 {
            return Err(Error::invalid("parameter dimension must be positive"));
        }
        let mut theta = vec![0.0; k];
        let mut best = (theta.clone(), objective(&theta)?);
        let mut half_best = best.1;
        let mut evaluations = 1;
        let h = self.fd_step;
        for step in 0..self.steps {
            let mut g = vec![0.0; k];
            for j in 0..k {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[j] += h;
                b[j] -= h;
                project_unit_ball(&mut a);
                project_unit_ball(&mut b);
                let span = a[j] - b[j];
                if span > 0.0 {
                    g[j] = (objective(&a)? - objective(&b)?) / span;
                }
                evaluations += 2;
            }
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn == 0.0 {
                break;
            }
            let eta = self.step_size / (1.0 + step as f64).sqrt();
            for (t, gj) in theta.iter_mut().zip(&g) {
                *t -= eta * gj / gn;
            }
            project_unit_ball(&mut theta);
            let v = objective(&theta)?;
            evaluations += 1;
            if v < best.1 {
                best = (theta.clone(), v);
            }
            if step + 1 == self.steps / 2 {
                half_best = best.1;
            }
        }
        Ok(ErmResult {
            theta: best.0,
            value: best.1,
            eps_opt: (half_best - best.1).max(0.0),
            evaluations,
            certificate: Certificate::LowerBound,
        })
    }
}

pub(crate) fn build_grid_search(config: &Value) -> Result<Arc<dyn ErmSearch>> {
    Ok(Arc::new(params::<GridSearch>(config)?))
}

pub(crate) fn build_random_search(config: &Value) -> Result<Arc<dyn ErmSearch>> {
    Ok(Arc::new(params::<RandomSearch>(config)?))
}

pub(crate) fn build_subgradient_descent(config: &Value) -> Result<Arc<dyn ErmSearch>> {
    Ok(Arc::new(params::<SubgradientDescent>(config)?))
}

/// Minimizes the dual value of `prob` over θ with the given search.
pub fn erm_minimize(prob: &DualProblem, search: &dyn ErmSearch) -> Result<ErmResult> {
    let k = prob.adversary.family.param_dim();
    let objective = |theta: &[f64]| prob.with_theta(theta.to_vec()).solve().map(|s| s.value);
    search.search(&objective, k)
}
