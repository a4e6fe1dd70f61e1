//! Brute-force primal DRO values on finite instances.
//!
//! `ot_primal_lp` solves the transport LP with the dense simplex.
//! `otreg_primal_convex` solves the OT-regularized problem over the
//! reweighting `η` and the coupling `π` with a log-barrier Newton method.
//! Neither shares code with the dual solvers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctransform::{Adversary, Certificate};
use crate::divergence::Divergence;
use crate::dual::TransformOracle;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::objective::{Dataset, Point};
use crate::simplex::DenseLp;

/// Candidate destinations of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCandidates {
    pub losses: Vec<f64>,
    pub costs: Vec<ExtReal>,
    /// Index of the source itself among its candidates.
    pub own: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub weights: Vec<f64>,
    pub sources: Vec<SourceCandidates>,
}

impl FiniteInstance {
    pub fn new(sources: Vec<SourceCandidates>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("a finite instance needs at least one source"));
        }
        for (i, s) in sources.iter().enumerate() {
            if s.losses.len() != s.costs.len() || s.own >= s.losses.len() {
                return Err(Error::invalid(format!("source {i}: malformed candidate lists")));
            }
            if s.costs[s.own] != ExtReal::ZERO {
                return Err(Error::invalid(format!("source {i}: own candidate must have cost 0")));
            }
            if s.costs.iter().any(|c| matches!(c, ExtReal::Finite(v) if *v < 0.0)) {
                return Err(Error::invalid(format!("source {i}: negative cost")));
            }
        }
        let n = sources.len();
        Ok(Self { weights: vec![1.0 / n as f64; n], sources })
    }

    /// Builds the instance for a sample, with `extra[i]` as additional
    /// destinations of source `i` (the source itself is always included).
    pub fn from_sample(adversary: &Adversary, theta: &[f64], sample: &Dataset, extra: &[Vec<Vec<f64>>]) -> Result<Self> {
        if extra.len() != sample.len() {
            return Err(Error::invalid("one candidate list per source is required"));
        }
        let fam = adversary.family.as_ref();
        let mut sources = Vec::with_capacity(sample.len());
        for (z, xs) in sample.points.iter().zip(extra) {
            let mut losses = vec![fam.loss(theta, z)?];
            let mut costs = vec![ExtReal::ZERO];
            for x in xs {
                let zt = Point { x: x.clone(), y: z.y };
                losses.push(fam.loss(theta, &zt)?);
                costs.push(adversary.cost.eval(z, &zt)?);
            }
            sources.push(SourceCandidates { losses, costs, own: 0 });
        }
        Self::new(sources)
    }

    pub fn mean_source_loss(&self) -> f64 {
        self.sources.iter().zip(&self.weights).map(|(s, w)| w * s.losses[s.own]).sum()
    }

    /// Finite-cost `(source, loss, cost)` triples.
    fn finite_entries(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            for (l, c) in s.losses.iter().zip(&s.costs) {
                if let ExtReal::Finite(c) = c {
                    out.push((i, *l, *c));
                }
            }
        }
        out
    }
}

impl TransformOracle for FiniteInstance {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn transforms(&self, lambda: f64) -> Result<(Vec<f64>, Certificate)> {
        let v = self
            .sources
            .iter()
            .map(|s| {
                s.losses
                    .iter()
                    .zip(&s.costs)
                    .filter_map(|(l, c)| c.finite().map(|c| l - lambda * c))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Ok((v, Certificate::Exact))
    }

    fn transforms_limit_zero(&self) -> Result<(Vec<f64>, Certificate)> {
        let v = self
            .sources
            .iter()
            .map(|s| {
                s.losses
                    .iter()
                    .zip(&s.costs)
                    .filter(|(_, c)| c.is_finite())
                    .map(|(l, _)| *l)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Ok((v, Certificate::Exact))
    }

    fn lambda_free(&self) -> bool {
        self.sources.iter().all(|s| s.costs.iter().all(|c| matches!(c, ExtReal::PosInf | ExtReal::Finite(0.0))))
    }
}

/// `sup {E_Q[L] : C(P, Q) ≤ r}` on the instance, by linear programming.
pub fn ot_primal_lp(inst: &FiniteInstance, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
    }
    let entries = inst.finite_entries();
    let m = inst.sources.len();
    let nv = entries.len();
    // Columns: π entries, then the budget slack. Rows: marginals, then budget.
    let mut a = vec![vec![0.0; nv + 1]; m + 1];
    let mut c = vec![0.0; nv + 1];
    let mut basis = vec![0; m + 1];
    let mut seen = vec![0usize; m];
    for (v, &(i, l, cost)) in entries.iter().enumerate() {
        a[i][v] = 1.0;
        a[m][v] = cost;
        c[v] = l;
        let s = &inst.sources[i];
        let idx = seen[i];
        seen[i] += 1;
        // Position of this entry among source i's finite candidates.
        let own_pos = s.costs[..s.own].iter().filter(|c| c.is_finite()).count();
        if idx == own_pos {
            basis[i] = v;
        }
    }
    a[m][nv] = 1.0;
    basis[m] = nv;
    let mut b = inst.weights.clone();
    b.push(r);
    let sol = DenseLp { a, b, c }.solve(basis)?;
    Ok(sol.objective)
}

/// Newton steps allowed per barrier weight before the weight is raised.
const INNER_NEWTON_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierConfig {
    /// Stop once the barrier duality-gap bound falls below this.
    pub gap_tol: f64,
    pub max_newton: usize,
    pub growth: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-9, max_newton: 5000, growth: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalResult {
    /// Objective at a feasible point, hence a valid lower bound.
    pub value: f64,
    /// Upper bound on the optimality gap when `converged`.
    pub gap_bound: f64,
    pub converged: bool,
    pub newton_steps: usize,
}

struct Barrier<'a> {
    div: &'a dyn Divergence,
    owner: Vec<usize>,
    loss: Vec<f64>,
    cost: Vec<f64>,
    weights: &'a [f64],
    r: f64,
}

impl Barrier<'_> {
    fn masses(&self, pi: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.weights.len()];
        for (v, p) in pi.iter().enumerate() {
            eta[self.owner[v]] += p;
        }
        eta
    }

    /// `Σ_i p_i f(η_i/p_i) + Σ c π`, or `None` outside the domain of f.
    fn budget(&self, pi: &[f64]) -> Option<f64> {
        let eta = self.masses(pi);
        let mut g = 0.0;
        for (e, p) in eta.iter().zip(self.weights) {
            g += p * self.div.f(e / p).ok()?.finite()?;
        }
        Some(g + pi.iter().zip(&self.cost).map(|(a, b)| a * b).sum::<f64>())
    }

    fn value(&self, t: f64, pi: &[f64]) -> Option<f64> {
        if pi.iter().any(|p| *p <= 0.0) {
            return None;
        }
        let slack = self.r - self.budget(pi)?;
        if slack <= 0.0 {
            return None;
        }
        let lin: f64 = pi.iter().zip(&self.loss).map(|(a, b)| a * b).sum();
        Some(t * lin + slack.ln() + pi.iter().map(|p| p.ln()).sum::<f64>())
    }

    /// Newton direction on `{Σ π = 1}` and the squared decrement.
    fn newton(&self, t: f64, pi: &[f64]) -> Result<(Vec<f64>, f64)> {
        let nv = pi.len();
        let eta = self.masses(pi);
        let slack = self.r - self.budget(pi).ok_or_else(|| Error::invalid("left the barrier domain"))?;
        let dg: Vec<f64> = (0..nv)
            .map(|v| {
                let i = self.owner[v];
                self.div.f_deriv(eta[i] / self.weights[i]) + self.cost[v]
            })
            .collect();
        let grad: Vec<f64> = (0..nv).map(|v| t * self.loss[v] - dg[v] / slack + 1.0 / pi[v]).collect();
        let mut k = DMatrix::<f64>::zeros(nv + 1, nv + 1);
        for a in 0..nv {
            for b in 0..nv {
                let mut h = -dg[a] * dg[b] / (slack * slack);
                if self.owner[a] == self.owner[b] {
                    let i = self.owner[a];
                    h -= self.div.f_second_deriv(eta[i] / self.weights[i]) / self.weights[i] / slack;
                }
                if a == b {
                    h -= 1.0 / (pi[a] * pi[a]);
                }
                k[(a, b)] = h;
            }
            k[(a, nv)] = 1.0;
            k[(nv, a)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(nv + 1);
        for v in 0..nv {
            rhs[v] = -grad[v];
        }
        let sol = k.lu().solve(&rhs).ok_or_else(|| Error::NonConvergence {
            iterations: 0,
            detail: "singular Newton system".into(),
        })?;
        let step: Vec<f64> = (0..nv).map(|v| sol[v]).collect();
        let decrement = grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
        Ok((step, decrement))
    }
}

/// `sup {E_Q[L] : D_f^c(Q‖P) ≤ r}` with η restricted to the sources.
pub fn otreg_primal_convex(inst: &FiniteInstance, div: &dyn Divergence, r: f64, cfg: &BarrierConfig) -> Result<PrimalResult> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
    }
    if r == 0.0 {
        // f(1) = 0 and strict convexity near 1 leave only Q = P.
        return Ok(PrimalResult { value: inst.mean_source_loss(), gap_bound: 0.0, converged: true, newton_steps: 0 });
    }
    let entries = inst.finite_entries();
    let nv = entries.len();
    let bar = Barrier {
        div,
        owner: entries.iter().map(|e| e.0).collect(),
        loss: entries.iter().map(|e| e.1).collect(),
        cost: entries.iter().map(|e| e.2).collect(),
        weights: &inst.weights,
        r,
    };
    // Start near the identity coupling, which costs nothing.
    let mut own_mask = vec![false; nv];
    let mut pos = 0;
    for s in &inst.sources {
        let mut k = 0;
        for (j, c) in s.costs.iter().enumerate() {
            if c.is_finite() {
                if j == s.own {
                    own_mask[pos + k] = true;
                }
                k += 1;
            }
        }
        pos += k;
    }
    let identity: Vec<f64> = (0..nv)
        .map(|v| if own_mask[v] { inst.weights[bar.owner[v]] } else { 0.0 })
        .collect();
    let mut eps = 0.5;
    let mut pi = loop {
        let cand: Vec<f64> = identity.iter().map(|p| (1.0 - eps) * p + eps / nv as f64).collect();
        if matches!(bar.budget(&cand), Some(g) if g < 0.5 * r) {
            break cand;
        }
        eps *= 0.5;
        if eps < 1e-300 {
            return Err(Error::invalid("could not find a strictly feasible start"));
        }
    };
    let m = (nv + 1) as f64;
    let mut t = 1.0;
    let mut steps = 0;
    let mut converged = false;
    'outer: loop {
        for _ in 0..INNER_NEWTON_CAP {
            let (dir, dec) = bar.newton(t, &pi)?;
            if dec.abs() <= 1e-10 {
                break;
            }
            let f0 = bar.value(t, &pi).ok_or_else(|| Error::invalid("left the barrier domain"))?;
            let mut s = 1.0;
            let next = loop {
                let cand: Vec<f64> = pi.iter().zip(&dir).map(|(p, d)| p + s * d).collect();
                if let Some(f1) = bar.value(t, &cand) {
                    if f1 >= f0 + 0.25 * s * dec {
                        break Some(cand);
                    }
                }
                s *= 0.5;
                if s < 1e-20 {
                    break None;
                }
            };
            steps += 1;
            match next {
                Some(p) => pi = p,
                None => break,
            }
            if steps >= cfg.max_newton {
                break 'outer;
            }
        }
        if m / t < cfg.gap_tol {
            converged = true;
            break;
        }
        t *= cfg.growth;
    }
    let value = pi.iter().zip(&bar.loss).map(|(a, b)| a * b).sum();
    Ok(PrimalResult { value, gap_bound: m / t, converged, newton_steps: steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub tol: f64,
    /// Whether `dual ≤ primal + tol` was enforced too.
    pub two_sided: bool,
}

/// Asserts `primal ≤ dual + tol`, and `dual ≤ primal + tol` for exact certificates.
pub fn weak_duality_check(primal: f64, dual: f64, certificate: Certificate, tol: f64) -> Result<DualityReport> {
    let two_sided = certificate == Certificate::Exact;
    if primal > dual + tol || (two_sided && dual > primal + tol) {
        return Err(Error::DualityViolation { primal, dual, tol });
    }
    Ok(DualityReport { primal, dual, gap: dual - primal, tol, two_sided })
}

/// Destinations for a duality check: the dual's argmaxes at `λ` and its
/// neighbours, the `λ → 0⁺` and ball argmaxes, and `random` box points.
pub fn duality_candidates<R: Rng>(
    adversary: &Adversary,
    theta: &[f64],
    sample: &Dataset,
    lambda: f64,
    random: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let b = adversary.family.bound();
    let d = adversary.family.dim();
    let mut out = Vec::with_capacity(sample.len());
    for z in &sample.points {
        let mut xs = Vec::new();
        if lambda > 0.0 {
            for f in [1.0, 1.0 - 1e-7, 1.0 + 1e-7, 1.0 - 1e-4, 1.0 + 1e-4] {
                xs.push(adversary.c_transform(theta, lambda * f, z)?.argmax_x);
            }
        }
        xs.push(adversary.c_transform_limit_zero(theta, z)?.argmax_x);
        xs.push(adversary.c_delta_transform(theta, z)?.argmax_x);
        for _ in 0..random {
            xs.push((0..d).map(|_| rng.random_range(-b..=b)).collect());
        }
        out.push(xs);
    }
    Ok(out)
}
