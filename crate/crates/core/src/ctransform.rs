//! The c-transform `L^c_λ(z) = sup_{z̃} {L(z̃) − λ c(z, z̃)}` and the ball
//! transform `L^{c_δ}(z) = sup_{‖x̃−x‖ ≤ δ} L(x̃, y)`.
//!
//! The attacker keeps the label and stays inside the predictor box. For a
//! ridge loss `link(⟨w, x⟩)` the best displacement of norm `t` is known in
//! closed form, so the search collapses to the scalar `t`; with a clamped
//! linear link that scalar problem is concave and solved exactly.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost::{Norm, TransportCost};
use crate::error::{Error, Result};
use crate::numeric::{bisect_threshold, golden_section_max};
use crate::objective::{dot, Dataset, LossFamily, Point, Ridge};
use crate::registry::params;

const GOLDEN_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Exact,
    LowerBound,
}

impl Certificate {
    /// Exact only when both parts are.
    pub fn and(self, other: Certificate) -> Certificate {
        if self == Certificate::Exact && other == Certificate::Exact {
            Certificate::Exact
        } else {
            Certificate::LowerBound
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformResult {
    pub value: f64,
    pub argmax_x: Vec<f64>,
    pub certificate: Certificate,
}

/// Best box-feasible displacement along a ridge direction.
///
/// `gain(t) = max {⟨w, d⟩ : ‖d‖ ≤ t, x + d ∈ [−B, B]^d}`, concave and
/// non-decreasing in `t`, constant beyond `t_sat`.
#[derive(Debug, Clone)]
pub struct RidgeGeometry {
    pub u0: f64,
    norm: Norm,
    dim: usize,
    /// (coordinate, |w_j|, room to the box face, direction), sorted by cap/|w| for L2.
    coords: Vec<(usize, f64, f64, f64)>,
    prefix_cap2: Vec<f64>,
    prefix_wcap: Vec<f64>,
    suffix_w2: Vec<f64>,
    pub t_sat: f64,
    full_gain: f64,
}

impl RidgeGeometry {
    pub fn new(w: &[f64], x: &[f64], bound: f64, norm: Norm) -> Self {
        let mut coords: Vec<_> = w
            .iter()
            .zip(x)
            .enumerate()
            .filter(|(_, (wj, _))| **wj != 0.0)
            .map(|(j, (&wj, &xj))| {
                let cap = if wj > 0.0 { bound - xj } else { bound + xj };
                (j, wj.abs(), cap.max(0.0), wj.signum())
            })
            .filter(|c| c.2 > 0.0)
            .collect();
        coords.sort_by(|a, b| (a.2 / a.1).total_cmp(&(b.2 / b.1)));
        let m = coords.len();
        let mut prefix_cap2 = vec![0.0; m + 1];
        let mut prefix_wcap = vec![0.0; m + 1];
        for (i, c) in coords.iter().enumerate() {
            prefix_cap2[i + 1] = prefix_cap2[i] + c.2 * c.2;
            prefix_wcap[i + 1] = prefix_wcap[i] + c.1 * c.2;
        }
        let mut suffix_w2 = vec![0.0; m + 1];
        for i in (0..m).rev() {
            suffix_w2[i] = suffix_w2[i + 1] + coords[i].1 * coords[i].1;
        }
        let t_sat = match norm {
            Norm::L2 => prefix_cap2[m].sqrt(),
            Norm::Linf => coords.iter().fold(0.0_f64, |a, c| a.max(c.2)),
        };
        Self {
            u0: dot(w, x),
            norm,
            dim: x.len(),
            full_gain: prefix_wcap[m],
            coords,
            prefix_cap2,
            prefix_wcap,
            suffix_w2,
            t_sat,
        }
    }

    /// Water level τ and number of capped coordinates for an L2 budget `t < t_sat`.
    fn water_level(&self, t: f64) -> (usize, f64) {
        let t2 = t * t;
        for m in 0..self.coords.len() {
            let c = &self.coords[m];
            let tau_m = c.2 / c.1;
            if self.prefix_cap2[m] + tau_m * tau_m * self.suffix_w2[m] >= t2 {
                let tau = ((t2 - self.prefix_cap2[m]).max(0.0) / self.suffix_w2[m]).sqrt();
                return (m, tau);
            }
        }
        (self.coords.len(), 0.0)
    }

    pub fn gain(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.t_sat {
            return self.full_gain;
        }
        match self.norm {
            Norm::Linf => self.coords.iter().map(|c| c.1 * c.2.min(t)).sum(),
            Norm::L2 => {
                let (m, tau) = self.water_level(t);
                self.prefix_wcap[m] + tau * self.suffix_w2[m]
            }
        }
    }

    /// The displacement achieving `gain(t)`.
    pub fn displacement(&self, t: f64) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        if t <= 0.0 {
            return d;
        }
        let tau = match self.norm {
            Norm::L2 if t < self.t_sat => self.water_level(t).1,
            _ => f64::INFINITY,
        };
        for &(j, aw, cap, sign) in &self.coords {
            let a = match self.norm {
                Norm::Linf => cap.min(t),
                Norm::L2 => cap.min(tau * aw),
            };
            d[j] = sign * a;
        }
        d
    }

    /// Smallest `t` with `u0 + gain(t) ≥ level`, if any.
    pub fn entry(&self, level: f64) -> Option<f64> {
        if self.u0 >= level {
            return Some(0.0);
        }
        if self.u0 + self.full_gain < level {
            return None;
        }
        Some(bisect_threshold(|t| self.u0 + self.gain(t) >= level, 0.0, self.t_sat, 1e-15))
    }
}

/// Everything an inner solver needs for one point.
#[derive(Debug, Clone, Copy)]
pub struct InnerProblem<'a> {
    pub family: &'a dyn LossFamily,
    pub theta: &'a [f64],
    pub cost: &'a TransportCost,
    /// Penalty weight; 0 drops the penalty.
    pub lambda: f64,
    pub z: &'a Point,
    /// Restrict to the δ-ball instead of paying the penalty.
    pub hard: bool,
}

impl InnerProblem<'_> {
    /// `L(x̃) − λ φ(‖x̃ − x‖)`, or `None` where the cost is infinite.
    pub fn objective(&self, x_tilde: &[f64]) -> Result<Option<f64>> {
        let t = self.cost.norm.dist(x_tilde, &self.z.x);
        let zt = Point { x: x_tilde.to_vec(), y: self.z.y };
        let loss = self.family.loss(self.theta, &zt)?;
        if self.hard {
            return Ok((t <= self.cost.delta * (1.0 + 1e-12)).then_some(loss));
        }
        if self.lambda == 0.0 {
            return Ok(Some(loss));
        }
        Ok(self.cost.phi(t)?.finite().map(|c| loss - self.lambda * c))
    }

    /// Largest useful displacement norm: beyond it the penalty exceeds β.
    fn radius(&self, geo: &RidgeGeometry) -> f64 {
        let delta = self.cost.delta;
        if self.hard {
            delta.min(geo.t_sat)
        } else if self.lambda == 0.0 {
            geo.t_sat
        } else {
            let beta = self.family.constants(self.cost.norm).beta;
            geo.t_sat.min(delta + self.cost.penalty.reach(beta / self.lambda))
        }
    }

    /// Objective along the ridge at displacement norm `t`.
    fn ridge_value(&self, ridge: &Ridge, geo: &RidgeGeometry, t: f64) -> f64 {
        let loss = ridge.link.value(geo.u0 + geo.gain(t));
        if self.hard || self.lambda == 0.0 || t <= self.cost.delta {
            return loss;
        }
        match self.cost.penalty.psi(t - self.cost.delta) {
            Ok(p) => p.finite().map_or(f64::NEG_INFINITY, |p| loss - self.lambda * p),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

pub trait InnerSolver: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn to_config(&self) -> Value;

    fn tolerance(&self) -> f64;

    /// Approximate maximizer; the value is a lower bound on the supremum.
    fn solve(&self, problem: &InnerProblem<'_>) -> Result<TransformResult>;
}

/// Dense grid over the ridge displacement norm, refined by golden section
/// around the best grid point. Needs a ridge family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid1D {
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for Grid1D {
    fn default() -> Self {
        Self { grid_points: 2001, tolerance: 1e-9 }
    }
}

impl InnerSolver for Grid1D {
    fn name(&self) -> &'static str {
        "grid_1d"
    }

    fn to_config(&self) -> Value {
        json!({"strategy": "grid_1d", "grid_points": self.grid_points, "tolerance": self.tolerance})
    }

    fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn solve(&self, p: &InnerProblem<'_>) -> Result<TransformResult> {
        let ridge = p
            .family
            .ridge(p.theta, p.z.y)
            .ok_or_else(|| Error::invalid("grid_1d needs a ridge loss family"))?;
        let geo = RidgeGeometry::new(&ridge.w, &p.z.x, p.family.bound(), p.cost.norm);
        let hi = p.radius(&geo);
        let n = self.grid_points.max(2);
        let mut ts: Vec<f64> = (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect();
        ts.push(p.cost.delta.min(hi));
        ts.sort_by(f64::total_cmp);
        let vals: Vec<f64> = ts.iter().map(|&t| p.ridge_value(&ridge, &geo, t)).collect();
        let (mut best_i, mut best) = (0, vals[0]);
        for (i, &v) in vals.iter().enumerate() {
            if v > best {
                best_i = i;
                best = v;
            }
        }
        let mut best_t = ts[best_i];
        let lo = ts[best_i.saturating_sub(1)];
        let up = ts[(best_i + 1).min(ts.len() - 1)];
        if up > lo {
            let m = golden_section_max(|t| p.ridge_value(&ridge, &geo, t), lo, up, self.tolerance * (1.0 + up), GOLDEN_MAX_ITER)?;
            if m.value > best {
                best = m.value;
                best_t = m.x;
            }
        }
        let argmax_x = p.z.x.iter().zip(geo.displacement(best_t)).map(|(a, b)| a + b).collect();
        Ok(TransformResult { value: best, argmax_x, certificate: Certificate::LowerBound })
    }
}

/// Projected (sub)gradient ascent in `x̃` from several deterministic starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiStartAscent {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MultiStartAscent {
    fn default() -> Self {
        Self { restarts: 8, steps: 400, step_size: 0.05, tolerance: 1e-4, seed: 0 }
    }
}

impl MultiStartAscent {
    fn project(&self, p: &InnerProblem<'_>, v: &mut [f64]) {
        let x = &p.z.x;
        if p.hard {
            let delta = p.cost.delta;
            match p.cost.norm {
                Norm::L2 => {
                    let dist = Norm::L2.dist(v, x);
                    if dist > delta {
                        let s = if dist > 0.0 { delta / dist } else { 0.0 };
                        for (vi, xi) in v.iter_mut().zip(x) {
                            *vi = xi + s * (*vi - xi);
                        }
                    }
                }
                Norm::Linf => {
                    for (vi, xi) in v.iter_mut().zip(x) {
                        *vi = vi.clamp(xi - delta, xi + delta);
                    }
                }
            }
        }
        // Clamping toward a box that contains x never leaves the ball.
        let b = p.family.bound();
        for vi in v.iter_mut() {
            *vi = vi.clamp(-b, b);
        }
    }

    fn gradient(&self, p: &InnerProblem<'_>, v: &[f64]) -> Result<Vec<f64>> {
        let mut g = p.family.grad_x(p.theta, &Point { x: v.to_vec(), y: p.z.y })?;
        if p.hard || p.lambda == 0.0 {
            return Ok(g);
        }
        let diff: Vec<f64> = v.iter().zip(&p.z.x).map(|(a, b)| a - b).collect();
        let t = p.cost.norm.eval(&diff);
        if t <= p.cost.delta || t == 0.0 {
            return Ok(g);
        }
        let slope = p.lambda * p.cost.penalty.psi_deriv(t - p.cost.delta);
        match p.cost.norm {
            Norm::L2 => {
                for (gi, di) in g.iter_mut().zip(&diff) {
                    *gi -= slope * di / t;
                }
            }
            Norm::Linf => {
                let j = (0..diff.len()).max_by(|&a, &b| diff[a].abs().total_cmp(&diff[b].abs())).unwrap_or(0);
                g[j] -= slope * diff[j].signum();
            }
        }
        Ok(g)
    }
}

impl InnerSolver for MultiStartAscent {
    fn name(&self) -> &'static str {
        "multi_start_ascent"
    }

    fn to_config(&self) -> Value {
        json!({
            "strategy": "multi_start_ascent",
            "restarts": self.restarts,
            "steps": self.steps,
            "step_size": self.step_size,
            "tolerance": self.tolerance,
            "seed": self.seed,
        })
    }

    fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn solve(&self, p: &InnerProblem<'_>) -> Result<TransformResult> {
        let x = &p.z.x;
        let b = p.family.bound();
        let mut best_x = x.clone();
        let mut best = p.objective(x)?.ok_or_else(|| Error::invalid("the source point has infinite cost"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for r in 0..self.restarts.max(1) {
            let mut v = x.clone();
            if r > 0 {
                for vi in v.iter_mut() {
                    *vi = if p.hard {
                        *vi + p.cost.delta * rng.random_range(-1.0..=1.0)
                    } else {
                        b * rng.random_range(-1.0..=1.0)
                    };
                }
                self.project(p, &mut v);
            }
            for k in 0..self.steps {
                if let Some(val) = p.objective(&v)? {
                    if val > best {
                        best = val;
                        best_x.clone_from(&v);
                    }
                }
                let g = self.gradient(p, &v)?;
                if g.iter().all(|gi| *gi == 0.0) {
                    break;
                }
                let step = self.step_size / (1.0 + k as f64).sqrt();
                for (vi, gi) in v.iter_mut().zip(&g) {
                    *vi += step * gi;
                }
                self.project(p, &mut v);
            }
            if let Some(val) = p.objective(&v)? {
                if val > best {
                    best = val;
                    best_x = v;
                }
            }
        }
        Ok(TransformResult { value: best, argmax_x: best_x, certificate: Certificate::LowerBound })
    }
}

pub(crate) fn build_grid_1d(config: &Value) -> Result<Arc<dyn InnerSolver>> {
    let s: Grid1D = params(config)?;
    if s.grid_points < 2 || !(s.tolerance > 0.0) {
        return Err(Error::invalid("grid_1d needs grid_points >= 2 and tolerance > 0"));
    }
    Ok(Arc::new(s))
}

pub(crate) fn build_multi_start_ascent(config: &Value) -> Result<Arc<dyn InnerSolver>> {
    let s: MultiStartAscent = params(config)?;
    if s.restarts < 1 || !(s.tolerance > 0.0) || !(s.step_size > 0.0) {
        return Err(Error::invalid("multi_start_ascent needs restarts >= 1, step_size > 0, tolerance > 0"));
    }
    Ok(Arc::new(s))
}

/// A loss family, a transport cost and an inner solver for non-concave cases.
#[derive(Debug, Clone)]
pub struct Adversary {
    pub family: Arc<dyn LossFamily>,
    pub cost: TransportCost,
    pub solver: Arc<dyn InnerSolver>,
}

impl Adversary {
    pub fn new(family: Arc<dyn LossFamily>, cost: TransportCost, solver: Arc<dyn InnerSolver>) -> Self {
        Self { family, cost, solver }
    }

    /// Adversary with the default grid solver.
    pub fn with_default_solver(family: Arc<dyn LossFamily>, cost: TransportCost) -> Self {
        Self::new(family, cost, Arc::new(Grid1D::default()))
    }

    fn check_point(&self, z: &Point) -> Result<()> {
        let b = self.family.bound() * (1.0 + 1e-12);
        if z.x.len() != self.family.dim() || z.x.iter().any(|v| v.abs() > b) {
            return Err(Error::invalid(format!("point {:?} lies outside the predictor box", z.x)));
        }
        Ok(())
    }

    fn problem<'a>(&'a self, theta: &'a [f64], lambda: f64, z: &'a Point, hard: bool) -> InnerProblem<'a> {
        InnerProblem { family: self.family.as_ref(), theta, cost: &self.cost, lambda, z, hard }
    }

    /// Ridge maximum at the largest feasible displacement of norm `≤ radius`.
    fn ridge_at(&self, ridge: &Ridge, geo: &RidgeGeometry, z: &Point, t: f64) -> TransformResult {
        let argmax_x = z.x.iter().zip(geo.displacement(t)).map(|(a, b)| a + b).collect();
        TransformResult { value: ridge.link.value(geo.u0 + geo.gain(t)), argmax_x, certificate: Certificate::Exact }
    }

    /// `L^c_λ(z)` for `λ > 0`.
    pub fn c_transform(&self, theta: &[f64], lambda: f64, z: &Point) -> Result<TransformResult> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        self.check_point(z)?;
        if self.cost.penalty.is_hard() {
            return self.c_delta_transform(theta, z);
        }
        let Some(ridge) = self.family.ridge(theta, z.y) else {
            return self.solver.solve(&self.problem(theta, lambda, z, false));
        };
        let Some(level) = ridge.link.concave_from() else {
            return self.solver.solve(&self.problem(theta, lambda, z, false));
        };
        crate::objective::check_theta(theta)?;
        let geo = RidgeGeometry::new(&ridge.w, &z.x, self.family.bound(), self.cost.norm);
        let p = self.problem(theta, lambda, z, false);
        let delta = self.cost.delta;
        let mut best = self.ridge_at(&ridge, &geo, z, 0.0);
        let inside = self.ridge_at(&ridge, &geo, z, delta.min(geo.t_sat));
        if inside.value > best.value {
            best = inside;
        }
        let hi = p.radius(&geo);
        if let Some(t_enter) = geo.entry(level) {
            let lo = t_enter.max(delta);
            if lo < hi {
                // Concave on [lo, hi]: the link is concave above `level`, the
                // gain is concave and the penalty convex past δ.
                let f = |t: f64| p.ridge_value(&ridge, &geo, t);
                let m = golden_section_max(f, lo, hi, 1e-14 * (1.0 + hi), GOLDEN_MAX_ITER)?;
                for (t, v) in [(m.x, m.value), (lo, f(lo)), (hi, f(hi))] {
                    if v > best.value {
                        let argmax_x = z.x.iter().zip(geo.displacement(t)).map(|(a, b)| a + b).collect();
                        best = TransformResult { value: v, argmax_x, certificate: Certificate::Exact };
                    }
                }
            }
        }
        Ok(best)
    }

    /// The `λ → 0⁺` limit of `L^c_λ(z)`: the box maximum for a soft cost,
    /// the δ-ball maximum for the hard one.
    pub fn c_transform_limit_zero(&self, theta: &[f64], z: &Point) -> Result<TransformResult> {
        self.check_point(z)?;
        if self.cost.penalty.is_hard() {
            return self.c_delta_transform(theta, z);
        }
        match self.family.ridge(theta, z.y) {
            Some(ridge) => {
                crate::objective::check_theta(theta)?;
                let geo = RidgeGeometry::new(&ridge.w, &z.x, self.family.bound(), self.cost.norm);
                Ok(self.ridge_at(&ridge, &geo, z, geo.t_sat))
            }
            None => self.solver.solve(&self.problem(theta, 0.0, z, false)),
        }
    }

    /// `L^{c_δ}(z)`, exact for ridge families with a monotone link.
    pub fn c_delta_transform(&self, theta: &[f64], z: &Point) -> Result<TransformResult> {
        self.check_point(z)?;
        match self.family.ridge(theta, z.y) {
            Some(ridge) => {
                crate::objective::check_theta(theta)?;
                let geo = RidgeGeometry::new(&ridge.w, &z.x, self.family.bound(), self.cost.norm);
                Ok(self.ridge_at(&ridge, &geo, z, self.cost.delta.min(geo.t_sat)))
            }
            None => self.solver.solve(&self.problem(theta, 0.0, z, true)),
        }
    }

    /// `max_i L^c_λ(z_i) − L^{c_δ}(z_i)` over a sample.
    pub fn delta_transform_gap(&self, theta: &[f64], lambda: f64, sample: &Dataset) -> Result<f64> {
        let mut gap = f64::NEG_INFINITY;
        for z in &sample.points {
            let a = self.c_transform(theta, lambda, z)?.value;
            let b = self.c_delta_transform(theta, z)?.value;
            gap = gap.max(a - b);
        }
        Ok(gap)
    }

    /// Sandwich bound `λ ψ*(L_X/λ)`.
    pub fn sandwich_bound(&self, lambda: f64) -> f64 {
        let l_x = self.family.constants(self.cost.norm).l_x;
        lambda * self.cost.penalty.psi_star(l_x / lambda)
    }
}

/// One per-point row of a c-transform export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub index: usize,
    pub y: f64,
    pub value: f64,
    pub delta_value: f64,
    pub certificate: Certificate,
    /// Coordinates joined by `;`.
    pub argmax: String,
}

/// Writes `L^c_λ` and `L^{c_δ}` with the maximizer for each sample point as CSV.
pub fn write_diagnostics<W: std::io::Write>(
    adversary: &Adversary,
    theta: &[f64],
    lambda: f64,
    sample: &Dataset,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (index, z) in sample.points.iter().enumerate() {
        let t = adversary.c_transform(theta, lambda, z)?;
        let delta_value = adversary.c_delta_transform(theta, z)?.value;
        let argmax = t.argmax_x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
        w.serialize(DiagnosticRow { index, y: z.y, value: t.value, delta_value, certificate: t.certificate, argmax })?;
    }
    w.flush()?;
    Ok(())
}
