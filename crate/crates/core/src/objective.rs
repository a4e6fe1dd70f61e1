//! Bounded Lipschitz loss families on the box `[−B, B]^d`, plus datasets.
//!
//! Both shipped families are ridge losses: `L_θ(x, y) = link(⟨w, x⟩)` with
//! `w = −yθ` and a non-decreasing scalar link. The adversarial maximization
//! in [`crate::ctransform`] reduces to one dimension along that ridge.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost::Norm;
use crate::error::{Error, Result};
use crate::registry::params;

/// Slack allowed on `‖θ‖ ≤ 1` before a parameter is rejected.
const THETA_NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    /// `clamp(β/2 + u, 0, β)`.
    ClampedLinear { beta: f64 },
    /// `β σ(slope · u)`.
    Logistic { beta: f64, slope: f64 },
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Link {
    pub fn value(self, u: f64) -> f64 {
        match self {
            Link::ClampedLinear { beta } => (0.5 * beta + u).clamp(0.0, beta),
            Link::Logistic { beta, slope } => beta * sigmoid(slope * u),
        }
    }

    /// Derivative, taking 0 at the clamp kinks.
    pub fn deriv(self, u: f64) -> f64 {
        match self {
            Link::ClampedLinear { beta } => {
                let v = 0.5 * beta + u;
                if v > 0.0 && v < beta {
                    1.0
                } else {
                    0.0
                }
            }
            Link::Logistic { beta, slope } => {
                let s = sigmoid(slope * u);
                beta * slope * s * (1.0 - s)
            }
        }
    }

    /// Lower end of the `u`-range on which the link is concave, if the link
    /// is concave on a half-line.
    pub fn concave_from(self) -> Option<f64> {
        match self {
            Link::ClampedLinear { beta } => Some(-0.5 * beta),
            Link::Logistic { .. } => None,
        }
    }

    pub fn beta(self) -> f64 {
        match self {
            Link::ClampedLinear { beta } | Link::Logistic { beta, .. } => beta,
        }
    }
}

/// A ridge view of `x ↦ L_θ(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub w: Vec<f64>,
    pub link: Link,
}

impl Ridge {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.link.value(dot(&self.w, x))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Constants the concentration bounds consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    pub beta: f64,
    #[serde(rename = "L_X")]
    pub l_x: f64,
    #[serde(rename = "L_Theta")]
    pub l_theta: f64,
    pub k: usize,
    /// False when any constant was asserted by the user instead of derived.
    pub verified: bool,
}

pub trait LossFamily: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn to_config(&self) -> Value;

    /// Predictor dimension `d`.
    fn dim(&self) -> usize;

    /// Parameter dimension `k`.
    fn param_dim(&self) -> usize;

    /// Half-width `B` of the predictor box.
    fn bound(&self) -> f64;

    /// Constants with `L_X` taken with respect to `norm`.
    fn constants(&self, norm: Norm) -> FamilyConstants;

    fn ridge(&self, theta: &[f64], y: f64) -> Option<Ridge>;

    fn loss(&self, theta: &[f64], z: &Point) -> Result<f64>;

    fn grad_x(&self, theta: &[f64], z: &Point) -> Result<Vec<f64>>;

    /// `sup_{z ∈ Z} L_θ(z)` over the box and both labels.
    fn sup_loss(&self, theta: &[f64]) -> Result<f64>;

    /// `log N(ε, G, ‖·‖_∞) ≤ k log(1 + 2 L_Θ/ε)`.
    fn covering_log(&self, eps: f64, norm: Norm) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("covering radius must be positive, got {eps}")));
        }
        let c = self.constants(norm);
        Ok(covering_log(c.k, c.l_theta, eps))
    }
}

/// `k log(1 + 2 L_Θ/ε)`, the unit-ball covering bound in log-space.
pub fn covering_log(k: usize, l_theta: f64, eps: f64) -> f64 {
    k as f64 * (2.0 * l_theta / eps).ln_1p()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AssertedConstants {
    #[serde(rename = "L_X")]
    pub l_x: Option<f64>,
    #[serde(rename = "L_Theta")]
    pub l_theta: Option<f64>,
}

/// Ridge family on `[−B, B]^d` with θ in the Euclidean unit ball.
#[derive(Debug, Clone)]
pub struct RidgeFamily {
    name: &'static str,
    link: Link,
    dim: usize,
    bound: f64,
    asserted: AssertedConstants,
}

impl RidgeFamily {
    pub fn clamped_linear_margin(beta: f64, dim: usize, bound: f64) -> Result<Self> {
        Self::new("clamped_linear_margin", Link::ClampedLinear { beta }, dim, bound)
    }

    pub fn saturated_logistic(beta: f64, slope: f64, dim: usize, bound: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::invalid(format!("slope must be positive, got {slope}")));
        }
        Self::new("saturated_logistic", Link::Logistic { beta, slope }, dim, bound)
    }

    fn new(name: &'static str, link: Link, dim: usize, bound: f64) -> Result<Self> {
        if !(link.beta() > 0.0 && link.beta().is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", link.beta())));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::invalid(format!("box half-width must be positive, got {bound}")));
        }
        Ok(Self { name, link, dim, bound, asserted: AssertedConstants::default() })
    }

    /// Replaces derived constants by user-asserted ones; reports flag them unverified.
    pub fn with_asserted(mut self, asserted: AssertedConstants) -> Self {
        self.asserted = asserted;
        self
    }

    pub fn link(&self) -> Link {
        self.link
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.dim || x.len() != self.dim {
            return Err(Error::invalid(format!(
                "expected dimension {}, got theta {} and x {}",
                self.dim,
                theta.len(),
                x.len()
            )));
        }
        check_theta(theta)
    }

    fn slope_bound(&self) -> f64 {
        match self.link {
            Link::ClampedLinear { .. } => 1.0,
            Link::Logistic { beta, slope } => 0.25 * beta * slope,
        }
    }
}

pub(crate) fn check_theta(theta: &[f64]) -> Result<()> {
    let n = Norm::L2.eval(theta);
    if n > 1.0 + THETA_NORM_SLACK {
        return Err(Error::invalid(format!("theta must lie in the unit ball, |theta| = {n}")));
    }
    Ok(())
}

impl LossFamily for RidgeFamily {
    fn name(&self) -> &'static str {
        self.name
    }

    fn to_config(&self) -> Value {
        let mut v = json!({"family": self.name, "beta": self.link.beta(), "dim": self.dim, "bound": self.bound});
        if let Link::Logistic { slope, .. } = self.link {
            v["slope"] = json!(slope);
        }
        if self.asserted != AssertedConstants::default() {
            v["asserted"] = serde_json::to_value(self.asserted).unwrap_or(Value::Null);
        }
        v
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn constants(&self, norm: Norm) -> FamilyConstants {
        let d = self.dim as f64;
        // Lipschitz in x is the link slope times the dual norm of θ, and the
        // L1 norm of a unit L2 vector is at most √d.
        let dual = match norm {
            Norm::L2 => 1.0,
            Norm::Linf => d.sqrt(),
        };
        let l_x = self.slope_bound() * dual;
        let l_theta = self.slope_bound() * self.bound * d.sqrt();
        FamilyConstants {
            beta: self.link.beta(),
            l_x: self.asserted.l_x.unwrap_or(l_x),
            l_theta: self.asserted.l_theta.unwrap_or(l_theta),
            k: self.dim,
            verified: self.asserted == AssertedConstants::default(),
        }
    }

    fn ridge(&self, theta: &[f64], y: f64) -> Option<Ridge> {
        Some(Ridge { w: theta.iter().map(|t| -y * t).collect(), link: self.link })
    }

    fn loss(&self, theta: &[f64], z: &Point) -> Result<f64> {
        self.check(theta, &z.x)?;
        Ok(self.link.value(-z.y * dot(theta, &z.x)))
    }

    fn grad_x(&self, theta: &[f64], z: &Point) -> Result<Vec<f64>> {
        self.check(theta, &z.x)?;
        let g = self.link.deriv(-z.y * dot(theta, &z.x));
        Ok(theta.iter().map(|t| -z.y * t * g).collect())
    }

    fn sup_loss(&self, theta: &[f64]) -> Result<f64> {
        check_theta(theta)?;
        let reach: f64 = theta.iter().map(|t| t.abs()).sum::<f64>() * self.bound;
        Ok(self.link.value(reach))
    }
}

#[derive(Deserialize)]
struct FamilyParams {
    beta: f64,
    dim: usize,
    bound: f64,
    slope: Option<f64>,
    #[serde(default)]
    asserted: AssertedConstants,
}

/// Default link slope of the saturated logistic family.
pub const DEFAULT_LOGISTIC_SLOPE: f64 = 4.0;

pub(crate) fn build_clamped_linear_margin(config: &Value) -> Result<Arc<dyn LossFamily>> {
    let p: FamilyParams = params(config)?;
    Ok(Arc::new(RidgeFamily::clamped_linear_margin(p.beta, p.dim, p.bound)?.with_asserted(p.asserted)))
}

pub(crate) fn build_saturated_logistic(config: &Value) -> Result<Arc<dyn LossFamily>> {
    let p: FamilyParams = params(config)?;
    let slope = p.slope.unwrap_or(DEFAULT_LOGISTIC_SLOPE);
    Ok(Arc::new(RidgeFamily::saturated_logistic(p.beta, slope, p.dim, p.bound)?.with_asserted(p.asserted)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Point>,
}

impl Dataset {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(first) = points.first() {
            let d = first.x.len();
            if points.iter().any(|p| p.x.len() != d) {
                return Err(Error::Malformed("points differ in dimension".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.x.len())
    }

    /// Label frequencies, keyed by the label's bit pattern order.
    pub fn class_probs(&self) -> Vec<(f64, f64)> {
        let mut counts: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for p in &self.points {
            let key = label_key(p.y);
            counts.entry(key).or_insert((p.y, 0)).1 += 1;
        }
        let n = self.points.len() as f64;
        counts.into_values().map(|(y, c)| (y, c as f64 / n)).collect()
    }

    pub fn mean_loss(&self, fam: &dyn LossFamily, theta: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for p in &self.points {
            s += fam.loss(theta, p)?;
        }
        Ok(s / self.points.len() as f64)
    }

    /// Reads a CSV with header `x_1,…,x_d,y`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d = headers.len().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| {
            Error::Malformed("dataset CSV needs columns x_1..x_d,y".into())
        })?;
        for (i, h) in headers.iter().enumerate() {
            let want = if i < d { format!("x_{}", i + 1) } else { "y".to_owned() };
            if h.trim() != want {
                return Err(Error::Malformed(format!("column {} should be `{want}`, found `{h}`", i + 1)));
            }
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Malformed(format!("row {}: {e}", points.len() + 1)))?;
            if vals.len() != d + 1 {
                return Err(Error::Malformed(format!("row {} has {} fields", points.len() + 1, vals.len())));
            }
            points.push(Point { x: vals[..d].to_vec(), y: vals[d] });
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            row.push(p.y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn label_key(y: f64) -> i64 {
    // Labels are small integers in classification runs; order by value.
    (y * 1e6).round() as i64
}

/// Two-component Gaussian mixture per class, clipped to `[−B, B]^d`.
///
/// Class `y ∈ {−1, +1}` has components centred at `y·sep·e₁ ± offset·e₂`
/// (just `y·sep·e₁` when `d = 1`) with isotropic standard deviation `std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureGenerator {
    pub dim: usize,
    pub bound: f64,
    pub sep: f64,
    pub offset: f64,
    pub std: f64,
    pub p_pos: f64,
}

impl Default for MixtureGenerator {
    fn default() -> Self {
        Self { dim: 2, bound: 1.0, sep: 0.4, offset: 0.3, std: 0.35, p_pos: 0.5 }
    }
}

impl MixtureGenerator {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.bound > 0.0) || !(self.std > 0.0) || !(self.p_pos > 0.0 && self.p_pos < 1.0) {
            return Err(Error::invalid(format!("bad mixture generator {self:?}")));
        }
        Ok(())
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let normal = Normal::new(0.0, self.std).expect("std validated positive");
        let y = if rng.random::<f64>() < self.p_pos { 1.0 } else { -1.0 };
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = (0..self.dim)
            .map(|j| {
                let centre = match j {
                    0 => y * self.sep,
                    1 => side * self.offset,
                    _ => 0.0,
                };
                (centre + normal.sample(rng)).clamp(-self.bound, self.bound)
            })
            .collect();
        Point { x, y }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Dataset {
        Dataset { points: (0..n).map(|_| self.sample_point(rng)).collect() }
    }
}
