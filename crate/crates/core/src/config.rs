//! JSON run configurations shared by the command-line tools.

use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{bound_report, g_function_bounds_check, lambda_n, BoundConfig, BoundReport, GCheckReport};
use crate::cost::TransportCost;
use crate::ctransform::{Adversary, Grid1D, InnerSolver};
use crate::divergence::Divergence;
use crate::dual::{kl_dual, ot_dual, otreg_dual, DualProblem, DualSolution, SampleOracle, DEFAULT_OUTER_TOL};
use crate::error::{Error, Result};
use crate::objective::{Dataset, LossFamily, MixtureGenerator, Point};
use crate::primal::{duality_candidates, ot_primal_lp, otreg_primal_convex, BarrierConfig, FiniteInstance};
use crate::registry;

pub fn build_family(config: &Value) -> Result<Arc<dyn LossFamily>> {
    registry::loss_families().build(config)
}

pub fn build_divergence(config: Option<&Value>) -> Result<Option<Arc<dyn Divergence>>> {
    config.map(|c| registry::divergences().build(c)).transpose()
}

pub fn build_solver(config: Option<&Value>) -> Result<Arc<dyn InnerSolver>> {
    match config {
        Some(c) => registry::inner_solvers().build(c),
        None => Ok(Arc::new(Grid1D::default())),
    }
}

/// Where a sample comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataConfig {
    Csv { csv: PathBuf },
    /// Rows `[x_1, …, x_d, y]`.
    Points { points: Vec<Vec<f64>> },
    Generated {
        #[serde(default)]
        generator: MixtureGenerator,
        n: usize,
        seed: u64,
    },
}

impl DataConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataConfig::Csv { csv } => Dataset::read_csv(File::open(csv)?),
            DataConfig::Points { points } => Dataset::new(
                points
                    .iter()
                    .map(|row| match row.split_last() {
                        Some((y, x)) if !x.is_empty() => Ok(Point { x: x.to_vec(), y: *y }),
                        _ => Err(Error::Malformed("each point row needs at least one coordinate and a label".into())),
                    })
                    .collect::<Result<_>>()?,
            ),
            DataConfig::Generated { generator, n, seed } => {
                generator.validate()?;
                Dataset::new(generator.sample(&mut ChaCha8Rng::seed_from_u64(*seed), *n).points)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMethod {
    /// OT without a divergence, OT-regularized with one.
    #[default]
    Auto,
    /// Log-sum-exp closed form; KL only.
    KlClosedForm,
}

/// Config of `dual-value`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualValueConfig {
    pub family: Value,
    pub cost: Value,
    #[serde(default)]
    pub divergence: Option<Value>,
    #[serde(default)]
    pub inner_solver: Option<Value>,
    pub r: f64,
    pub theta: Vec<f64>,
    pub data: DataConfig,
    #[serde(default)]
    pub method: DualMethod,
    #[serde(default)]
    pub outer_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualValueOutput {
    pub method: String,
    #[serde(flatten)]
    pub solution: DualSolution,
    pub n: usize,
}

impl DualValueConfig {
    pub fn problem(&self) -> Result<DualProblem> {
        let mut p = DualProblem::new(
            build_family(&self.family)?,
            TransportCost::from_config(&self.cost)?,
            build_solver(self.inner_solver.as_ref())?,
            build_divergence(self.divergence.as_ref())?,
            self.r,
            self.theta.clone(),
            self.data.load()?,
        )?;
        if let Some(t) = self.outer_tol {
            p.outer_tol = t;
        }
        Ok(p)
    }

    pub fn run(&self) -> Result<DualValueOutput> {
        let p = self.problem()?;
        let (method, solution) = match (self.method, &p.divergence) {
            (DualMethod::KlClosedForm, _) => ("kl_closed_form", p.kl_dro_dual()?),
            (DualMethod::Auto, None) => ("ot", p.ot_dro_dual()?),
            (DualMethod::Auto, Some(_)) => ("ot_regularized", p.otreg_fdiv_dual()?),
        };
        Ok(DualValueOutput { method: method.into(), solution, n: p.sample.len() })
    }
}

fn default_instances() -> usize {
    20
}
fn default_sources() -> usize {
    6
}
fn default_random() -> usize {
    8
}
fn default_primal_tol() -> f64 {
    1e-3
}

/// Config of `primal-check`: random finite instances drawn from a generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimalCheckConfig {
    pub family: Value,
    pub cost: Value,
    #[serde(default)]
    pub divergence: Option<Value>,
    #[serde(default)]
    pub inner_solver: Option<Value>,
    pub r: f64,
    #[serde(default)]
    pub generator: MixtureGenerator,
    pub seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Sources per instance.
    #[serde(default = "default_sources")]
    pub n: usize,
    /// Random box points added to each source's candidates.
    #[serde(default = "default_random")]
    pub random_candidates: usize,
    /// Relative tolerance `|primal − dual| ≤ tol (1 + |dual|)`.
    #[serde(default = "default_primal_tol")]
    pub tol: f64,
    #[serde(default)]
    pub barrier: BarrierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalCheckRow {
    pub instance: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Builds the finite instance whose candidates include the dual's argmaxes
/// and solves both sides on it.
#[allow(clippy::too_many_arguments)]
pub fn primal_dual_pair(
    adversary: &Adversary,
    div: Option<&dyn Divergence>,
    theta: &[f64],
    sample: &Dataset,
    r: f64,
    random: usize,
    barrier: &BarrierConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let oracle = SampleOracle::new(adversary, theta, sample)?;
    let empirical = match div {
        None => ot_dual(&oracle, r, DEFAULT_OUTER_TOL)?,
        Some(d) => otreg_dual(&oracle, d, r, DEFAULT_OUTER_TOL)?,
    };
    let extra = duality_candidates(adversary, theta, sample, empirical.lambda_opt, random, rng)?;
    let inst = FiniteInstance::from_sample(adversary, theta, sample, &extra)?;
    let (primal, dual) = match div {
        None => (ot_primal_lp(&inst, r)?, ot_dual(&inst, r, DEFAULT_OUTER_TOL)?.value),
        Some(d) => {
            let dual = if d.name() == "kl" { kl_dual(&inst, r, DEFAULT_OUTER_TOL)? } else { otreg_dual(&inst, d, r, DEFAULT_OUTER_TOL)? };
            (otreg_primal_convex(&inst, d, r, barrier)?.value, dual.value)
        }
    };
    Ok((primal, dual))
}

impl PrimalCheckConfig {
    pub fn run(&self) -> Result<Vec<PrimalCheckRow>> {
        self.generator.validate()?;
        let family = build_family(&self.family)?;
        let adversary = Adversary::new(family.clone(), TransportCost::from_config(&self.cost)?, build_solver(self.inner_solver.as_ref())?);
        let div = build_divergence(self.divergence.as_ref())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let k = family.param_dim();
        let mut rows = Vec::with_capacity(self.instances);
        for instance in 0..self.instances {
            let sample = self.generator.sample(&mut rng, self.n);
            let theta = loop {
                let t: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
                if t.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    break t;
                }
            };
            let (primal, dual) =
                primal_dual_pair(&adversary, div.as_deref(), &theta, &sample, self.r, self.random_candidates, &self.barrier, &mut rng)?;
            let gap = dual - primal;
            rows.push(PrimalCheckRow { instance, primal, dual, gap, pass: gap.abs() <= self.tol * (1.0 + dual.abs()) });
        }
        Ok(rows)
    }
}

fn default_g_tuples() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCheckConfig {
    #[serde(default = "default_g_tuples")]
    pub tuples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Config of `bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsRunConfig {
    pub family: Value,
    pub cost: Value,
    #[serde(default)]
    pub divergence: Option<Value>,
    #[serde(default)]
    pub inner_solver: Option<Value>,
    pub n: f64,
    pub eps: f64,
    /// Class probabilities `p_y`; defaults to a balanced two-class problem.
    #[serde(default)]
    pub class_probs: Option<Vec<f64>>,
    #[serde(default)]
    pub bounds: BoundConfig,
    /// Runs the `g` bound check as well when present; needs a divergence.
    #[serde(default)]
    pub g_check: Option<GCheckConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsOutput {
    #[serde(flatten)]
    pub report: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_check: Option<GCheckReport>,
}

impl BoundsRunConfig {
    pub fn run(&self) -> Result<BoundsOutput> {
        let family = build_family(&self.family)?;
        let cost = TransportCost::from_config(&self.cost)?;
        let div = build_divergence(self.divergence.as_ref())?;
        let fc = family.constants(cost.norm);
        let probs = self.class_probs.clone().unwrap_or_else(|| vec![0.5, 0.5]);
        let report = bound_report(&fc, &cost, div.as_deref(), &probs, self.n, self.eps, &self.bounds)?;
        let g_check = match (&self.g_check, &div, &report.divergence_constants) {
            (Some(g), Some(d), Some(consts)) => {
                let adversary = Adversary::new(family, cost.clone(), build_solver(self.inner_solver.as_ref())?);
                let ln = lambda_n(&cost, self.n, &self.bounds.lambda_n);
                Some(g_function_bounds_check(&adversary, d.as_ref(), consts, ln, g.tuples, g.seed)?)
            }
            (Some(_), _, _) => return Err(Error::invalid("g_check needs a divergence")),
            _ => None,
        };
        Ok(BoundsOutput { report, g_check })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "family": {"family": "clamped_linear_margin", "beta": 1.0, "dim": 1, "bound": 1.0},
            "cost": {"penalty": {"family": "hard_ball"}, "delta": 0.5, "norm": "l2", "M": 0.0},
            "r": 0.1,
            "theta": [1.0],
            "data": {"points": [[0.0, -1.0]]}
        })
    }

    #[test]
    fn dual_value_hard_ball_point() {
        // The link is monotone in ⟨−yθ, x̃⟩, so the ball maximum sits at x̃ = 0.5.
        let cfg: DualValueConfig = serde_json::from_value(base()).unwrap();
        let out = cfg.run().unwrap();
        assert_eq!(out.method, "ot");
        let fam = build_family(&cfg.family).unwrap();
        let expected = fam.loss(&[1.0], &Point { x: vec![0.5], y: -1.0 }).unwrap();
        assert!((out.solution.value - expected).abs() < 1e-12);
    }

    #[test]
    fn data_sources_parse() {
        let g: DataConfig = serde_json::from_value(json!({"n": 5, "seed": 3})).unwrap();
        assert_eq!(g.load().unwrap().len(), 5);
        let bad: DataConfig = serde_json::from_value(json!({"points": [[1.0]]})).unwrap();
        assert!(bad.load().is_err());
    }

    #[test]
    fn primal_check_runs_ot() {
        let mut v = base();
        v["seed"] = json!(4);
        v["instances"] = json!(3);
        v["r"] = json!(0.05);
        v["cost"] = json!({"penalty": {"family": "power_law", "alpha": 1.0, "q": 2.0}, "delta": 0.0, "norm": "l2", "M": 2.0});
        v["family"]["dim"] = json!(2);
        let cfg: PrimalCheckConfig = serde_json::from_value(v).unwrap();
        let rows = cfg.run().unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }
}
