//! Monte Carlo checks of the concentration theorems on synthetic mixtures.
//!
//! Each trial draws `n_train` points from its own ChaCha8 stream keyed by
//! `(seed, trial)`, so serial and parallel runs agree bit for bit. The
//! population is stood in for by a reference sample of `n_reference` points.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{dn_bound, rn_bound, rn_tilde_bound, tail_probability, BoundConfig, TailInputs, TailValue, Theorem};
use crate::config::{build_divergence, build_family, build_solver};
use crate::cost::TransportCost;
use crate::ctransform::Adversary;
use crate::divergence::{Divergence, DivergenceConstants};
use crate::dual::{ball_grid, ot_dual, otreg_dual, ErmSearch, GridSearch, SampleOracle, DEFAULT_OUTER_TOL};
use crate::error::{Error, Result};
use crate::objective::{Dataset, FamilyConstants, LossFamily, MixtureGenerator};
use crate::registry;

const REFERENCE_STREAM: u64 = u64::MAX;
const DOUBLED_STREAM: u64 = u64::MAX - 1;
/// Cap on θ-grid size per dimension count.
const MAX_GRID: usize = 4096;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Theorem,
    pub seed: u64,
    #[serde(default)]
    pub generator: MixtureGenerator,
    pub n_train: usize,
    pub n_reference: usize,
    pub trials: usize,
    pub r: f64,
    pub eps_grid: Vec<f64>,
    pub family: Value,
    pub cost: Value,
    #[serde(default)]
    pub divergence: Option<Value>,
    #[serde(default)]
    pub inner_solver: Option<Value>,
    /// ERM search config; a 9-point-per-axis grid when absent.
    #[serde(default)]
    pub erm: Option<Value>,
    #[serde(default)]
    pub bounds: BoundConfig,
    /// Failure probability charged to the ERM optimizer.
    #[serde(default)]
    pub delta_opt: f64,
    /// Overrides the θ-grid resolution chosen from the envelope.
    #[serde(default)]
    pub theta_grid_points: Option<usize>,
    /// Recomputes the reference value on twice the reference sample.
    #[serde(default = "default_true")]
    pub reference_check: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.bounds.validate()?;
        if self.n_train == 0 || self.n_reference < 50 * self.n_train {
            return Err(Error::invalid(format!(
                "need n_train >= 1 and n_reference >= 50 n_train, got {} and {}",
                self.n_train, self.n_reference
            )));
        }
        if self.trials < 100 {
            return Err(Error::invalid(format!("need at least 100 trials, got {}", self.trials)));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::invalid("eps_grid must be a non-empty list of non-negative values"));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::invalid(format!("r must be positive and finite, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.delta_opt) {
            return Err(Error::invalid("delta_opt must lie in [0, 1]"));
        }
        let regularized = matches!(self.scenario, Theorem::OtRegValues | Theorem::OtRegErm);
        if regularized != self.divergence.is_some() {
            return Err(Error::invalid("OT-regularized scenarios need a divergence and OT scenarios must not have one"));
        }
        Ok(())
    }

    fn is_erm(&self) -> bool {
        matches!(self.scenario, Theorem::OtErm | Theorem::OtRegErm)
    }
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Optimal empirical value (values scenarios) or the ERM objective.
    pub empirical_value: f64,
    /// Reference optimum (values) or reference value at the ERM solution.
    pub reference_value: f64,
    /// `empirical_value − reference optimum`.
    pub deviation: f64,
    /// Minimizer, coordinates joined by `;`.
    pub theta: String,
    pub excess: Option<f64>,
    pub eps_opt: Option<f64>,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub eps: f64,
    /// `+` for `deviation ≥ …`, `-` for `−deviation ≥ …`.
    pub sign: String,
    pub envelope: f64,
    pub tail: f64,
    pub tail_clamped: bool,
    pub exceedances: usize,
    pub trials: usize,
    pub frequency: f64,
    /// `tail + 3 √(tail (1 − tail) / trials)`.
    pub allowance: f64,
    /// Cells with a tail above 1/2 are reported but not checked.
    pub checked: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub value: f64,
    pub theta: Vec<f64>,
    pub doubled_value: Option<f64>,
    /// `|doubled_value − value|`, the reported substitution error.
    pub stability_gap: Option<f64>,
    pub stability_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub scenario: Theorem,
    pub envelope: f64,
    pub constants: FamilyConstants,
    pub divergence_constants: Option<DivergenceConstants>,
    pub grid_points: usize,
    pub grid_error_bound: f64,
    pub reference: ReferenceInfo,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.reference.stability_ok && self.summary.iter().all(|r| r.pass)
    }

    /// Writes `trials.csv`, `summary.csv` and `run.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let trials = dir.join("trials.csv");
        write_records(&trials, &self.records)?;
        let summary = dir.join("summary.csv");
        write_summary(&summary, &self.summary)?;
        let run = dir.join("run.json");
        serde_json::to_writer_pretty(File::create(&run)?, self)?;
        Ok(vec![trials, summary, run])
    }
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<TrialRecord>, _>>()?;
    if rows.iter().any(|t| !t.deviation.is_finite()) {
        return Err(Error::Malformed(format!("{}: non-finite deviation", path.display())));
    }
    Ok(rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SummaryRow>, _>>()?)
}

/// The built pieces of an experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    family: Arc<dyn LossFamily>,
    adversary: Adversary,
    divergence: Option<Arc<dyn Divergence>>,
    search: Arc<dyn ErmSearch>,
    constants: FamilyConstants,
    divergence_constants: Option<DivergenceConstants>,
    tail_inputs: TailInputs,
    envelope: f64,
    grid: Vec<Vec<f64>>,
    grid_error_bound: f64,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn join_theta(theta: &[f64]) -> String {
    theta.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let family = build_family(&config.family)?;
        if family.dim() != config.generator.dim || (family.bound() - config.generator.bound).abs() > 1e-12 {
            return Err(Error::invalid("family dim/bound must match the generator"));
        }
        let cost = TransportCost::from_config(&config.cost)?;
        let divergence = build_divergence(config.divergence.as_ref())?;
        let search = match &config.erm {
            Some(c) => registry::erm_searches().build(c)?,
            None => Arc::new(GridSearch::default()),
        };
        let constants = family.constants(cost.norm);
        let n = config.n_train as f64;
        let p = config.generator.p_pos;
        let class_probs = vec![p, 1.0 - p];
        let mut tail_inputs =
            TailInputs { beta: constants.beta, c2: None, class_probs: class_probs.clone(), p0: None, delta_opt: config.delta_opt };
        let (envelope, divergence_constants) = match &divergence {
            None => {
                let dn = dn_bound(&constants, &cost, n, &config.bounds)?;
                (if config.is_erm() { 4.0 * dn } else { 2.0 * dn }, None)
            }
            Some(div) => {
                let min_p = p.min(1.0 - p);
                let p0 = config.bounds.p0.unwrap_or(0.5 * min_p);
                if !(p0 < min_p) {
                    return Err(Error::invalid(format!("p0 = {p0} must be below min_y p_y = {min_p}")));
                }
                let consts = div.constants(p0, cost.max_cost)?;
                let rn = rn_bound(&constants, &cost, div.as_ref(), n, &config.bounds)?;
                let rt = rn_tilde_bound(&constants, &cost, div.as_ref(), n, &config.bounds, &consts)?;
                tail_inputs.c2 = Some(div.f_star_right_deriv(-consts.nu_tilde));
                tail_inputs.p0 = Some(p0);
                let m = rn.max(rt);
                (if config.is_erm() { 2.0 * m } else { m }, Some(consts))
            }
        };
        let k = family.param_dim();
        let cap = ((MAX_GRID as f64).powf(1.0 / k as f64).floor() as usize).max(2);
        let m = config.theta_grid_points.unwrap_or_else(|| {
            let target = envelope / 20.0;
            let needed = (constants.l_theta * (k as f64).sqrt() / target).ceil() as usize + 1;
            needed.clamp(3, cap)
        });
        let grid = ball_grid(k, m);
        if grid.is_empty() {
            return Err(Error::invalid("empty θ-grid"));
        }
        let grid_error_bound = constants.l_theta * (k as f64).sqrt() / (m.max(2) - 1) as f64;
        let adversary = Adversary::new(family.clone(), cost, build_solver(config.inner_solver.as_ref())?);
        Ok(Self {
            config,
            family,
            adversary,
            divergence,
            search,
            constants,
            divergence_constants,
            tail_inputs,
            envelope,
            grid,
            grid_error_bound,
        })
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    fn dual_value(&self, theta: &[f64], sample: &Dataset) -> Result<f64> {
        let oracle = SampleOracle::new(&self.adversary, theta, sample)?;
        let sol = match &self.divergence {
            None => ot_dual(&oracle, self.config.r, DEFAULT_OUTER_TOL)?,
            Some(d) => otreg_dual(&oracle, d.as_ref(), self.config.r, DEFAULT_OUTER_TOL)?,
        };
        Ok(sol.value)
    }

    /// Minimum of the dual value over the θ-grid.
    fn grid_min(&self, sample: &Dataset, parallel: bool) -> Result<(Vec<f64>, f64)> {
        let values: Vec<Result<f64>> = if parallel {
            self.grid.par_iter().map(|t| self.dual_value(t, sample)).collect()
        } else {
            self.grid.iter().map(|t| self.dual_value(t, sample)).collect()
        };
        let mut best = (Vec::new(), f64::INFINITY);
        for (t, v) in self.grid.iter().zip(values) {
            let v = v?;
            if v < best.1 {
                best = (t.clone(), v);
            }
        }
        Ok(best)
    }

    fn sample(&self, stream: u64, n: usize) -> Dataset {
        self.config.generator.sample(&mut trial_rng(self.config.seed, stream), n)
    }

    pub fn reference(&self) -> Result<(ReferenceInfo, Dataset)> {
        let reference = self.sample(REFERENCE_STREAM, self.config.n_reference);
        let (theta, value) = self.grid_min(&reference, true)?;
        let (doubled_value, stability_gap) = if self.config.reference_check {
            let mut doubled = reference.clone();
            doubled.points.extend(self.sample(DOUBLED_STREAM, self.config.n_reference).points);
            let (_, v) = self.grid_min(&doubled, true)?;
            (Some(v), Some((v - value).abs()))
        } else {
            (None, None)
        };
        let stability_ok = stability_gap.is_none_or(|g| g < self.envelope / 10.0);
        Ok((ReferenceInfo { value, theta, doubled_value, stability_gap, stability_ok }, reference))
    }

    fn trial(&self, trial: usize, reference: &ReferenceInfo, ref_sample: &Dataset) -> Result<TrialRecord> {
        let sample = self.sample(trial as u64, self.config.n_train);
        if self.config.is_erm() {
            let objective = |theta: &[f64]| self.dual_value(theta, &sample);
            let erm = self.search.search(&objective, self.family.param_dim())?;
            let at_erm = self.dual_value(&erm.theta, ref_sample)?;
            Ok(TrialRecord {
                trial,
                empirical_value: erm.value,
                reference_value: at_erm,
                deviation: erm.value - reference.value,
                theta: join_theta(&erm.theta),
                excess: Some(at_erm - reference.value),
                eps_opt: Some(erm.eps_opt),
            })
        } else {
            let (theta, value) = self.grid_min(&sample, false)?;
            Ok(TrialRecord {
                trial,
                empirical_value: value,
                reference_value: reference.value,
                deviation: value - reference.value,
                theta: join_theta(&theta),
                excess: None,
                eps_opt: None,
            })
        }
    }

    /// Runs all trials. On a trial failure the records before it are written
    /// to `partial` (when given) and the error is returned.
    pub fn run(&self, partial: Option<&Path>) -> Result<ExperimentOutput> {
        let (reference, ref_sample) = self.reference()?;
        let results: Vec<Result<TrialRecord>> =
            (0..self.config.trials).into_par_iter().map(|t| self.trial(t, &reference, &ref_sample)).collect();
        let mut records = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    if let Some(dir) = partial {
                        fs::create_dir_all(dir)?;
                        write_records(&dir.join("trials.csv"), &records)?;
                    }
                    return Err(e);
                }
            }
        }
        let summary = self.summarize(&records)?;
        Ok(ExperimentOutput {
            scenario: self.config.scenario,
            envelope: self.envelope,
            constants: self.constants,
            divergence_constants: self.divergence_constants,
            grid_points: self.grid.len(),
            grid_error_bound: self.grid_error_bound,
            reference,
            records,
            summary,
        })
    }

    pub fn tail(&self, eps: f64) -> Result<TailValue> {
        tail_probability(self.config.scenario, self.config.n_train as f64, eps, &self.tail_inputs)
    }

    /// Exceedance frequencies per `(ε, sign)` from records sorted by trial.
    pub fn summarize(&self, records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
        if records.is_empty() {
            return Err(Error::invalid("no trials to summarize"));
        }
        let mut sorted = records.to_vec();
        sorted.sort_by_key(|r| r.trial);
        let scenario = serde_json::to_value(self.config.scenario)?.as_str().unwrap_or_default().to_owned();
        let trials = sorted.len();
        let mut rows = Vec::new();
        for &eps in &self.config.eps_grid {
            let tail = self.tail(eps)?;
            let allowance = tail.value + 3.0 * (tail.value * (1.0 - tail.value) / trials as f64).sqrt();
            let checked = tail.value <= 0.5;
            let signs: &[&str] = if self.config.is_erm() { &["+"] } else { &["+", "-"] };
            for &sign in signs {
                let exceedances = sorted
                    .iter()
                    .filter(|r| match (sign, r.excess) {
                        ("+", Some(x)) => x >= self.envelope + r.eps_opt.unwrap_or(0.0) + eps,
                        ("+", None) => r.deviation >= self.envelope + eps,
                        _ => -r.deviation >= self.envelope + eps,
                    })
                    .count();
                let frequency = exceedances as f64 / trials as f64;
                rows.push(SummaryRow {
                    scenario: scenario.clone(),
                    eps,
                    sign: sign.to_owned(),
                    envelope: self.envelope,
                    tail: tail.value,
                    tail_clamped: tail.clamped,
                    exceedances,
                    trials,
                    frequency,
                    allowance,
                    checked,
                    pass: !checked || frequency <= allowance,
                });
            }
        }
        Ok(rows)
    }
}

/// Builds and runs an experiment, writing its files into `out`.
pub fn run_experiment(config: ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    let exp = Experiment::new(config)?;
    let output = exp.run(Some(out))?;
    output.write(out)?;
    Ok(output)
}
