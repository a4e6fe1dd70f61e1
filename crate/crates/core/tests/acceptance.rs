//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otdro::bounds::*;
use otdro::cost::{Norm, TransportCost};
use otdro::ctransform::{Adversary, Grid1D};
use otdro::divergence::{AlphaDivergence, Divergence, KlDivergence};
use otdro::dual::{kl_dual, lambda_f, lambda_limit_check, nu_domain, ot_dual, otreg_dual, DualProblem, NuDomain, DEFAULT_OUTER_TOL};
use otdro::experiment::{Experiment, ExperimentConfig};
use otdro::ext::ExtReal;
use otdro::objective::{FamilyConstants, LossFamily, MixtureGenerator, RidgeFamily};
use otdro::penalty::{Exponential, HardBall, Penalty, PowerLaw, PowerPlusLinear};
use otdro::primal::{ot_primal_lp, otreg_primal_convex, BarrierConfig, FiniteInstance, SourceCandidates};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.pass &= took < budget;
    o.detail = format!("{}; {:.2}s of {}s budget", o.detail, took.as_secs_f64(), budget.as_secs());
    o
}

fn random_instance(rng: &mut ChaCha8Rng, max_sources: usize, max_total: usize) -> FiniteInstance {
    let n = rng.random_range(1..=max_sources);
    let per = (max_total / n).max(1);
    let sources = (0..n)
        .map(|_| {
            let m = rng.random_range(1..=per);
            let mut losses = Vec::with_capacity(m);
            let mut costs = Vec::with_capacity(m);
            for j in 0..m {
                losses.push(rng.random_range(0.0..1.0));
                costs.push(if j == 0 {
                    ExtReal::ZERO
                } else if rng.random::<f64>() < 0.1 {
                    ExtReal::PosInf
                } else {
                    ExtReal::Finite(rng.random_range(0.0..2.0))
                });
            }
            SourceCandidates { losses, costs, own: 0 }
        })
        .collect();
    FiniteInstance::new(sources).unwrap()
}

fn analytic_instance() -> FiniteInstance {
    let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    FiniteInstance::new(vec![SourceCandidates {
        losses: xs.clone(),
        costs: xs.iter().map(|x| ExtReal::Finite(x * x)).collect(),
        own: 0,
    }])
    .unwrap()
}

fn c1_ot_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8, 50);
        let r = rng.random_range(0.01..0.5);
        let p = ot_primal_lp(&inst, r).unwrap();
        let d = ot_dual(&inst, r, DEFAULT_OUTER_TOL).unwrap().value;
        worst = worst.max((p - d).abs() / (1.0 + d.abs()));
    }
    let inst = analytic_instance();
    let p = ot_primal_lp(&inst, 1.0 / 16.0).unwrap();
    let d = ot_dual(&inst, 1.0 / 16.0, DEFAULT_OUTER_TOL).unwrap().value;
    let analytic_ok = (p - 0.25).abs() <= 1e-6 && (d - 0.25).abs() <= 1e-6;
    outcome(worst <= 1e-5 && analytic_ok, format!("50 instances, worst relative gap {worst:.2e}; analytic primal {p:.9}, dual {d:.9}"))
}

fn c2_otreg_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let divs: [Box<dyn Divergence>; 2] = [Box::new(KlDivergence), Box::new(AlphaDivergence::new(2.0).unwrap())];
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let div = divs[i % 2].as_ref();
        let inst = random_instance(&mut rng, 6, 30);
        let r = rng.random_range(0.01..0.5);
        let p = otreg_primal_convex(&inst, div, r, &BarrierConfig::default()).unwrap().value;
        let d = otreg_dual(&inst, div, r, DEFAULT_OUTER_TOL).unwrap().value;
        worst = worst.max((p - d).abs() / d.abs().max(1e-12));
    }
    outcome(worst <= 1e-3, format!("20 instances (KL, alpha 2), worst relative gap {worst:.2e}"))
}

fn c3_kl_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 8, 50);
        let r = rng.random_range(0.01..1.0);
        let a = kl_dual(&inst, r, DEFAULT_OUTER_TOL).unwrap().value;
        let b = otreg_dual(&inst, &KlDivergence, r, DEFAULT_OUTER_TOL).unwrap().value;
        worst = worst.max((a - b).abs());
    }
    outcome(worst <= 1e-8, format!("100 instances, worst |difference| {worst:.2e}"))
}

fn margin() -> Arc<dyn LossFamily> {
    Arc::new(RidgeFamily::clamped_linear_margin(1.0, 2, 1.0).unwrap())
}

fn four_penalties() -> Vec<Arc<dyn Penalty>> {
    vec![
        Arc::new(PowerLaw::new(1.0, 2.0).unwrap()),
        Arc::new(PowerPlusLinear::new(1.0, 0.5, 2.0).unwrap()),
        Arc::new(Exponential::new(0.5, 2.0).unwrap()),
        Arc::new(HardBall),
    ]
}

fn soft_cost(p: Arc<dyn Penalty>, delta: f64) -> TransportCost {
    let mut c = TransportCost::new(p, delta, Norm::L2, 0.0).unwrap();
    if !c.penalty.is_hard() {
        c.max_cost = c.phi(Norm::L2.box_diameter(1.0, 2)).unwrap().to_f64();
    }
    c
}

fn random_theta(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let t: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if t.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return t;
        }
    }
}

fn c4_sandwich() -> Outcome {
    let gen = MixtureGenerator::default();
    let lambdas: Vec<f64> = (0..20).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0)).collect();
    let mut violations = 0;
    let mut checks = 0;
    for p in four_penalties() {
        let adv = Adversary::with_default_solver(margin(), soft_cost(p, 0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let theta = random_theta(&mut rng, 2);
            let z = gen.sample_point(&mut rng);
            let base = adv.c_delta_transform(&theta, &z).unwrap().value;
            for &lam in &lambdas {
                let gap = adv.c_transform(&theta, lam, &z).unwrap().value - base;
                checks += 1;
                if gap < -1e-12 || gap > adv.sandwich_bound(lam) + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{checks} checks over 4 penalty families, {violations} violations"))
}

/// Dense grid plus ternary refinement, independent of the library's search.
fn dense_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let (mut best_x, mut best) = (lo, f(lo));
    for i in 1..=n {
        let x = lo + i as f64 * h;
        let v = f(x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    let (mut a, mut b) = ((best_x - h).max(lo), (best_x + h).min(hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    best.min(f(0.5 * (a + b)))
}

fn c5_nu_domain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let divs: [Box<dyn Divergence>; 2] = [Box::new(KlDivergence), Box::new(AlphaDivergence::new(2.0).unwrap())];
    let beta = 1.0;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let div = divs[i % 2].as_ref();
        let m = rng.random_range(2..=20);
        let phi: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..beta)).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let obj = |nu: f64| nu + w.iter().zip(&phi).map(|(wi, f)| wi * div.f_star_finite(f - nu).unwrap()).sum::<f64>();
        let s0 = div.s0();
        let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reference = dense_min(obj, min - s0 - 5.0, max - s0 + 5.0);

        let simple = nu_domain(&w, &phi, div, NuDomain::Simple).unwrap();
        let a = lambda_f(&w, &phi, div, simple).unwrap().value;

        // α̃ at the median φ; the tail mass is then strictly inside (0, 1).
        let mut sorted = phi.clone();
        sorted.sort_by(f64::total_cmp);
        let alpha_tilde = sorted[m / 2];
        let p: f64 = w.iter().zip(&phi).filter(|(_, f)| **f >= alpha_tilde).map(|(wi, _)| wi).sum::<f64>().min(1.0 - 1e-9);
        let (lo, _) = nu_domain(&w, &phi, div, NuDomain::Tail { alpha_tilde, p }).unwrap();
        let b = lambda_f(&w, &phi, div, (lo, beta - s0)).unwrap().value;
        worst = worst.max((a - reference).abs()).max((b - reference).abs());
    }
    outcome(worst <= 1e-6, format!("100 instances, both domains, worst |difference| {worst:.2e}"))
}

fn c6_lambda_infinity() -> Outcome {
    let gen = MixtureGenerator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid: Vec<f64> = (0..=12).map(|j| 0.25 * 2f64.powi(j)).collect();
    let divs: [Arc<dyn Divergence>; 2] = [Arc::new(KlDivergence), Arc::new(AlphaDivergence::new(2.0).unwrap())];
    let mut rows = 0;
    let mut violations = 0;
    for div in divs {
        for p in four_penalties().into_iter().take(3) {
            let theta = random_theta(&mut rng, 2);
            let sample = gen.sample(&mut rng, 50);
            let prob =
                DualProblem::new(margin(), soft_cost(p, 0.1), Arc::new(Grid1D::default()), Some(div.clone()), 0.1, theta, sample).unwrap();
            for row in lambda_limit_check(&prob, &grid).unwrap() {
                rows += 1;
                violations += usize::from(!row.holds());
            }
        }
    }
    outcome(violations == 0, format!("{rows} (λ, instance) rows over KL and alpha 2, {violations} violations"))
}

/// `sup_{t ≥ 0} {s t − ψ(t)}` by a grid on the finite region and ternary refinement.
fn brute_conjugate(p: &dyn Penalty, s: f64) -> f64 {
    let g = |t: f64| match p.psi(t).unwrap() {
        ExtReal::Finite(v) => s * t - v,
        ExtReal::PosInf => f64::NEG_INFINITY,
    };
    if p.is_hard() {
        return g(0.0);
    }
    let mut top = 1.0;
    while p.psi_deriv(top) <= s {
        top *= 2.0;
    }
    let n = 4000;
    let h = top / n as f64;
    let mut best = (0.0, g(0.0));
    for i in 1..=n {
        let t = i as f64 * h;
        if g(t) > best.1 {
            best = (t, g(t));
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(0.0), best.0 + h);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if g(m1) > g(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    best.1.max(g(0.5 * (a + b))).max(0.0)
}

fn brute_lambda_star(p: &dyn Penalty, eps2: f64, l_x: f64) -> f64 {
    let h = |lam: f64| lam * brute_conjugate(p, l_x / lam);
    if h(1e-300_f64.max(1e-12)) <= eps2 {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-12, 1.0);
    while h(hi) > eps2 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > eps2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn c7_conjugates() -> Outcome {
    let mut worst_star: f64 = 0.0;
    let mut worst_lambda: f64 = 0.0;
    let pens: Vec<Arc<dyn Penalty>> = vec![
        Arc::new(PowerLaw::new(1.0, 2.0).unwrap()),
        Arc::new(PowerLaw::new(0.5, 3.0).unwrap()),
        Arc::new(PowerPlusLinear::new(1.0, 0.5, 2.0).unwrap()),
        Arc::new(PowerPlusLinear::new(2.0, 1.0, 1.5).unwrap()),
        Arc::new(Exponential::new(0.5, 2.0).unwrap()),
        Arc::new(Exponential::new(1.0, 1.0).unwrap()),
        Arc::new(HardBall),
    ];
    for p in &pens {
        for s in [0.0, 0.3, 0.9, 1.0, 2.5, 5.0, 10.0] {
            let b = brute_conjugate(p.as_ref(), s);
            worst_star = worst_star.max((p.psi_star(s) - b).abs() / (1.0 + b.abs()));
        }
        for (eps2, l_x) in [(0.1, 1.0), (1.0, 2.0), (0.01, 0.5)] {
            let a = p.lambda_star(eps2, l_x).unwrap();
            let b = brute_lambda_star(p.as_ref(), eps2, l_x);
            worst_lambda = worst_lambda.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    let example = PowerLaw::new(1.0, 2.0).unwrap().lambda_star(1.0, 2.0).unwrap();
    outcome(
        worst_star <= 1e-7 && worst_lambda <= 1e-7 && example == 1.0,
        format!("worst ψ* error {worst_star:.2e}, worst λ* error {worst_lambda:.2e}, case-1 λ* = {example}"),
    )
}

fn c8_closed_form_dominance() -> Outcome {
    let cfg = BoundConfig::default();
    let mut checks = 0;
    let mut violations = 0;
    for p in four_penalties() {
        let m = if p.is_hard() { 0.0 } else { 2.0 };
        let cost = TransportCost::new(p, 0.1, Norm::L2, m).unwrap();
        for k in [1, 2, 4] {
            for l_theta in [0.5, 1.0, 2.0] {
                for n in [1e2, 1e3, 1e4] {
                    let fc = FamilyConstants { beta: 1.0, l_x: 1.0, l_theta, k, verified: true };
                    checks += 1;
                    if dn_bound(&fc, &cost, n, &cfg).unwrap() > dn_closed_form(&fc, &cost, n).unwrap() {
                        violations += 1;
                    }
                }
            }
        }
    }
    let hard = TransportCost::new(Arc::new(HardBall), 0.1, Norm::L2, 0.0).unwrap();
    let fc = FamilyConstants { beta: 1.0, l_x: 1.0, l_theta: 1.0, k: 2, verified: true };
    let case4 = dn_closed_form(&fc, &hard, 1e4).unwrap();
    outcome(
        violations == 0 && (case4 - 0.48).abs() <= 1e-12,
        format!("{checks} (family, k, L_Θ, n) cells, {violations} violations; case-4 value {case4}"),
    )
}

fn c9_g_bounds() -> Outcome {
    let a2 = AlphaDivergence::new(2.0).unwrap();
    let configs: Vec<(TransportCost, Box<dyn Divergence>, f64)> = vec![
        (TransportCost::new(Arc::new(HardBall), 0.2, Norm::L2, 0.0).unwrap(), Box::new(a2), 0.5),
        (soft_cost(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), 0.1), Box::new(KlDivergence), 0.25),
        (soft_cost(Arc::new(PowerPlusLinear::new(1.0, 0.5, 2.0).unwrap()), 0.1), Box::new(a2), 0.25),
        (soft_cost(Arc::new(Exponential::new(0.5, 2.0).unwrap()), 0.1), Box::new(KlDivergence), 0.4),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (i, (cost, div, p0)) in configs.into_iter().enumerate() {
        let consts = div.constants(p0, cost.max_cost).unwrap();
        let ln = lambda_n(&cost, 100.0, &LambdaNRule::default());
        let adv = Adversary::with_default_solver(margin(), cost);
        let r = g_function_bounds_check(&adv, div.as_ref(), &consts, ln, 1000, 90 + i as u64).unwrap();
        if i == 0 {
            let c1_ok = consts.nu_tilde == -2.0 && (r.constants.c1 - 10.0).abs() < 1e-12 && (r.constants.c2 - 2.0).abs() < 1e-12;
            pass &= c1_ok;
            details.push(format!("alpha 2 hard ball C1={} C2={}", r.constants.c1, r.constants.c2));
        }
        pass &= r.passed();
        details.push(format!(
            "cfg {i}: {} checks, {} violations, {} θ-steps above C2·L_Θ·|Δθ|",
            r.checks,
            r.violations.len(),
            r.single_factor_exceedances
        ));
    }
    outcome(pass, details.join("; "))
}

fn c10_monte_carlo() -> Outcome {
    let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "scenario": "ot_values",
        "seed": 2024,
        "n_train": 200,
        "n_reference": 10000,
        "trials": 500,
        "r": 0.05,
        "eps_grid": [0.05, 0.1, 0.2],
        "family": {"family": "clamped_linear_margin", "beta": 1.0, "dim": 2, "bound": 1.0},
        "cost": {"penalty": {"family": "hard_ball"}, "delta": 0.1, "norm": "l2", "M": 0.0}
    }))
    .unwrap();
    let out = Experiment::new(cfg).unwrap().run(None).unwrap();
    let cells: Vec<String> =
        out.summary.iter().map(|r| format!("ε={} {}: {:.3} ≤ {:.3}", r.eps, r.sign, r.frequency, r.allowance)).collect();
    let all = out.summary.iter().all(|r| r.frequency <= r.allowance);
    outcome(all && out.summary.len() == 6, format!("envelope 2D_n = {:.4}; {}", out.envelope, cells.join(", ")))
}

fn c11_rate() -> Outcome {
    let fc = margin().constants(Norm::L2);
    let cost = TransportCost::new(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), 0.1, Norm::L2, 4.0).unwrap();
    let div = AlphaDivergence::new(2.0).unwrap();
    let consts = div.constants(0.25, cost.max_cost).unwrap();
    let cfg = BoundConfig::default();
    let ns = [1e2, 1e3, 1e4, 1e5];
    let ratios: Vec<f64> =
        ns.iter().map(|&n| rn_tilde_bound(&fc, &cost, &div, n, &cfg, &consts).unwrap() / (n.ln() / n).sqrt()).collect();
    let c = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let drift = ratios.iter().map(|r| (r / c - 1.0).abs()).fold(0.0, f64::max);
    outcome(drift <= 0.2, format!("fit c = {c:.2}, ratios {ratios:.1?}, max drift {:.1}%", 100.0 * drift))
}

type Criterion = Box<dyn FnOnce() -> Outcome>;

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("OT strong duality", Box::new(|| timed(Duration::from_secs(10), c1_ot_duality))),
        ("OT-regularized strong duality", Box::new(|| timed(Duration::from_secs(60), c2_otreg_duality))),
        ("KL closed form equivalence", Box::new(c3_kl_closed_form)),
        ("sandwich bound", Box::new(c4_sandwich)),
        ("restricted nu domain", Box::new(c5_nu_domain)),
        ("large-lambda limit", Box::new(c6_lambda_infinity)),
        ("conjugate closed forms", Box::new(c7_conjugates)),
        ("closed-form dominance", Box::new(c8_closed_form_dominance)),
        ("g-function bounds", Box::new(c9_g_bounds)),
        ("Monte Carlo concentration", Box::new(|| timed(Duration::from_secs(300), c10_monte_carlo))),
        ("R_n_tilde rate", Box::new(c11_rate)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
