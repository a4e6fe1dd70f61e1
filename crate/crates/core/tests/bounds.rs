use std::sync::Arc;

use otdro::bounds::*;
use otdro::cost::{Norm, TransportCost};
use otdro::ctransform::Adversary;
use otdro::divergence::{AlphaDivergence, Divergence, KlDivergence};
use otdro::objective::{FamilyConstants, LossFamily, RidgeFamily};
use otdro::penalty::{Exponential, HardBall, Penalty, PowerLaw, PowerPlusLinear};

fn penalties() -> Vec<Arc<dyn Penalty>> {
    vec![
        Arc::new(PowerLaw::new(1.0, 2.0).unwrap()),
        Arc::new(PowerPlusLinear::new(1.0, 0.5, 2.0).unwrap()),
        Arc::new(Exponential::new(1.0, 2.0).unwrap()),
        Arc::new(HardBall),
    ]
}

#[test]
fn quadrature_is_dominated_by_closed_forms() {
    let cfg = BoundConfig::default();
    for p in penalties() {
        let m = if p.is_hard() { 0.0 } else { 2.0 };
        let cost = TransportCost::new(p, 0.1, Norm::L2, m).unwrap();
        for k in [1, 2, 4] {
            for lt in [0.5, 1.0, 2.0] {
                for n in [1e2, 1e3, 1e4] {
                    let fc = FamilyConstants { beta: 1.0, l_x: 1.0, l_theta: lt, k, verified: true };
                    let q = dn_bound(&fc, &cost, n, &cfg).unwrap();
                    let c = dn_closed_form(&fc, &cost, n).unwrap();
                    assert!(q <= c, "{} k={k} L={lt} n={n}: {q} > {c}", cost.penalty.name());
                }
            }
        }
    }
}

#[test]
fn exponential_matches_linear_case_with_eta_alpha_q() {
    let fc = FamilyConstants { beta: 1.0, l_x: 1.5, l_theta: 1.0, k: 2, verified: true };
    let e = TransportCost::new(Arc::new(Exponential::new(0.5, 3.0).unwrap()), 0.0, Norm::L2, 2.0).unwrap();
    let l = TransportCost::new(Arc::new(PowerPlusLinear::new(1.0, 1.5, 2.0).unwrap()), 0.0, Norm::L2, 2.0).unwrap();
    assert_eq!(dn_closed_form(&fc, &e, 1e3).unwrap(), dn_closed_form(&fc, &l, 1e3).unwrap());
}

fn margin() -> Arc<dyn LossFamily> {
    Arc::new(RidgeFamily::clamped_linear_margin(1.0, 2, 1.0).unwrap())
}

fn check(cost: TransportCost, div: &dyn Divergence, p0: f64) {
    let fam = margin();
    let consts = div.constants(p0, cost.max_cost).unwrap();
    let ln = lambda_n(&cost, 100.0, &LambdaNRule::default());
    let adv = Adversary::with_default_solver(fam, cost);
    let report = g_function_bounds_check(&adv, div, &consts, ln, 1000, 11).unwrap();
    assert!(report.passed(), "{:?}", &report.violations[..report.violations.len().min(3)]);
}

#[test]
fn g_bounds_alpha_two_hard_ball() {
    let a2 = AlphaDivergence::new(2.0).unwrap();
    let cost = TransportCost::new(Arc::new(HardBall), 0.2, Norm::L2, 0.0).unwrap();
    let consts = a2.constants(0.5, 0.0).unwrap();
    assert_eq!(consts.nu_tilde, -2.0);
    check(cost, &a2, 0.5);
}

#[test]
fn g_bounds_kl_power_law() {
    let mut cost = TransportCost::new(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), 0.1, Norm::L2, 0.0).unwrap();
    cost.max_cost = cost.phi(Norm::L2.box_diameter(1.0, 2)).unwrap().to_f64();
    check(cost, &KlDivergence, 0.25);
}

#[test]
fn rn_tilde_tracks_sqrt_log_n_over_n() {
    let fc = margin().constants(Norm::L2);
    let cfg = BoundConfig::default();
    let cost = TransportCost::new(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), 0.1, Norm::L2, 4.0).unwrap();
    let div = AlphaDivergence::new(2.0).unwrap();
    let consts = div.constants(0.25, cost.max_cost).unwrap();
    let ratios: Vec<f64> = [1e2, 1e3, 1e4, 1e5]
        .iter()
        .map(|&n| rn_tilde_bound(&fc, &cost, &div, n, &cfg, &consts).unwrap() / (n.ln() / n).sqrt())
        .collect();
    let fit = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    for r in &ratios {
        assert!((r / fit - 1.0).abs() <= 0.2, "{ratios:?}");
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn bounds_shrink_with_n() {
    let fc = margin().constants(Norm::L2);
    let cfg = BoundConfig { lambda_n: LambdaNRule { c: 10.0, exponent: Some(0.0) }, ..Default::default() };
    let cost = TransportCost::new(Arc::new(PowerLaw::new(1.0, 2.0).unwrap()), 0.1, Norm::L2, 4.0).unwrap();
    let consts = KlDivergence.constants(0.25, cost.max_cost).unwrap();
    let mut last = [f64::INFINITY; 3];
    for n in [10.0, 100.0, 1e3, 1e4] {
        let now = [
            dn_bound(&fc, &cost, n, &cfg).unwrap(),
            rn_bound(&fc, &cost, &KlDivergence, n, &cfg).unwrap(),
            rn_tilde_bound(&fc, &cost, &KlDivergence, n, &cfg, &consts).unwrap(),
        ];
        for (a, b) in now.iter().zip(&last) {
            assert!(a <= b);
        }
        last = now;
    }
}

#[test]
fn hard_ball_rn_first_term_vanishes() {
    let fc = margin().constants(Norm::L2);
    let cfg = BoundConfig::default();
    let hard = TransportCost::new(Arc::new(HardBall), 0.1, Norm::L2, 0.0).unwrap();
    let n = 400.0;
    let ln = lambda_n(&hard, n, &cfg.lambda_n);
    let entropy = 24.0 * entropy_integral(|e| otdro::objective::covering_log(fc.k, fc.l_theta, e), fc.beta, &cfg.integration) / n.sqrt();
    let kl = rn_bound(&fc, &hard, &KlDivergence, n, &cfg).unwrap();
    let middle = 2.0 * fc.beta * ((fc.beta / ln).exp() - 1.0);
    assert!((kl - entropy - middle).abs() < 1e-12);
}

#[test]
fn rn_tilde_rejects_empty_nu_domain() {
    let fc = margin().constants(Norm::L2);
    let hard = TransportCost::new(Arc::new(HardBall), 0.1, Norm::L2, 0.0).unwrap();
    let mut consts = KlDivergence.constants(0.25, 0.0).unwrap();
    consts.nu_tilde = -consts.s0;
    assert!(rn_tilde_bound(&fc, &hard, &KlDivergence, 100.0, &BoundConfig::default(), &consts).is_err());
}
