use std::sync::Arc;

use proptest::prelude::*;

use otdro::bounds::{tail_probability, TailInputs, Theorem};
use otdro::cost::{Norm, TransportCost};
use otdro::ctransform::Adversary;
use otdro::divergence::{f_divergence_finite, AlphaDivergence, Divergence, KlDivergence};
use otdro::dual::{lambda_f, nu_domain, ot_dual, otreg_dual, NuDomain, SampleOracle, DEFAULT_OUTER_TOL};
use otdro::ext::ExtReal;
use otdro::objective::{Dataset, LossFamily, Point, RidgeFamily};
use otdro::penalty::{Exponential, HardBall, Penalty, PowerLaw, PowerPlusLinear};
use otdro::primal::{ot_primal_lp, FiniteInstance, SourceCandidates};

fn divergence(alpha: Option<f64>) -> Box<dyn Divergence> {
    match alpha {
        None => Box::new(KlDivergence),
        Some(a) => Box::new(AlphaDivergence::new(a).unwrap()),
    }
}

fn any_divergence() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), (1.1f64..5.0).prop_map(Some)]
}

fn penalty(idx: usize) -> Arc<dyn Penalty> {
    match idx {
        0 => Arc::new(PowerLaw::new(1.0, 2.0).unwrap()),
        1 => Arc::new(PowerPlusLinear::new(0.5, 0.7, 1.5).unwrap()),
        2 => Arc::new(Exponential::new(0.5, 2.0).unwrap()),
        _ => Arc::new(HardBall),
    }
}

fn family() -> Arc<dyn LossFamily> {
    Arc::new(RidgeFamily::clamped_linear_margin(1.0, 2, 1.0).unwrap())
}

fn adversary(p: usize) -> Adversary {
    let mut cost = TransportCost::new(penalty(p), 0.1, Norm::L2, 0.0).unwrap();
    if !cost.penalty.is_hard() {
        cost.max_cost = cost.phi(Norm::L2.box_diameter(1.0, 2)).unwrap().to_f64();
    }
    Adversary::with_default_solver(family(), cost)
}

fn theta_in_ball() -> impl Strategy<Value = Vec<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| {
        let n = (a * a + b * b).sqrt().max(1.0);
        vec![a / n, b / n]
    })
}

fn point() -> impl Strategy<Value = Point> {
    (-1.0f64..1.0, -1.0f64..1.0, any::<bool>()).prop_map(|(a, b, s)| Point { x: vec![a, b], y: if s { 1.0 } else { -1.0 } })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fenchel_young(alpha in any_divergence(), t in 0.01f64..5.0, s in -10.0f64..10.0) {
        let d = divergence(alpha);
        let f = d.f(t).unwrap().to_f64();
        let fs = d.f_star_finite(s).unwrap();
        prop_assert!(f + fs >= s * t - 1e-9 * (1.0 + (s * t).abs()));
        let g = d.f_deriv(t);
        let equality = f + d.f_star_finite(g).unwrap() - g * t;
        prop_assert!(equality.abs() <= 1e-9 * (1.0 + (g * t).abs()));
    }

    #[test]
    fn s0_is_a_fixed_point(alpha in any_divergence()) {
        let d = divergence(alpha);
        let s0 = d.s0();
        prop_assert!((d.f_star_finite(s0).unwrap() - s0).abs() < 1e-12);
        prop_assert!((d.f_star_right_deriv(s0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_slope_is_monotone(alpha in any_divergence(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let d = divergence(alpha);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(d.f_star_right_deriv(lo) <= d.f_star_right_deriv(hi));
    }

    #[test]
    fn nu_tilde_meets_slope_condition(alpha in any_divergence(), p0 in 0.01f64..0.99, m in 0.0f64..5.0) {
        let d = divergence(alpha);
        let nu = d.constants(p0, m).unwrap().nu_tilde;
        prop_assert!(d.f_star_right_deriv(-m - nu) >= 1.0 / p0 - 1e-12);
    }

    #[test]
    fn divergence_is_nonnegative(alpha in any_divergence(), raw in prop::collection::vec(0.05f64..1.0, 2..6), tilt in 0.0f64..1.0) {
        let d = divergence(alpha);
        let total: f64 = raw.iter().sum();
        let mu: Vec<f64> = raw.iter().map(|v| v / total).collect();
        prop_assert!(f_divergence_finite(d.as_ref(), &mu, &mu).unwrap().to_f64().abs() < 1e-12);
        let mut nu: Vec<f64> = mu.iter().enumerate().map(|(i, m)| if i == 0 { m + tilt } else { *m }).collect();
        let s: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= s);
        let v = f_divergence_finite(d.as_ref(), &nu, &mu).unwrap().to_f64();
        prop_assert!(v >= -1e-15);
        if tilt > 1e-3 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn scaled_conjugate_shrinks_with_lambda(p in 0usize..4, l_x in 0.1f64..3.0, a in 0.01f64..10.0, b in 0.01f64..10.0) {
        let pen = penalty(p);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(hi * pen.psi_star(l_x / hi) <= lo * pen.psi_star(l_x / lo) + 1e-12);
    }

    #[test]
    fn lambda_star_is_feasible(p in 0usize..4, l_x in 0.1f64..3.0, eps2 in 0.001f64..5.0) {
        let pen = penalty(p);
        let ls = pen.lambda_star(eps2, l_x).unwrap();
        if ls > 0.0 {
            prop_assert!(ls * pen.psi_star(l_x / ls) <= eps2 + 1e-8);
            let below = ls - 1e-6;
            if below > 0.0 {
                prop_assert!(below * pen.psi_star(l_x / below) > eps2);
            }
        }
    }

    #[test]
    fn soft_cost_is_below_hard_cost(p in 0usize..4, a in point(), b in point()) {
        let adv = adversary(p);
        prop_assert_eq!(adv.cost.eval(&a, &a).unwrap(), ExtReal::ZERO);
        let soft = adv.cost.eval(&a, &b).unwrap();
        prop_assert!(soft <= adv.cost.eval_hard(&a, &b));
    }

    #[test]
    fn loss_is_bounded_and_lipschitz(t in theta_in_ball(), a in point(), b in point()) {
        let fam = family();
        let fc = fam.constants(Norm::L2);
        let b = Point { x: b.x, y: a.y };
        let la = fam.loss(&t, &a).unwrap();
        let lb = fam.loss(&t, &b).unwrap();
        prop_assert!((0.0..=fc.beta).contains(&la));
        prop_assert!((la - lb).abs() <= fc.l_x * Norm::L2.dist(&a.x, &b.x) + 1e-9);
    }

    #[test]
    fn c_transform_shrinks_with_lambda(p in 0usize..4, t in theta_in_ball(), z in point(), l1 in 0.01f64..20.0, l2 in 0.01f64..20.0) {
        let adv = adversary(p);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = adv.c_transform(&t, lo, &z).unwrap().value;
        let b = adv.c_transform(&t, hi, &z).unwrap().value;
        prop_assert!(b <= a + 1e-12);
        prop_assert!(a - b <= adv.cost.max_cost * (hi - lo) + 1e-9);
        prop_assert!(b >= family().loss(&t, &z).unwrap() - 1e-12);
    }

    #[test]
    fn c_transform_contracts_in_theta(p in 0usize..3, t1 in theta_in_ball(), t2 in theta_in_ball(), z in point(), lam in 0.05f64..10.0) {
        let adv = adversary(p);
        let fc = family().constants(Norm::L2);
        let d = adv.c_transform(&t1, lam, &z).unwrap().value - adv.c_transform(&t2, lam, &z).unwrap().value;
        let dist = Norm::L2.dist(&t1, &t2);
        prop_assert!(d.abs() <= fc.l_theta * dist + 1e-9);
    }

    #[test]
    fn lambda_f_shift_identity(alpha in any_divergence(), phi in prop::collection::vec(-3.0f64..1.0, 1..10), gamma in -2.0f64..2.0) {
        let d = divergence(alpha);
        let w = vec![1.0 / phi.len() as f64; phi.len()];
        let shifted: Vec<f64> = phi.iter().map(|p| p + gamma).collect();
        let a = lambda_f(&w, &phi, d.as_ref(), nu_domain(&w, &phi, d.as_ref(), NuDomain::Simple).unwrap()).unwrap().value;
        let b = lambda_f(&w, &shifted, d.as_ref(), nu_domain(&w, &shifted, d.as_ref(), NuDomain::Simple).unwrap()).unwrap().value;
        prop_assert!((b - a - gamma).abs() < 1e-9);
    }

    #[test]
    fn tails_are_probabilities(n in 1.0f64..1e4, eps in 0.0f64..1.0, c2 in 0.5f64..5.0, which in 0usize..4) {
        let th = [Theorem::OtValues, Theorem::OtErm, Theorem::OtRegValues, Theorem::OtRegErm][which];
        let t = TailInputs { beta: 1.0, c2: Some(c2), class_probs: vec![0.4, 0.6], p0: Some(0.2), delta_opt: 0.01 };
        let v = tail_probability(th, n, eps, &t).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.value));
        prop_assert_eq!(v.clamped, v.raw > 1.0);
        if !v.clamped {
            prop_assert_eq!(v.value, v.raw);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_values_grow_with_radius(p in 0usize..4, t in theta_in_ball(), pts in prop::collection::vec(point(), 1..8), alpha in any_divergence()) {
        let adv = adversary(p);
        let sample = Dataset::new(pts).unwrap();
        let oracle = SampleOracle::new(&adv, &t, &sample).unwrap();
        let mean = sample.mean_loss(family().as_ref(), &t).unwrap();
        let d = divergence(alpha);
        let mut last_ot = f64::NEG_INFINITY;
        let mut last_reg = f64::NEG_INFINITY;
        for r in [0.01, 0.05, 0.2, 1.0] {
            let ot = ot_dual(&oracle, r, DEFAULT_OUTER_TOL).unwrap().value;
            let reg = otreg_dual(&oracle, d.as_ref(), r, DEFAULT_OUTER_TOL).unwrap().value;
            prop_assert!(ot >= mean - 1e-9 && reg >= mean - 1e-9);
            prop_assert!(ot >= last_ot - 1e-9 && reg >= last_reg - 1e-9);
            last_ot = ot;
            last_reg = reg;
        }
    }

    #[test]
    fn lp_primal_grows_with_radius(seed_losses in prop::collection::vec(0.0f64..1.0, 2..12), costs in prop::collection::vec(0.0f64..2.0, 2..12)) {
        let m = seed_losses.len().min(costs.len());
        let mut c: Vec<ExtReal> = costs[..m].iter().map(|v| ExtReal::Finite(*v)).collect();
        c[0] = ExtReal::ZERO;
        let inst = FiniteInstance::new(vec![SourceCandidates { losses: seed_losses[..m].to_vec(), costs: c, own: 0 }]).unwrap();
        prop_assert_eq!(ot_primal_lp(&inst, 0.0).unwrap(), inst.mean_source_loss());
        let mut last = f64::NEG_INFINITY;
        for r in [0.0, 0.1, 0.5, 2.0] {
            let v = ot_primal_lp(&inst, r).unwrap();
            prop_assert!(v >= last - 1e-12);
            last = v;
        }
    }
}
