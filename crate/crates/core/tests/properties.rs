use std::sync::Arc;

use bcbounds::bc::{adversarial_imitator, collect, fit_imitator, hypothesis, imitation_mse, measure_gap, DEFAULT_RIDGE};
use bcbounds::bounds::{critical_exponent, gap_bound, holder_q_constant, lipschitz_q_constant, BoundConstants, BoundKind};
use bcbounds::mdp::{discounted_return, rollout, InitialState, MdpSpec, PolicySpec};
use bcbounds::noise::{inject, kernel};
use bcbounds::value::{clipchain_v_exact, counterexample_gap_series, mc_return};
use proptest::prelude::*;

fn v(s: f64, l_p: f64, gamma: f64) -> f64 {
    clipchain_v_exact(s, l_p, 1.0, gamma, 1e-12).unwrap()
}

/// Random piecewise-constant map `[0,1] -> [0,1]`.
fn step_policy(levels: Vec<f64>) -> PolicySpec {
    let n = levels.len();
    PolicySpec::deterministic("steps", 0.0, move |s: f64| levels[((s * n as f64) as usize).min(n - 1)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_chain_value_is_odd(s in -1.0f64..1.0, l_p in 0.5f64..2.0, gamma in 0.5f64..0.95) {
        prop_assert_eq!(v(-s, l_p, gamma), -v(s, l_p, gamma));
    }

    #[test]
    fn counterexample_ratio_decreases_to_the_lipschitz_constant(l_p in 0.3f64..1.3, gamma in 0.5f64..0.95) {
        prop_assume!(gamma * l_p < 0.9);
        let deltas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-6, 1e-12];
        let r: Vec<f64> = deltas.iter().map(|d| counterexample_gap_series(*d, l_p, 1.0, gamma, 1e-14).unwrap() / d).collect();
        for w in r.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0]);
        }
        let limit = 1.0 / (1.0 - gamma * l_p);
        prop_assert!((r[r.len() - 1] - limit).abs() <= 1e-4 * limit);
    }

    #[test]
    fn point_mass_return_matches_series(s in -1.0f64..1.0, l_p in 0.5f64..2.0, gamma in 0.5f64..0.95) {
        let mdp = MdpSpec::clip_chain(l_p, 1.0, gamma).unwrap().with_init(InitialState::Point(s));
        let h = mdp.truncation_horizon(1e-8);
        let est = mc_return(&mdp, &PolicySpec::constant(0.0), 2, h, 5).unwrap();
        prop_assert!((est.mean - v(s, l_p, gamma)).abs() <= 1e-8 + 1e-10);
    }

    #[test]
    fn rollouts_are_reproducible_and_contained(levels in proptest::collection::vec(0.0f64..1.0, 1..8), seed in any::<u64>(), l_p in 0.5f64..2.0) {
        let mdp = MdpSpec::shift_control(l_p, 1.0, 0.9).unwrap();
        let noisy = inject(&step_policy(levels), kernel("gaussian", 0.3).unwrap()).unwrap();
        let a = rollout(&mdp, &noisy, 60, seed).unwrap();
        prop_assert_eq!(&a, &rollout(&mdp, &noisy, 60, seed).unwrap());
        prop_assert!(a.states.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(a.actions.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn gap_bounds_are_monotone_in_divergence(d1 in 0.0f64..5.0, d2 in 0.0f64..5.0, gamma in 0.1f64..0.99) {
        let c = BoundConstants { gamma, r_max: Some(1.0), q_max: None, l_q: Some(3.0), alpha: Some(0.6), l_q_alpha: Some(2.0), l_ell: Some(2.0) };
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        for kind in BoundKind::ALL {
            prop_assert!(gap_bound(kind, &c, lo).unwrap() <= gap_bound(kind, &c, hi).unwrap());
        }
    }

    #[test]
    fn constants_grow_with_reward_scale_and_discount(l_r in 0.1f64..5.0, dl in 0.0f64..2.0, g in 0.1f64..0.9, dg in 0.0f64..0.09, l_p in 0.5f64..1.5, l_pi in 0.0f64..0.5) {
        let (g2, l_r2) = (g + dg, l_r + dl);
        if let (Some(a), Some(b)) = (lipschitz_q_constant(l_r, l_p, l_pi, g), lipschitz_q_constant(l_r2, l_p, l_pi, g2)) {
            prop_assert!(a <= b);
        }
        let alpha = 0.5 * critical_exponent(g2, l_p, l_pi).unwrap();
        let a = holder_q_constant(alpha, l_r, 1.0, 1.0, g, l_p, l_pi).unwrap();
        let b = holder_q_constant(alpha, l_r2, 1.0, 1.0, g2, l_p, l_pi).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn applicability_boundary_matches_critical_exponent(g in 0.05f64..0.99, l_p in 0.2f64..3.0, l_pi in 0.0f64..1.0) {
        let k = g * l_p * (1.0 + l_pi);
        prop_assume!((k - 1.0).abs() > 1e-9);
        let applicable = lipschitz_q_constant(1.0, l_p, l_pi, g).is_some();
        prop_assert_eq!(applicable, k < 1.0);
        prop_assert_eq!(critical_exponent(g, l_p, l_pi).unwrap() < 1.0, !applicable);
        if applicable && critical_exponent(g, l_p, l_pi).unwrap() >= 1.0 {
            let near_one = holder_q_constant(1.0 - 1e-9, 1.0, 2.0, 1.0, g, l_p, l_pi);
            if let Ok(h) = near_one {
                let l = lipschitz_q_constant(1.0, l_p, l_pi, g).unwrap();
                prop_assert!((h - l).abs() <= 1e-6 * l.max(1.0));
            }
        }
    }
}

#[test]
fn holder_constant_approaches_lipschitz_constant() {
    for (g, l_p, l_pi) in [(0.75, 1.15, 0.0), (0.9, 0.5, 0.2), (0.5, 1.5, 0.1)] {
        let l = lipschitz_q_constant(1.0, l_p, l_pi, g).unwrap();
        let h = holder_q_constant(1.0 - 1e-9, 1.0, 2.0, 1.0, g, l_p, l_pi).unwrap();
        assert!((h - l).abs() <= 1e-6 * l, "{h} vs {l}");
    }
}

#[test]
fn expert_is_optimal_on_shift_control() {
    let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
    let h = mdp.truncation_horizon(1e-8);
    let expert = discounted_return(&rollout(&mdp, &PolicySpec::constant(0.0), h, 0).unwrap(), mdp.gamma);
    assert_eq!(expert, 0.0);
    let mut rng = bcbounds::stream::stream(3, 0, bcbounds::stream::Purpose::Data);
    for _ in 0..20 {
        let levels: Vec<f64> = (0..6).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let ret = discounted_return(&rollout(&mdp, &step_policy(levels), h, 0).unwrap(), mdp.gamma);
        assert!(ret <= 0.0);
    }
}

#[test]
fn wasserstein_bound_holds_for_constant_imitators() {
    let mdp = MdpSpec::shift_control(0.8, 1.0, 0.9).unwrap();
    let h = mdp.truncation_horizon(1e-8);
    let expert = PolicySpec::constant(0.0);
    let data = collect(&mdp, &expert, 1, h, 0).unwrap();
    let c = BoundConstants { gamma: 0.9, l_q: lipschitz_q_constant(1.0, 0.8, 0.0, 0.9), ..Default::default() };
    for i in 0..10 {
        let imitator = PolicySpec::constant(0.05 + 0.1 * i as f64);
        let gap = measure_gap(&mdp, &expert, &imitator, 2, h, 0).unwrap();
        let bound = gap_bound(BoundKind::Wasserstein, &c, data.mean_wasserstein(&imitator).unwrap()).unwrap();
        assert!(gap.gap > 0.0 && gap.gap <= bound + 3.0 * gap.half_ci95, "{} > {bound}", gap.gap);
    }
}

#[test]
fn noise_is_reproducible_and_zero_mean() {
    let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
    let wide = MdpSpec { action_lo: -10.0, action_hi: 10.0, ..mdp.clone() };
    for fam in ["gaussian", "uniform", "triangular"] {
        let k = kernel(fam, 0.5).unwrap();
        let p = inject(&PolicySpec::constant(0.0), Arc::clone(&k)).unwrap();
        let a = rollout(&mdp, &p, 50, 9).unwrap();
        assert_eq!(a.pre_clip_actions, rollout(&mdp, &p, 50, 9).unwrap().pre_clip_actions);
        let n = 1_000_000;
        let mut rng = bcbounds::stream::stream(17, 0, bcbounds::stream::Purpose::Noise);
        let draws: Vec<f64> = (0..n).map(|_| p.act(&wide, 0.0, &mut rng).pre_clip).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 * k.std_dev() / (n as f64).sqrt(), "{fam}: mean {mean}");
    }
}

#[test]
fn mse_dominates_mean_wasserstein() {
    let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
    let h = mdp.truncation_horizon(1e-6);
    let expert = PolicySpec::deterministic("tilt", 0.3, |s: f64| 0.3 * s);
    let data = collect(&mdp, &inject(&expert, kernel("gaussian", 0.25).unwrap()).unwrap(), 50, h, 4).unwrap();
    let mut imitators: Vec<PolicySpec> = (0..5).map(|i| PolicySpec::constant(0.1 * i as f64)).collect();
    for degree in 0..4 {
        imitators.push(fit_imitator(&data, hypothesis("polynomial", degree, 0.0, 1.0).unwrap(), DEFAULT_RIDGE).unwrap().policy);
    }
    for p in &imitators {
        let mse = imitation_mse(&data, p).unwrap();
        assert!(mse.sqrt() >= data.mean_wasserstein(p).unwrap() - 1e-12, "{}", p.label());
    }
}

#[test]
fn adversarial_imitator_is_far_in_tv_and_close_in_w() {
    let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
    let expert = PolicySpec::constant(0.0);
    let data = collect(&mdp, &expert, 1, 100, 0).unwrap();
    for eps in [0.01, 0.1, 0.3] {
        let p = adversarial_imitator(&expert, eps, 1).unwrap();
        assert_eq!(data.mean_tv(&p), 1.0);
        assert!((data.mean_wasserstein(&p).unwrap() - eps).abs() < 1e-12);
    }
}

#[test]
fn training_mse_is_nonincreasing_in_degree() {
    let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
    let h = mdp.truncation_horizon(1e-6);
    let expert = PolicySpec::deterministic("wave", 1.0, |s: f64| 0.5 + 0.3 * (6.0 * s).sin());
    let data = collect(&mdp, &inject(&expert, kernel("uniform", 0.4).unwrap()).unwrap(), 40, h, 8).unwrap();
    let mut last = f64::INFINITY;
    for degree in 0..7 {
        let fit = fit_imitator(&data, hypothesis("polynomial", degree, 0.0, 1.0).unwrap(), DEFAULT_RIDGE).unwrap();
        let mse = imitation_mse(&data, &fit.policy).unwrap();
        assert!(mse <= last * (1.0 + 1e-9), "degree {degree}: {mse} > {last}");
        last = mse;
    }
}

#[test]
fn self_gap_is_exactly_zero() {
    for mdp in [MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap(), MdpSpec::clip_chain(1.15, 1.0, 0.9).unwrap()] {
        let p = PolicySpec::deterministic("zero", 0.0, |_| 0.0);
        let g = measure_gap(&mdp, &p, &p, 8, 200, 1).unwrap();
        assert_eq!(g.gap, 0.0);
    }
}
