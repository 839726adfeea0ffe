//! Worked examples for the exact oracles on the catalog environments.

mod common;

use common::{random_mdp, random_policy, random_smooth_spec};
use cptrl_core::cpt::{CptSpec, DiscreteDist, UtilitySpec, WeightSpec};
use cptrl_core::env::{exp_counterexample, markov_test_env, two_state_counterexample, FiniteMdp, FiniteMdpBuilder};
use cptrl_core::oracle::{
    enumerate_return_distribution, exact_cpt, exact_policy_gradient, grid_search_policy,
    propagate_return_distribution, return_distribution, solve_eut_dp, two_action_mix, unwind_mdp, PolicyGridSpec,
};
use cptrl_core::policy::{HistoryAbstraction, PolicyParams};
use cptrl_core::rng::seeded;

fn two_state_policy(p: f64) -> PolicyParams {
    let mut policy = PolicyParams::softmax(HistoryAbstraction::Stationary, 2, 2).unwrap();
    policy.params_mut()[1] = (p / (1.0 - p)).ln();
    policy
}

#[test]
fn two_state_return_law_under_action_b() {
    let mdp = two_state_counterexample();
    let policy = two_action_mix(&mdp, 0, (0, 1), &[], &[1.0]).unwrap();
    let law = return_distribution(&mdp, &policy).unwrap();
    assert_eq!(law, DiscreteDist::new([(0.0, 0.5), (1.5, 0.5)]).unwrap());
    let sure = two_action_mix(&mdp, 0, (0, 1), &[], &[0.0]).unwrap();
    assert_eq!(return_distribution(&mdp, &sure).unwrap(), DiscreteDist::dirac(1.0));
}

#[test]
fn enumeration_and_propagation_agree() {
    let mut rng = seeded(21);
    for _ in 0..30 {
        let mdp = random_mdp(&mut rng);
        let policy = two_action_mix(&mdp, 0, (0, 1), &[0.0], &[0.3, 0.8]).unwrap();
        let a = enumerate_return_distribution(&mdp, &policy).unwrap();
        let b = propagate_return_distribution(&mdp, &policy).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12, "{x:?} vs {y:?}");
        }
    }
}

#[test]
fn two_state_gradient_in_closed_form() {
    let mdp = two_state_counterexample();
    let spec = CptSpec::gains_only(WeightSpec::w_rs());
    // dC/dp at p = 0.4 and p = 0.1, mapped through dp/dθ_B = p(1 − p)
    for (p, slope) in [(0.4, -5.0 / 36.0), (0.1, 35.0 / 36.0)] {
        let grad = exact_policy_gradient(&mdp, &two_state_policy(p), &spec).unwrap();
        let want = slope * p * (1.0 - p);
        assert!((grad[1] - want).abs() < 1e-10, "p={p}: {} vs {want}", grad[1]);
        assert!((grad[0] + want).abs() < 1e-10);
        assert!(grad[2..].iter().all(|g| g.abs() < 1e-15));
    }
}

#[test]
fn identity_spec_gradient_matches_finite_differences_of_the_mean() {
    let mut rng = seeded(8);
    let spec = CptSpec::expectation();
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng);
        let policy = random_policy(&mdp, &mut rng);
        let grad = exact_policy_gradient(&mdp, &policy, &spec).unwrap();
        let mean = |p: &PolicyParams| return_distribution(&mdp, p).unwrap().mean();
        let h = 1e-6;
        for (i, g) in grad.iter().enumerate() {
            let mut plus = policy.clone();
            plus.params_mut()[i] += h;
            let mut minus = policy.clone();
            minus.params_mut()[i] -= h;
            let fd = (mean(&plus) - mean(&minus)) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-8 * (1.0 + g.abs()), "param {i}: {g} vs {fd}");
        }
    }
}

#[test]
fn smooth_spec_values_are_finite_on_random_mdps() {
    let mut rng = seeded(9);
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng);
        let policy = random_policy(&mdp, &mut rng);
        let spec = random_smooth_spec(&mut rng);
        assert!(exact_cpt(&mdp, &policy, &spec).unwrap().is_finite());
    }
}

#[test]
fn unwound_state_counts() {
    // one start state plus terminal partial sums {1, 0, 1.5}
    let unwound = unwind_mdp(&two_state_counterexample(), &UtilitySpec::identity()).unwrap();
    assert_eq!(unwound.len(), 4);
    assert_eq!(unwound.states.iter().filter(|s| s.t == 1).count(), 3);

    let single_step: FiniteMdp = FiniteMdpBuilder::new("single_step", 3, 2, 1)
        .start(0)
        .terminal(1)
        .terminal(2)
        .branch(0, 0, 1, 0.5, vec![(1.0, 1.0)])
        .branch(0, 0, 2, 0.5, vec![(1.0, 0.5), (2.0, 0.5)])
        .branch(0, 1, 1, 1.0, vec![(-1.0, 1.0)])
        .build()
        .unwrap();
    // reachable (s, 1, σ): (1, 1), (2, 1), (2, 2), (1, −1)
    assert_eq!(unwind_mdp(&single_step, &UtilitySpec::identity()).unwrap().len(), 1 + 4);
}

#[test]
fn telescoping_increments_sum_to_the_utility() {
    let mut rng = seeded(13);
    for utility in [
        UtilitySpec::identity(),
        UtilitySpec::kahneman_tversky(2.25, 0.88).unwrap(),
        UtilitySpec::sqrt_shift(1.0).unwrap(),
    ] {
        let unwound = unwind_mdp(&markov_test_env(), &utility).unwrap();
        for _ in 0..1000 {
            let (increments, partial) = unwound.sample_rollout(&mut rng, |_, r| rand::Rng::random_range(r, 0..3));
            let want = utility.eval(partial) - utility.eval(0.0);
            assert!((increments - want).abs() <= 1e-12, "{increments} vs {want}");
        }
    }
}

#[test]
fn identity_utility_dp_on_the_markov_test_env() {
    let solution = solve_eut_dp(&markov_test_env(), &UtilitySpec::identity()).unwrap();
    assert!((solution.value - 1.5).abs() < 1e-12);
    for sigma in [-1.0, 1.0] {
        assert_eq!(solution.action_at(1, 1, sigma), Some(1), "σ = {sigma}");
    }
}

#[test]
fn concave_utility_makes_the_optimal_action_depend_on_the_first_reward() {
    let solution = solve_eut_dp(&markov_test_env(), &UtilitySpec::sqrt_shift(1.0).unwrap()).unwrap();
    // after −1 the sure reward A wins, after +1 the gamble B wins
    assert_eq!(solution.action_at(1, 1, -1.0), Some(0));
    assert_eq!(solution.action_at(1, 1, 1.0), Some(1));
}

#[test]
fn exponential_utility_dp_matches_the_markov_grid() {
    let mdp = markov_test_env();
    let utility = UtilitySpec::exponential_risk(0.5).unwrap();
    let dp = solve_eut_dp(&mdp, &utility).unwrap().value;
    let spec = CptSpec::expected_utility(utility);
    let grid = PolicyGridSpec::with_step(1, 0.02).unwrap();
    let best = grid_search_policy(&mdp, &spec, &grid, |p| two_action_mix(&mdp, 1, (0, 1), &[], p)).unwrap();
    assert!((dp - best.best_value).abs() < 1e-9, "DP {dp} vs grid {}", best.best_value);
}

#[test]
fn exp_counterexample_full_grid_beats_the_markov_slice() {
    let mdp = exp_counterexample();
    let spec = CptSpec::new(UtilitySpec::exponential_risk(0.5).unwrap(), WeightSpec::w_rs(), WeightSpec::w_rs()).unwrap();
    let grid = PolicyGridSpec::with_step(2, 0.02).unwrap();
    let full = grid_search_policy(&mdp, &spec, &grid, |p| two_action_mix(&mdp, 1, (1, 0), &[0.5], p)).unwrap();
    let diagonal = full.table.iter().filter(|(p, _)| p[0] == p[1]).map(|r| r.1).fold(f64::MIN, f64::max);
    assert!(full.best_value > diagonal + 0.005);
    assert!(full.table.len() == 51 * 51);
}

#[test]
fn grid_csv_has_one_column_per_axis() {
    let grid = PolicyGridSpec::with_step(2, 0.5).unwrap();
    let mdp = exp_counterexample();
    let spec = CptSpec::expectation();
    let result = grid_search_policy(&mdp, &spec, &grid, |p| two_action_mix(&mdp, 1, (1, 0), &[0.5], p)).unwrap();
    let csv = result.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p0,p1,cpt_value"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn bad_grids_are_rejected() {
    assert!(PolicyGridSpec::with_step(1, 0.0).is_err());
    assert!(PolicyGridSpec::with_step(1, 0.3).is_err());
    assert!(PolicyGridSpec::with_step(0, 0.1).unwrap().validate().is_err());
    assert!(PolicyGridSpec::uniform(1, 1).validate().is_err());
}
