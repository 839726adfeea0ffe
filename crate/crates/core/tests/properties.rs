//! Property tests over randomly drawn laws, specs, MDPs and policies.

mod common;

use common::{random_mdp, random_policy, random_smooth_spec};
use cptrl_core::cpt::{cpt_value_empirical, cpt_value_exact, CptSpec, DiscreteDist, UtilitySpec, WeightSpec};
use cptrl_core::env::{discounted_sum, sample_trajectory, Action, EnvState, Environment};
use cptrl_core::oracle::return_distribution;
use cptrl_core::phi::{phi_exact_discrete, phi_quantile};
use cptrl_core::policy::{randomize, DiscretePolicy, Feature, HistoryAbstraction, HistoryView, PolicyParams};
use cptrl_core::rng::seeded;
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, 0.05..1.0f64), 1..8)
}

fn dist(atoms: &[(f64, f64)]) -> DiscreteDist {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let mut normalized: Vec<(f64, f64)> = atoms.iter().map(|&(x, p)| (x, p / total)).collect();
    let fix = 1.0 - normalized.iter().map(|a| a.1).sum::<f64>();
    normalized[0].1 += fix;
    DiscreteDist::new(normalized).unwrap()
}

fn weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        Just(WeightSpec::Identity),
        Just(WeightSpec::w_ra()),
        Just(WeightSpec::w_rs()),
        Just(WeightSpec::w_sra()),
        Just(WeightSpec::w_srs()),
        (0.3..1.0f64).prop_map(|eta| WeightSpec::KahnemanTversky { eta }),
        (0.3..1.0f64).prop_map(|eta| WeightSpec::Prelec { eta }),
    ]
}

fn utility() -> impl Strategy<Value = UtilitySpec> {
    prop_oneof![
        Just(UtilitySpec::identity()),
        (1.0..3.0f64, 0.3..1.0f64).prop_map(|(l, a)| UtilitySpec::kahneman_tversky(l, a).unwrap()),
        (0.1..2.0f64).prop_map(|b| UtilitySpec::exponential_risk(b).unwrap()),
    ]
}

fn spec() -> impl Strategy<Value = CptSpec> {
    (utility(), weight(), weight()).prop_map(|(u, wp, wm)| CptSpec::new(u, wp, wm).unwrap())
}

fn piecewise_weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        Just(WeightSpec::Identity),
        Just(WeightSpec::w_ra()),
        Just(WeightSpec::w_rs()),
        Just(WeightSpec::w_sra()),
        Just(WeightSpec::w_srs()),
    ]
}

proptest! {
    #[test]
    fn normalized_laws_are_sorted_and_sum_to_one(atoms in atoms()) {
        let d = dist(&atoms);
        let total: f64 = d.atoms().iter().map(|a| a.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(d.atoms().iter().all(|a| a.1 > 0.0));
        prop_assert!(d.atoms().windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn identity_spec_gives_the_mean(atoms in atoms()) {
        let d = dist(&atoms);
        prop_assert!((cpt_value_exact(&d, &CptSpec::expectation()) - d.mean()).abs() <= 1e-12);
    }

    #[test]
    fn translation_never_lowers_the_value(atoms in atoms(), spec in spec(), c in 0.01..3.0f64) {
        let d = dist(&atoms);
        let before = cpt_value_exact(&d, &spec);
        let after = cpt_value_exact(&d.shifted(c), &spec);
        prop_assert!(after >= before - 1e-9, "{after} < {before}");
    }

    #[test]
    fn exact_and_empirical_agree_on_enumerated_samples(
        counts in prop::collection::vec((-5.0..5.0f64, 1usize..6), 1..6),
        u in utility(),
        wp in piecewise_weight(),
        wm in piecewise_weight(),
    ) {
        let spec = CptSpec::new(u, wp, wm).unwrap();
        let samples: Vec<f64> = counts.iter().flat_map(|&(x, k)| std::iter::repeat_n(x, k)).collect();
        let law = DiscreteDist::empirical(&samples).unwrap();
        let exact = cpt_value_exact(&law, &spec);
        let empirical = cpt_value_empirical(&samples, &spec).unwrap();
        prop_assert!((exact - empirical).abs() <= 1e-9, "{exact} vs {empirical}");
    }

    #[test]
    fn identity_weights_collapse_phi(
        batch in prop::collection::vec(-5.0..5.0f64, 2..50),
        u in utility(),
        v in -6.0..6.0f64,
    ) {
        let spec = CptSpec::new(u.clone(), WeightSpec::Identity, WeightSpec::Identity).unwrap();
        let phi = phi_quantile(v, &batch, &spec).unwrap().value();
        let want = u.gain(v) - u.loss(v);
        prop_assert!((phi - want).abs() <= 1e-12 * (1.0 + want.abs()), "{phi} vs {want}");
    }

    #[test]
    fn gains_only_phi_is_monotone(atoms in atoms(), u in utility(), w in weight()) {
        let spec = CptSpec::new(u, w, WeightSpec::Zero).unwrap();
        let law = dist(&atoms);
        let values: Vec<f64> = (0..=1000).map(|i| -6.0 + 12.0 * i as f64 / 1000.0).collect();
        let phis: Vec<f64> = values.iter().map(|&v| phi_exact_discrete(v, &law, &spec).value()).collect();
        prop_assert!(phis.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollouts_respect_the_mdp(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(&mut rng);
        let policy = random_policy(&mdp, &mut rng);
        for _ in 0..20 {
            let traj = sample_trajectory(&mdp, &policy, &mut rng).unwrap();
            prop_assert!(traj.len() <= mdp.horizon());
            prop_assert!(traj.steps.iter().all(|s| s.reward.abs() <= mdp.r_max()));
            let recomputed = discounted_sum(traj.steps.iter().map(|s| s.reward), mdp.discount());
            prop_assert_eq!(traj.return_value, recomputed);
        }
    }

    #[test]
    fn enumerated_returns_form_a_law(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(&mut rng);
        let policy = random_policy(&mdp, &mut rng);
        let law = return_distribution(&mdp, &policy).unwrap();
        let total: f64 = law.atoms().iter().map(|a| a.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let spec = random_smooth_spec(&mut rng);
        prop_assert!(cpt_value_exact(&law, &spec).is_finite());
    }

    #[test]
    fn action_probabilities_sum_to_one(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(&mut rng);
        let policy = random_policy(&mdp, &mut rng);
        for s in 0..mdp.n_states() {
            let state = EnvState::Discrete(s);
            for t in 0..mdp.horizon() {
                let view = HistoryView { t, state: &state, partial_return: 0.0, past: &[] };
                let Ok(p) = policy.action_probs(&view) else { continue };
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn tanh_logits_keep_an_exploration_floor(seed in any::<u64>(), alpha in 0.1..5.0f64, n_actions in 2usize..6) {
        let mut rng = seeded(seed);
        let mut policy = PolicyParams::softmax_tanh(HistoryAbstraction::Stationary, 3, n_actions, alpha).unwrap();
        randomize(&mut policy, 50.0, &mut rng);
        let floor = (-2.0 * alpha).exp() / n_actions as f64;
        for s in 0..3 {
            let state = EnvState::Discrete(s);
            let view = HistoryView { t: 0, state: &state, partial_return: 0.0, past: &[] };
            let p = policy.action_probs(&view).unwrap();
            prop_assert!(p.iter().all(|&x| x >= floor * (1.0 - 1e-12)), "{p:?} below {floor}");
        }
    }

    #[test]
    fn tabular_score_matches_finite_differences(seed in any::<u64>(), n_actions in 2usize..5, a in 0usize..5) {
        let a = a % n_actions;
        let mut rng = seeded(seed);
        let mut policy = PolicyParams::softmax(HistoryAbstraction::Stationary, 2, n_actions).unwrap();
        randomize(&mut policy, 2.0, &mut rng);
        let feature = Feature::Row(1);
        let action = Action::Discrete(a);
        let score = policy.score_gradient(&feature, &action).unwrap();
        let h = 1e-6;
        let mut fd = vec![0.0; policy.n_params()];
        for (i, g) in fd.iter_mut().enumerate() {
            let mut plus = policy.clone();
            plus.params_mut()[i] += h;
            let mut minus = policy.clone();
            minus.params_mut()[i] -= h;
            *g = (plus.log_prob(&feature, &action).unwrap() - minus.log_prob(&feature, &action).unwrap()) / (2.0 * h);
        }
        let err: f64 = score.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = score.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * norm.max(1.0), "error {err} for norm {norm}");
    }
}
