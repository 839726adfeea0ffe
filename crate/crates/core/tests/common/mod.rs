//! Random instances shared by the integration tests.
#![allow(dead_code)]

use cptrl_core::cpt::{CptSpec, UtilitySpec, WeightSpec};
use cptrl_core::env::{Environment, FiniteMdp, FiniteMdpBuilder};
use cptrl_core::policy::{randomize, HistoryAbstraction, HistoryIndex, PolicyParams};
use cptrl_core::rng::SimRng;
use rand::Rng;

/// Random MDP whose reward atoms take both signs.
pub fn random_mdp(rng: &mut SimRng) -> FiniteMdp {
    let ns = rng.random_range(2..=3);
    let na = rng.random_range(2..=3);
    let horizon = rng.random_range(2..=3);
    let mut b = FiniteMdpBuilder::new("random", ns, na, horizon).start(0);
    for s in 0..ns {
        for a in 0..na {
            let mut weights: Vec<f64> = (0..ns).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let fix = 1.0 - weights.iter().sum::<f64>();
            weights[0] += fix;
            for (next, w) in weights.into_iter().enumerate() {
                let q = rng.random_range(0.2..0.8);
                let lo = rng.random_range(-2.0..-0.1);
                let hi = rng.random_range(0.1..2.0);
                b.add_branch(s, a, next, w, vec![(lo, q), (hi, 1.0 - q)]);
            }
        }
    }
    b.build().expect("random MDP is valid")
}

pub fn random_smooth_spec(rng: &mut SimRng) -> CptSpec {
    let utility = match rng.random_range(0..3) {
        0 => UtilitySpec::identity(),
        1 => UtilitySpec::kahneman_tversky(rng.random_range(1.0..3.0), rng.random_range(0.5..1.0)).unwrap(),
        _ => UtilitySpec::exponential_risk(rng.random_range(0.2..1.0)).unwrap(),
    };
    let weight = |rng: &mut SimRng| {
        let eta = rng.random_range(0.5..0.95);
        if rng.random::<bool>() {
            WeightSpec::KahnemanTversky { eta }
        } else {
            WeightSpec::Prelec { eta }
        }
    };
    let (wp, wm) = (weight(rng), weight(rng));
    CptSpec::new(utility, wp, wm).unwrap()
}

pub fn random_policy(mdp: &FiniteMdp, rng: &mut SimRng) -> PolicyParams {
    let abstraction = match rng.random_range(0..4) {
        0 => HistoryAbstraction::Stationary,
        1 => HistoryAbstraction::Markov { horizon: mdp.horizon() },
        2 => HistoryAbstraction::sum_augmented(mdp.horizon(), vec![-0.5, 0.0, 0.5]).unwrap(),
        _ => HistoryAbstraction::FullHistory {
            index: HistoryIndex::build(mdp).unwrap(),
        },
    };
    let mut p = if rng.random::<bool>() {
        PolicyParams::softmax(abstraction, mdp.n_states(), mdp.n_actions()).unwrap()
    } else {
        PolicyParams::softmax_tanh(abstraction, mdp.n_states(), mdp.n_actions(), 1.5).unwrap()
    };
    randomize(&mut p, 1.5, rng);
    p
}

