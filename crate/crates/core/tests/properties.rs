//! Property tests for the structural invariants of the search space, the
//! reconfiguration process and the baseline statistics.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oa_reorder::digital_twin::{denormalize, normalize, sample_configs, FeatureBounds};
use oa_reorder::ga::{mutate, pmx};
use oa_reorder::harness::{empirical_cdf, percentile_rank};
use oa_reorder::link_model::{ChannelPlan, LinkOracle, LinkSpec};
use oa_reorder::reconfig::{
    fitness, intermediate_config, is_permutation, trajectory, ReconfigOrder, TransitionScenario,
};

fn order(n: usize) -> impl Strategy<Value = ReconfigOrder> {
    Just((1..=n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| ReconfigOrder::new(v).unwrap())
}

fn parents_and_cuts() -> impl Strategy<Value = (ReconfigOrder, ReconfigOrder, usize, usize)> {
    (2usize..=16).prop_flat_map(|n| {
        (order(n), order(n), 0..n).prop_flat_map(move |(a, b, c1)| (Just(a), Just(b), Just(c1), (c1 + 1)..=n))
    })
}

fn transition(seed: u64, monitored: BTreeSet<usize>) -> (LinkOracle, TransitionScenario) {
    let link = LinkSpec::default();
    let plan = ChannelPlan::full_load().with_loading(0..6, monitored.iter().copied());
    let oracle = LinkOracle::new(link.clone(), plan.clone()).unwrap();
    let cfgs = sample_configs(&link, 2, &mut ChaCha8Rng::seed_from_u64(seed));
    let t = TransitionScenario::new(cfgs[0].clone(), cfgs[1].clone(), monitored, plan).unwrap();
    (oracle, t)
}

fn monitored_set() -> impl Strategy<Value = BTreeSet<usize>> {
    proptest::collection::btree_set(0usize..6, 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pmx_children_are_permutations_keeping_their_segment((a, b, c1, c2) in parents_and_cuts()) {
        let (ca, cb) = pmx(&a, &b, c1, c2).unwrap();
        prop_assert!(is_permutation(ca.steps()));
        prop_assert!(is_permutation(cb.steps()));
        prop_assert_eq!(&ca.steps()[c1..c2], &a.steps()[c1..c2]);
        prop_assert_eq!(&cb.steps()[c1..c2], &b.steps()[c1..c2]);
    }

    #[test]
    fn pmx_of_identical_parents_is_identity((a, _b, c1, c2) in parents_and_cuts()) {
        let (x, y) = pmx(&a, &a, c1, c2).unwrap();
        prop_assert_eq!(&x, &a);
        prop_assert_eq!(&y, &a);
    }

    #[test]
    fn mutation_keeps_permutations(o in order(14), seed in any::<u64>(), p in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = o.clone();
        mutate(&mut m, p, &mut rng);
        prop_assert!(is_permutation(m.steps()));
        let moved = m.steps().iter().zip(o.steps()).filter(|(x, y)| x != y).count();
        prop_assert!(moved == 0 || moved == 2);
    }

    #[test]
    fn prefix_set_invariance(seed in any::<u64>(), o in order(14), k in 0usize..=14, shuffle_seed in any::<u64>()) {
        let (_, t) = transition(seed, [2, 3].into());
        let mut v = o.clone().into_inner();
        v[..k].shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let rearranged = ReconfigOrder::new(v).unwrap();
        prop_assert_eq!(intermediate_config(&t, &o, k).unwrap(), intermediate_config(&t, &rearranged, k).unwrap());
    }

    #[test]
    fn endpoints_are_order_independent(seed in any::<u64>(), a in order(14), b in order(14), monitored in monitored_set()) {
        let (oracle, t) = transition(seed, monitored);
        let ta = trajectory::<f64, _>(&oracle, &t, &a).unwrap();
        let tb = trajectory::<f64, _>(&oracle, &t, &b).unwrap();
        prop_assert_eq!(ta.states.len(), 15);
        prop_assert_eq!(&ta.states[0], &t.initial);
        prop_assert_eq!(&ta.states[14], &t.target);
        prop_assert_eq!(ta.scalar_per_state[0], tb.scalar_per_state[0]);
        prop_assert_eq!(ta.scalar_per_state[14], tb.scalar_per_state[14]);
    }

    #[test]
    fn scalar_is_monitored_minimum_and_fitness_decomposes(seed in any::<u64>(), o in order(14), monitored in monitored_set()) {
        let (oracle, t) = transition(seed, monitored.clone());
        let tr = trajectory::<f64, _>(&oracle, &t, &o).unwrap();
        for (q, &s) in tr.q_per_state.iter().zip(&tr.scalar_per_state) {
            let vals: Vec<f64> = monitored.iter().map(|&b| q.get(b).unwrap()).collect();
            prop_assert!(vals.iter().all(|&v| s <= v));
            prop_assert!(vals.contains(&s));
        }
        let f = fitness(&tr);
        prop_assert_eq!(f.value, f.mean_q + f.min_q);
        prop_assert!(f.min_q <= f.mean_q);
    }

    #[test]
    fn normalize_round_trips(seed in any::<u64>()) {
        let link = LinkSpec::default();
        let bounds = FeatureBounds::from_link(&link);
        let cfg = sample_configs(&link, 1, &mut ChaCha8Rng::seed_from_u64(seed)).pop().unwrap();
        let x = normalize::<f64>(&cfg, &bounds).unwrap();
        prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        let back = denormalize(&x, &bounds);
        let orig: Vec<f64> = cfg.gains_db().into_iter().chain(cfg.tilts_db()).collect();
        for (b, o) in back.iter().zip(&orig) {
            prop_assert!((b - o).abs() < 1e-12);
        }
    }

    #[test]
    fn percentile_and_cdf_are_well_formed(samples in proptest::collection::vec(-5.0f64..5.0, 1..200), v in -6.0f64..6.0) {
        let p = percentile_rank(v, &samples);
        prop_assert!((0.0..=1.0).contains(&p));
        let below = samples.iter().filter(|&&s| s < v).count();
        prop_assert_eq!(p, below as f64 / samples.len() as f64);
        let cdf = empirical_cdf(&samples);
        prop_assert!(cdf.windows(2).all(|w| w[0].value_db < w[1].value_db && w[0].cumulative < w[1].cumulative));
        prop_assert_eq!(cdf.last().unwrap().cumulative, 1.0);
    }
}
