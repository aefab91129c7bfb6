mod common;

use almost_stable::analysis::*;
use almost_stable::maximal::BipartiteGraph;
use almost_stable::model::{Matching, PreferenceProfile};
use almost_stable::protocol::ManSnapshot;

use common::*;

fn complete(men: Vec<Vec<usize>>, women: Vec<Vec<usize>>) -> PreferenceProfile {
    PreferenceProfile::new(men.len(), men, women).unwrap()
}

fn three_by_three_with_three_blockers() -> (PreferenceProfile, Matching) {
    let same = vec![vec![0, 1, 2]; 3];
    let p = complete(same.clone(), same);
    let m = Matching::from_pairs([(0, 2), (1, 1), (2, 0)]).unwrap();
    (p, m)
}

#[test]
fn hand_built_fixture_has_three_blocking_pairs() {
    let (p, m) = three_by_three_with_three_blockers();
    assert_eq!(blocking_pairs(&p, &m).unwrap(), vec![(0, 0), (0, 1), (1, 0)]);
    let report = verify_run(&p, &m, &VerifyParams::for_eps(1.0), None, &[]).unwrap();
    assert_eq!(report.blocking_pairs, 3);
    assert_eq!(report.matching_size, 3);
}

#[test]
fn matching_outside_the_graph_is_rejected() {
    let p = complete(vec![vec![0], vec![1]], vec![vec![0], vec![1]]);
    let m = Matching::from_pairs([(0, 1)]).unwrap();
    assert!(matches!(
        count_blocking_pairs(&p, &m),
        Err(AnalysisError::InvalidMatching(_))
    ));
}

#[test]
fn oracle_small_cases() {
    let p = complete(vec![vec![0]], vec![vec![0]]);
    assert_eq!(gale_shapley_oracle(&p), Matching::from_pairs([(0, 0)]).unwrap());
    let p = complete(vec![vec![0, 1]; 2], vec![vec![0, 1]; 2]);
    assert_eq!(
        gale_shapley_oracle(&p),
        Matching::from_pairs([(0, 0), (1, 1)]).unwrap()
    );
}

#[test]
fn counter_agrees_with_brute_force() {
    for seed in 0..300 {
        let n = 1 + (seed as usize % 9);
        let p = raw_profile(n, 0.6, seed);
        let m = random_matching(&p, seed ^ 0xabc);
        let pairs: Vec<_> = m.pairs().collect();
        let mut ours = blocking_pairs(&p, &m).unwrap();
        ours.sort_unstable();
        assert_eq!(
            ours,
            brute_force_blocking(&p, &pairs),
            "seed {seed}"
        );
    }
}

#[test]
fn zero_blocking_exactly_on_stable_matchings() {
    for seed in 0..40 {
        let n = 1 + (seed as usize % 4);
        let p = raw_profile(n, 0.7, seed);
        for pairs in all_matchings(&p) {
            let m = Matching::from_pairs(pairs.iter().copied()).unwrap();
            let stable = brute_force_blocking(&p, &pairs).is_empty();
            assert_eq!(count_blocking_pairs(&p, &m).unwrap() == 0, stable);
        }
    }
}

fn assert_man_optimal(p: &PreferenceProfile, stable: &[Vec<(usize, usize)>]) {
    let oracle = gale_shapley_oracle(p);
    assert_eq!(count_blocking_pairs(p, &oracle).unwrap(), 0);
    assert!(!stable.is_empty());
    for s in stable {
        let m = Matching::from_pairs(s.iter().copied()).unwrap();
        for man in 0..p.n() {
            assert!(
                man_position(p, man, oracle.partner_of_man(man))
                    <= man_position(p, man, m.partner_of_man(man))
            );
        }
    }
}

#[test]
fn oracle_is_man_optimal_on_complete_instances() {
    for n in 1..=8 {
        for seed in 0..3 {
            let p = random_profile(n, 1.0, 100 * n as u64 + seed);
            let stable: Vec<Vec<(usize, usize)>> = permutations(n)
                .into_iter()
                .map(|perm| perm.into_iter().enumerate().collect::<Vec<_>>())
                .filter(|pairs| brute_force_blocking(&p, pairs).is_empty())
                .collect();
            assert_man_optimal(&p, &stable);
        }
    }
}

#[test]
fn oracle_is_man_optimal_on_incomplete_instances() {
    for seed in 0..60 {
        let n = 1 + (seed as usize % 6);
        let p = raw_profile(n, 0.5, seed);
        let stable: Vec<_> = all_matchings(&p)
            .into_iter()
            .filter(|pairs| brute_force_blocking(&p, pairs).is_empty())
            .collect();
        assert_man_optimal(&p, &stable);
    }
}

#[test]
fn eps_blocking_partitions_blocking_pairs() {
    for seed in 0..50 {
        let p = raw_profile(8, 0.7, seed);
        let m = random_matching(&p, seed);
        for eps in [0.25, 0.5, 1.0] {
            let r = verify_run(&p, &m, &VerifyParams::for_eps(eps), None, &[]).unwrap();
            assert_eq!(
                r.blocking_pairs,
                r.eps_blocking_pairs + r.non_eps_blocking_blocking_pairs
            );
            assert_eq!(
                r.eps_blocking_pairs,
                r.eps_blocking_good_men + r.eps_blocking_bad_men
            );
            assert_eq!(r.good_men.len() + r.bad_men.len(), 8);
        }
    }
}

#[test]
fn exact_and_float_thresholds_agree_on_grid_values() {
    for seed in 0..50 {
        let p = raw_profile(10, 0.8, seed);
        let m = random_matching(&p, seed + 7);
        for e in p.edges() {
            for k in [2u64, 4, 8, 16, 32] {
                assert_eq!(
                    is_fraction_blocking(&p, &m, e, 2, k),
                    is_eps_blocking(&p, &m, e, 2.0 / k as f64),
                    "edge {e:?} k {k}"
                );
            }
        }
    }
}

#[test]
fn good_bad_classification() {
    let men = vec![
        ManSnapshot {
            index: 0,
            partner: Some(1),
            remaining: vec![1],
            removed: false,
        },
        ManSnapshot {
            index: 1,
            partner: None,
            remaining: vec![],
            removed: false,
        },
        ManSnapshot {
            index: 2,
            partner: None,
            remaining: vec![0],
            removed: false,
        },
    ];
    let gb = classify_good_bad(&men);
    assert_eq!(gb.good.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(gb.bad.into_iter().collect::<Vec<_>>(), vec![2]);
}

#[test]
fn perfect_matching_is_maximal() {
    let g = BipartiteGraph::new(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]);
    let m = Matching::from_pairs([(0, 1), (1, 0)]).unwrap();
    let r = check_maximal(&g, &m);
    assert!(r.maximal);
    assert!(r.violators.is_empty());
    assert!(r.is_almost_maximal(0.0));
}

#[test]
fn report_serializes_with_stable_names() {
    let (p, m) = three_by_three_with_three_blockers();
    let r = verify_run(&p, &m, &VerifyParams::for_eps(0.5), None, &[]).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in [
        "blocking_pairs",
        "eps_blocking_pairs",
        "non_eps_blocking_blocking_pairs",
        "good_men",
        "bad_men",
        "bounds",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["bounds"].get(BOUND_BLOCKING).is_some());
}
