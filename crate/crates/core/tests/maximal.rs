use std::collections::BTreeSet;

use almost_stable::analysis::check_maximal;
use almost_stable::maximal::*;
use almost_stable::model::PlayerId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, p: f64, seed: u64) -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|m| (0..n).map(move |w| (m, w)))
        .filter(|_| rng.gen_bool(p))
        .collect();
    BipartiteGraph::new(n, n, edges)
}

#[test]
fn randomized_result_is_a_matching_of_the_graph() {
    for seed in 0..100 {
        let g = random_graph(12, 0.3, seed);
        let r = randomized_maximal_matching(&g, 3, seed);
        for (m, w) in r.matching.pairs() {
            assert!(g.contains(m, w));
        }
        let check = check_maximal(&g, &r.matching);
        let residual: BTreeSet<PlayerId> = r.residual.iter().copied().collect();
        assert_eq!(check.violators, residual, "seed {seed}");
        assert_eq!(r.is_maximal(), check.maximal);
        assert_eq!(r.trace.rounds, 3 * ROUNDS_PER_MATCHING_ROUND);
    }
}

#[test]
fn deterministic_is_always_maximal() {
    for seed in 0..100 {
        let g = random_graph(15, 0.25, seed);
        let r = deterministic_maximal_matching(&g);
        assert!(check_maximal(&g, &r.matching).maximal, "seed {seed}");
        assert!(r.is_maximal());
        // at least one pair matches per iteration
        assert!(r.iterations as usize <= r.matching.len());
    }
}

#[test]
fn star_always_matches_one_leaf_and_empties() {
    let star = BipartiteGraph::new(1, 3, [(0, 0), (0, 1), (0, 2)]);
    for seed in 0..200 {
        let (m, rest) = matching_round(&star, seed);
        assert_eq!(m.len(), 1);
        assert!(rest.is_empty());
    }
}

#[test]
fn single_edge_always_matches() {
    let g = BipartiteGraph::new(1, 1, [(0, 0)]);
    for seed in 0..50 {
        let (m, rest) = matching_round(&g, seed);
        assert!(m.contains(0, 0));
        assert!(rest.is_empty());
    }
}

#[test]
fn residual_graph_drops_matched_and_isolated_vertices() {
    for seed in 0..100 {
        let g = random_graph(10, 0.3, seed);
        let (m, rest) = matching_round(&g, seed);
        for (a, b) in rest.edges() {
            assert!(m.partner_of_man(a).is_none() && m.partner_of_woman(b).is_none());
        }
        // every unmatched edge survives
        for (a, b) in g.edges() {
            if m.partner_of_man(a).is_none() && m.partner_of_woman(b).is_none() {
                assert!(rest.contains(a, b));
            }
        }
    }
}

#[test]
fn almost_maximal_respects_eta_usually() {
    let (eta, delta) = (0.1, 0.1);
    let mut misses = 0;
    for seed in 0..100 {
        let g = random_graph(20, 0.2, seed);
        let r = almost_maximal_matching(&g, eta, delta, seed).unwrap();
        if !check_maximal(&g, &r.matching).is_almost_maximal(eta) {
            misses += 1;
        }
    }
    assert!(misses <= 25, "{misses}");
    assert!(almost_maximal_matching(&BipartiteGraph::default(), 0.0, 0.1, 0).is_err());
}
