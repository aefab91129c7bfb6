//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr,
//! bypassing output capture, and then asserts its criterion.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use almost_stable::analysis::*;
use almost_stable::maximal::{maximal_iterations, matching_round, randomized_maximal_matching, BipartiteGraph};
use almost_stable::model::{Matching, PreferenceProfile};
use almost_stable::protocol::*;
use almost_stable::workbench::{generate, Family, GeneratorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;

fn report(id: u32, pass: bool, what: &str, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id:>2} [{verdict}] {what}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

const INSTANCES: u64 = 200;
const SIZES: [usize; 3] = [16, 32, 64];
const EPSILONS: [f64; 3] = [1.0, 0.5, 0.25];

fn families() -> [Family; 3] {
    [
        Family::Complete,
        Family::RandomBipartite { p: 0.25 },
        Family::RandomBipartite { p: 0.5 },
    ]
}

#[derive(Default)]
struct SweepTotals {
    runs: u64,
    errors: Vec<String>,
    blocking_over: u64,
    good_men_hits: u64,
    non_eps_over: u64,
    bad_men_over: u64,
    invariant_violations: u64,
    quantile_matches: u64,
    worst_blocking_fraction: f64,
    seconds: f64,
}

/// Deterministic ASM over every family, size and eps; shared by criteria 1-5.
fn sweep() -> &'static SweepTotals {
    static SWEEP: OnceLock<SweepTotals> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let mut jobs = Vec::new();
        for family in families() {
            for n in SIZES {
                for eps in EPSILONS {
                    for i in 0..INSTANCES {
                        jobs.push((family, n, eps, 1_000_000 * n as u64 + i));
                    }
                }
            }
        }
        let results: Vec<Result<(VerificationReport, InvariantLog), String>> = jobs
            .par_iter()
            .map(|&(family, n, eps, seed)| {
                let p = generate(&GeneratorSpec::new(family, n, seed)).map_err(|e| e.to_string())?;
                let config = RunConfig {
                    strict_invariants: Some(true),
                    ..RunConfig::with_seed(seed)
                };
                let out = run_algorithm(&p, &Algorithm::Asm { eps }, &config)
                    .map_err(|e| format!("{family} n={n} eps={eps} seed={seed}: {e}"))?;
                let rep = verify_outcome(&p, &out, eps).map_err(|e| e.to_string())?;
                Ok((rep, out.invariants))
            })
            .collect();
        let mut t = SweepTotals::default();
        for r in results {
            t.runs += 1;
            match r {
                Err(e) => t.errors.push(e),
                Ok((rep, inv)) => {
                    let fail = |k: &str| rep.pass(k) != Some(true);
                    t.blocking_over += u64::from(fail(BOUND_BLOCKING));
                    t.good_men_hits += rep.eps_blocking_good_men as u64;
                    t.non_eps_over += u64::from(fail(BOUND_NON_EPS));
                    t.bad_men_over += u64::from(fail(BOUND_BAD_MEN));
                    t.invariant_violations += inv.total_violations();
                    t.quantile_matches += inv.quantile_matches;
                    let frac = rep.blocking_pairs as f64 / rep.edges.max(1) as f64;
                    t.worst_blocking_fraction = t.worst_blocking_fraction.max(frac);
                }
            }
        }
        t.seconds = start.elapsed().as_secs_f64();
        t
    })
}

#[test]
fn criterion_01_blocking_pairs_within_eps_edges() {
    let s = sweep();
    let pass = s.errors.is_empty() && s.blocking_over == 0;
    report(
        1,
        pass,
        "deterministic ASM has at most eps|E| blocking pairs",
        format!(
            "{} runs, {} over the bound, {} run errors, worst blocking/|E| = {:.4}, {:.1}s",
            s.runs,
            s.blocking_over,
            s.errors.len(),
            s.worst_blocking_fraction,
            s.seconds
        ),
    );
    assert!(pass, "{:?}", s.errors.first());
}

#[test]
fn criterion_02_good_men_in_no_two_over_k_blocking_pair() {
    let s = sweep();
    let pass = s.errors.is_empty() && s.good_men_hits == 0;
    report(
        2,
        pass,
        "no (2/k)-blocking pair touches a good man",
        format!("{} runs, {} such pairs", s.runs, s.good_men_hits),
    );
    assert!(pass);
}

#[test]
fn criterion_03_few_non_two_over_k_blocking_pairs() {
    let s = sweep();
    let pass = s.errors.is_empty() && s.non_eps_over == 0;
    report(
        3,
        pass,
        "blocking pairs that are not (2/k)-blocking number at most 4|E|/k",
        format!("{} runs, {} over the bound", s.runs, s.non_eps_over),
    );
    assert!(pass);
}

#[test]
fn criterion_04_bad_men_blocking_within_four_delta_edges() {
    let s = sweep();
    let pass = s.errors.is_empty() && s.bad_men_over == 0;
    report(
        4,
        pass,
        "(2/k)-blocking pairs at bad men number at most 4 delta |E|",
        format!("{} runs, {} over the bound", s.runs, s.bad_men_over),
    );
    assert!(pass);
}

#[test]
fn criterion_05_runtime_invariants_hold() {
    let s = sweep();
    let pass = s.errors.is_empty() && s.invariant_violations == 0;
    report(
        5,
        pass,
        "women's partners only improve and every quantile match resolves its proposals",
        format!(
            "{} runs, {} quantile matches checked, {} violations",
            s.runs, s.quantile_matches, s.invariant_violations
        ),
    );
    assert!(pass, "{:?}", s.errors.first());
}

#[test]
fn criterion_06_distributed_gale_shapley_equals_oracle() {
    let results: Vec<(bool, usize)> = (0..INSTANCES)
        .into_par_iter()
        .map(|i| {
            let n = 2 + (i as usize * 13) % 63;
            let p = match i % 3 {
                0 => random_profile(n, 1.0, i),
                1 => random_profile(n, 0.3, i),
                _ => raw_profile(n, 0.5, i),
            };
            let out = gale_shapley_distributed(&p).expect("gale-shapley run");
            let blocking = count_blocking_pairs(&p, &out.matching).unwrap();
            (out.matching == gale_shapley_oracle(&p), blocking)
        })
        .collect();
    let mismatches = results.iter().filter(|r| !r.0).count();
    let unstable = results.iter().filter(|r| r.1 > 0).count();
    let pass = mismatches == 0 && unstable == 0;
    report(
        6,
        pass,
        "distributed Gale-Shapley equals the sequential oracle",
        format!(
            "{} instances with n <= 64, {mismatches} mismatches, {unstable} with blocking pairs",
            results.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_blocking_counter_matches_brute_force() {
    let disagreements = (0..1000u64)
        .into_par_iter()
        .filter(|&i| {
            let n = 1 + (i as usize % 12);
            let p = raw_profile(n, 0.3 + 0.6 * ((i % 7) as f64 / 6.0), i);
            let m = random_matching(&p, i.wrapping_mul(31));
            let mut ours = blocking_pairs(&p, &m).unwrap();
            ours.sort_unstable();
            ours != brute_force_blocking(&p, &m.pairs().collect::<Vec<_>>())
        })
        .count();

    let mut instances = 0;
    let mut stable_seen = 0;
    let mut wrong = 0;
    for n in 1..=5 {
        for seed in 0..40 {
            instances += 1;
            let p = random_profile(n, 1.0, 7_000 + 100 * n as u64 + seed);
            for perm in permutations(n) {
                let pairs: Vec<(usize, usize)> = perm.into_iter().enumerate().collect();
                let m = Matching::from_pairs(pairs.iter().copied()).unwrap();
                let stable = brute_force_blocking(&p, &pairs).is_empty();
                stable_seen += usize::from(stable);
                if (count_blocking_pairs(&p, &m).unwrap() == 0) != stable {
                    wrong += 1;
                }
            }
        }
    }
    let pass = disagreements == 0 && wrong == 0 && stable_seen > 0;
    report(
        7,
        pass,
        "blocking-pair counter agrees with an independent brute force",
        format!(
            "1000 random pairs, {disagreements} disagreements; {instances} complete instances n <= 5, \
             {stable_seen} stable matchings, {wrong} misreported"
        ),
    );
    assert!(pass);
}

fn random_graph(rng: &mut ChaCha8Rng, min_vertices: usize) -> BipartiteGraph {
    loop {
        let side = rng.gen_range(40..80);
        let p = rng.gen_range(0.02..0.2);
        let edges: Vec<(usize, usize)> = (0..side)
            .flat_map(|m| (0..side).map(move |w| (m, w)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let g = BipartiteGraph::new(side, side, edges);
        if g.vertices().len() >= min_vertices {
            return g;
        }
    }
}

#[test]
fn criterion_08_matching_round_shrinks_the_graph() {
    let ratios: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let g = random_graph(&mut rng, 64);
            let (_, rest) = matching_round(&g, i);
            rest.vertices().len() as f64 / g.vertices().len() as f64
        })
        .collect();
    let s = summarize(&ratios);
    let pass = s.mean <= 0.97;
    report(
        8,
        pass,
        "one matching round leaves at most 0.97 of the vertices on average",
        format!(
            "1000 rounds on graphs with >= 64 vertices, mean |V1|/|V0| = {:.4} (min {:.4}, max {:.4})",
            s.mean, s.min, s.max
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_randomized_maximal_matching_fails_rarely() {
    let (n, eta) = (128usize, 0.05);
    let s = maximal_iterations(n, eta, 0.95);
    let failures = (0..500u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + i);
            let p = rng.gen_range(0.02..0.3);
            let edges: Vec<(usize, usize)> = (0..n / 2)
                .flat_map(|m| (0..n / 2).map(move |w| (m, w)))
                .filter(|_| rng.gen_bool(p))
                .collect();
            let g = BipartiteGraph::new(n / 2, n / 2, edges);
            let r = randomized_maximal_matching(&g, s, i);
            !check_maximal(&g, &r.matching).maximal
        })
        .count() as u64;
    let est = RateEstimate::new(failures, 500);
    let pass = !est.refutes(eta);
    report(
        9,
        pass,
        "s matching rounds give a maximal matching except with probability eta",
        format!(
            "n = {n}, eta = {eta}, s = {s}, {failures}/500 non-maximal, 99% CI [{:.4}, {:.4}]",
            est.lower, est.upper
        ),
    );
    assert!(pass);
}

fn violation_rate(
    n: usize,
    seeds: u64,
    eps: f64,
    run: impl Fn(&PreferenceProfile, u64) -> RunOutcome + Sync,
) -> (RateEstimate, u64) {
    let results: Vec<(bool, u64)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let p = generate(&GeneratorSpec::new(Family::Complete, n, seed)).unwrap();
            let out = run(&p, seed);
            let blocking = count_blocking_pairs(&p, &out.matching).unwrap();
            (blocking as f64 > eps * p.edge_count() as f64, out.trace.rounds)
        })
        .collect();
    let violations = results.iter().filter(|r| r.0).count() as u64;
    (RateEstimate::new(violations, seeds), results[0].1)
}

#[test]
fn criterion_10_rand_asm_is_almost_stable_with_high_probability() {
    let (eps, delta) = (0.5, 0.1);
    let (est, _) = violation_rate(64, 200, eps, |p, seed| rand_asm(p, eps, delta, seed).unwrap());
    let pass = est.lower <= delta;
    report(
        10,
        pass,
        "RandASM exceeds eps|E| blocking pairs with probability at most delta",
        format!(
            "complete n = 64, eps = {eps}, delta = {delta}: {}/{} violations, 99% CI [{:.4}, {:.4}]",
            est.events, est.trials, est.lower, est.upper
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_almost_regular_rounds_do_not_depend_on_n() {
    let (eps, delta) = (0.5, 0.1);
    let mut rounds = Vec::new();
    let mut details = Vec::new();
    let mut stats_ok = true;
    for n in [32, 64, 128, 256] {
        let (est, r) = violation_rate(n, 200, eps, |p, seed| {
            almost_regular_asm(p, eps, delta, 1.0, seed).unwrap()
        });
        stats_ok &= est.lower <= delta;
        rounds.push(r as f64);
        details.push(format!("n={n}: {r} rounds, {}/{} violations", est.events, est.trials));
    }
    let s = summarize(&rounds);
    let ratio = s.max / s.min;
    let pass = ratio <= 1.5 && stats_ok;
    report(
        11,
        pass,
        "AlmostRegularASM round count is independent of n and output is almost stable",
        format!("max/min rounds = {ratio:.3}; {}", details.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_12_rand_asm_rounds_grow_sublinearly() {
    let (eps, delta) = (0.5, 0.1);
    let sizes = [64usize, 128, 256, 512];
    let rounds: Vec<u64> = sizes
        .iter()
        .map(|&n| {
            let p = generate(&GeneratorSpec::new(Family::Complete, n, n as u64)).unwrap();
            rand_asm(&p, eps, delta, 1).unwrap().trace.rounds
        })
        .collect();
    let ratios: Vec<f64> = rounds
        .windows(2)
        .map(|w| w[1] as f64 / w[0] as f64)
        .collect();
    let pass = ratios.iter().all(|&r| r <= 1.5);
    report(
        12,
        pass,
        "RandASM rounds grow by at most 1.5x per doubling of n",
        format!(
            "rounds {:?} for n = {:?}; ratios {}",
            rounds,
            sizes,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(pass);
}
