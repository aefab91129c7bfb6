use crate::engine::EngineError;
use crate::maximal::MatchingSubroutineSpec;
use crate::model::PreferenceProfile;

use super::sim::Simulation;
use super::{
    check_failure_prob, rand_asm_iterations, Algorithm, AlmostRegularParams, AsmParams,
    OuterIterationRecord, PartialRun, ProtocolError, RunConfig, RunOutcome,
};

/// Default engine-round cap for distributed Gale-Shapley: `n^2 + n`
/// proposal rounds, each at most `3 + max(2, idle subroutine rounds)` long.
pub fn gs_default_round_cap(n: usize, mm: &MatchingSubroutineSpec, shrink: f64) -> u64 {
    let n = n as u64;
    let per_round = 3 + mm.idle_rounds(shrink).max(2);
    (n * n + n).saturating_mul(per_round)
}

/// Runs `algorithm` on `profile` in the round simulator.
pub fn run_algorithm(
    profile: &PreferenceProfile,
    algorithm: &Algorithm,
    config: &RunConfig,
) -> Result<RunOutcome, ProtocolError> {
    let n = profile.n();
    if let Some(mm) = &config.mm_override {
        mm.validate()?;
    }
    match *algorithm {
        Algorithm::GaleShapley => {
            let mm = config.mm_override.unwrap_or(MatchingSubroutineSpec::Deterministic);
            let cap = config
                .round_cap
                .unwrap_or_else(|| gs_default_round_cap(n, &mm, config.shrink));
            let mut sim = Simulation::new(profile, |d| d.max(1), mm, config, cap, false);
            let result = run_gs(&mut sim);
            finish(sim, result, *algorithm, None, Vec::new())
        }
        Algorithm::Asm { eps } => {
            let params = AsmParams::new(eps, n)?;
            let mm = config.mm_override.unwrap_or(MatchingSubroutineSpec::Deterministic);
            run_bucketed(profile, *algorithm, &params, mm, config)
        }
        Algorithm::RandAsm { eps, delta } => {
            let params = AsmParams::new(eps, n)?;
            check_failure_prob(delta)?;
            let mm = config
                .mm_override
                .unwrap_or(MatchingSubroutineSpec::RandomizedMaximal {
                    iterations: rand_asm_iterations(&params, n, delta, config.shrink),
                });
            run_bucketed(profile, *algorithm, &params, mm, config)
        }
        Algorithm::AlmostRegularAsm { eps, delta, alpha } => {
            let params = AlmostRegularParams::new(eps, delta, alpha)?;
            let (max, min) = profile.men_degree_range();
            if max as f64 > alpha * min as f64 {
                return Err(ProtocolError::NotAlmostRegular {
                    alpha,
                    max,
                    min,
                    ratio: max as f64 / min as f64,
                });
            }
            let mm = config.mm_override.unwrap_or_else(|| params.subroutine());
            let remove = matches!(mm, MatchingSubroutineSpec::AlmostMaximal { .. });
            let cap = config.round_cap.unwrap_or(u64::MAX);
            let k = params.k;
            let mut sim = Simulation::new(profile, |_| k, mm, config, cap, remove);
            let result = run_quantile_matches(&mut sim, k, params.iterations);
            finish(sim, result, *algorithm, Some(k), Vec::new())
        }
    }
}

fn run_bucketed(
    profile: &PreferenceProfile,
    algorithm: Algorithm,
    params: &AsmParams,
    mm: MatchingSubroutineSpec,
    config: &RunConfig,
) -> Result<RunOutcome, ProtocolError> {
    let k = params.k;
    let cap = config.round_cap.unwrap_or(u64::MAX);
    let mut sim = Simulation::new(profile, |_| k, mm, config, cap, false);
    let mut records = Vec::new();
    let result = (|| {
        for i in 0..params.outer_iterations {
            let threshold = 1usize << i;
            sim.net.local_step(|st, _| -> Result<(), ProtocolError> {
                if let super::Player::Man(m) = st {
                    m.participating = m.prefs.remaining_len() >= threshold;
                    if !m.participating {
                        m.active.clear();
                    }
                }
                Ok(())
            })?;
            let active: Vec<usize> = sim
                .men()
                .enumerate()
                .filter(|(_, m)| m.participating && !m.removed)
                .map(|(i, _)| i)
                .collect();
            run_quantile_matches(&mut sim, k, params.inner_iterations)?;
            let bad_men = active.iter().filter(|&&i| !sim.man(i).is_good()).count();
            let bound = params.delta * active.len() as f64;
            records.push(OuterIterationRecord {
                iteration: i,
                active_men: active.len(),
                bad_men,
                bound,
                pass: bad_men as f64 <= bound + 1e-9,
            });
        }
        Ok(())
    })();
    finish(sim, result, algorithm, Some(k), records)
}

/// `count` quantile matches; once one is idle, so are all later ones.
fn run_quantile_matches(sim: &mut Simulation, k: usize, count: u64) -> Result<(), ProtocolError> {
    for j in 0..count {
        if !sim.quantile_match(k)? {
            let rest = count - j - 1;
            sim.log.quantile_matches += rest;
            sim.idle_proposal_rounds(rest * k as u64)?;
            break;
        }
    }
    Ok(())
}

fn run_gs(sim: &mut Simulation) -> Result<(), ProtocolError> {
    loop {
        sim.net.local_step(|st, _| -> Result<(), ProtocolError> {
            if let super::Player::Man(m) = st {
                if m.partner.is_none() && m.active.is_empty() {
                    let best = m.prefs.best_nonempty();
                    m.active = m.prefs.bucket(best).collect();
                }
            }
            Ok(())
        })?;
        let proposing = sim.men().any(|m| !m.active.is_empty());
        sim.proposal_round()?;
        if !proposing {
            return Ok(());
        }
    }
}

fn finish(
    mut sim: Simulation,
    result: Result<(), ProtocolError>,
    algorithm: Algorithm,
    k: Option<usize>,
    outer_iterations: Vec<OuterIterationRecord>,
) -> Result<RunOutcome, ProtocolError> {
    match result {
        Ok(()) => {}
        Err(ProtocolError::Engine(EngineError::RoundCapExceeded { cap })) => {
            return Err(ProtocolError::RoundCapExceeded(Box::new(PartialRun {
                cap,
                matching: sim.partial_matching(),
                trace: sim.net.trace().clone(),
            })));
        }
        Err(e) => return Err(e),
    }
    let matching = sim.matching()?;
    let (men, women) = sim.snapshots();
    let removed_men = men.iter().filter(|m| m.removed).count();
    let message_log = sim.net.take_message_log();
    Ok(RunOutcome {
        algorithm,
        matching,
        trace: sim.net.trace().clone(),
        men,
        women,
        k,
        subroutine: sim.subroutine(),
        subroutine_calls: sim.mm_calls,
        subroutine_failures: sim.mm_failures,
        removed_men,
        invariants: sim.log.clone(),
        outer_iterations,
        message_log,
    })
}

/// Deterministic ASM with the deterministic maximal matching subroutine.
pub fn asm(profile: &PreferenceProfile, eps: f64) -> Result<RunOutcome, ProtocolError> {
    run_algorithm(profile, &Algorithm::Asm { eps }, &RunConfig::default())
}

pub fn rand_asm(
    profile: &PreferenceProfile,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<RunOutcome, ProtocolError> {
    run_algorithm(
        profile,
        &Algorithm::RandAsm { eps, delta },
        &RunConfig::with_seed(seed),
    )
}

pub fn almost_regular_asm(
    profile: &PreferenceProfile,
    eps: f64,
    delta: f64,
    alpha: f64,
    seed: u64,
) -> Result<RunOutcome, ProtocolError> {
    run_algorithm(
        profile,
        &Algorithm::AlmostRegularAsm { eps, delta, alpha },
        &RunConfig::with_seed(seed),
    )
}

pub fn gale_shapley_distributed(profile: &PreferenceProfile) -> Result<RunOutcome, ProtocolError> {
    run_algorithm(profile, &Algorithm::GaleShapley, &RunConfig::default())
}
