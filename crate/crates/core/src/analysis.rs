//! Verification of finished runs against exhaustive ground truth.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maximal::BipartiteGraph;
use crate::model::{Matching, ModelError, PlayerId, PreferenceProfile};
use crate::protocol::{ManSnapshot, OuterIterationRecord, RunOutcome};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_549;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid matching: {0}")]
    InvalidMatching(#[from] ModelError),
}

fn gaps(profile: &PreferenceProfile, matching: &Matching, m: usize, w: usize) -> Option<(i64, i64)> {
    let man = PlayerId::man(m);
    let woman = PlayerId::woman(w);
    let rw = profile.rank(man, woman)? as i64;
    let rm = profile.rank(woman, man)? as i64;
    let pm = profile.partner_rank(man, matching.partner_of_man(m)) as i64;
    let pw = profile.partner_rank(woman, matching.partner_of_woman(w)) as i64;
    Some((pm - rw, pw - rm))
}

fn is_blocking(profile: &PreferenceProfile, matching: &Matching, m: usize, w: usize) -> bool {
    gaps(profile, matching, m, w).is_some_and(|(gm, gw)| gm > 0 && gw > 0)
}

/// All blocking pairs, man-major.
pub fn blocking_pairs(
    profile: &PreferenceProfile,
    matching: &Matching,
) -> Result<Vec<(usize, usize)>, AnalysisError> {
    matching.validate(profile)?;
    Ok(profile
        .edges()
        .filter(|&(m, w)| is_blocking(profile, matching, m, w))
        .collect())
}

pub fn count_blocking_pairs(
    profile: &PreferenceProfile,
    matching: &Matching,
) -> Result<usize, AnalysisError> {
    blocking_pairs(profile, matching).map(|pairs| pairs.len())
}

/// Both players gain at least `eps` times their own degree in rank.
/// Unmatched players rank themselves at `deg + 1`.
pub fn is_eps_blocking(
    profile: &PreferenceProfile,
    matching: &Matching,
    edge: (usize, usize),
    eps: f64,
) -> bool {
    let (m, w) = edge;
    let Some((gm, gw)) = gaps(profile, matching, m, w) else {
        return false;
    };
    let dm = profile.degree(PlayerId::man(m)) as f64;
    let dw = profile.degree(PlayerId::woman(w)) as f64;
    gm as f64 >= eps * dm && gw as f64 >= eps * dw
}

/// Exact form of [`is_eps_blocking`] for a rational threshold `num / den`.
pub fn is_fraction_blocking(
    profile: &PreferenceProfile,
    matching: &Matching,
    edge: (usize, usize),
    num: u64,
    den: u64,
) -> bool {
    let (m, w) = edge;
    let Some((gm, gw)) = gaps(profile, matching, m, w) else {
        return false;
    };
    let dm = profile.degree(PlayerId::man(m)) as i128;
    let dw = profile.degree(PlayerId::woman(w)) as i128;
    let (num, den) = (i128::from(num), i128::from(den));
    i128::from(gm) * den >= num * dm && i128::from(gw) * den >= num * dw
}

/// Number of blocking pairs that are also `eps`-blocking.
pub fn count_eps_blocking(
    profile: &PreferenceProfile,
    matching: &Matching,
    eps: f64,
) -> Result<usize, AnalysisError> {
    Ok(blocking_pairs(profile, matching)?
        .into_iter()
        .filter(|&e| is_eps_blocking(profile, matching, e, eps))
        .count())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodBad {
    pub good: BTreeSet<usize>,
    pub bad: BTreeSet<usize>,
}

/// Good men are matched or have an empty remaining list.
pub fn classify_good_bad(men: &[ManSnapshot]) -> GoodBad {
    let mut out = GoodBad::default();
    for m in men {
        if m.is_good() {
            out.good.insert(m.index);
        } else {
            out.bad.insert(m.index);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalityReport {
    pub maximal: bool,
    /// Unmatched vertices with an unmatched neighbor.
    pub violators: BTreeSet<PlayerId>,
    /// Non-isolated vertices of the graph.
    pub vertices: usize,
    pub violator_fraction: f64,
}

impl MaximalityReport {
    /// At most an `eta` fraction of vertices violate maximality.
    pub fn is_almost_maximal(&self, eta: f64) -> bool {
        self.violators.len() as f64 <= eta * self.vertices as f64
    }
}

pub fn check_maximal(graph: &BipartiteGraph, matching: &Matching) -> MaximalityReport {
    let matched = |v: PlayerId| matching.partner(v).is_some();
    let vertices = graph.vertices();
    let violators: BTreeSet<PlayerId> = vertices
        .iter()
        .copied()
        .filter(|&v| !matched(v) && graph.neighbors(v).into_iter().any(|u| !matched(u)))
        .collect();
    let violator_fraction = if vertices.is_empty() {
        0.0
    } else {
        violators.len() as f64 / vertices.len() as f64
    };
    MaximalityReport {
        maximal: violators.is_empty(),
        violators,
        vertices: vertices.len(),
        violator_fraction,
    }
}

/// Sequential man-proposing deferred acceptance; the man-optimal stable matching.
pub fn gale_shapley_oracle(profile: &PreferenceProfile) -> Matching {
    let n = profile.n();
    let mut next = vec![0usize; n];
    let mut holds: Vec<Option<usize>> = vec![None; n];
    let mut free: VecDeque<usize> = (0..n).collect();
    while let Some(m) = free.pop_front() {
        let list = &profile.men_prefs()[m];
        let Some(&w) = list.get(next[m]) else {
            continue;
        };
        next[m] += 1;
        let rank = |x: usize| profile.rank(PlayerId::woman(w), PlayerId::man(x));
        match holds[w] {
            None => holds[w] = Some(m),
            Some(cur) if rank(m) < rank(cur) => {
                holds[w] = Some(m);
                free.push_back(cur);
            }
            Some(_) => free.push_back(m),
        }
    }
    Matching::from_pairs(
        holds
            .iter()
            .enumerate()
            .filter_map(|(w, m)| m.map(|m| (m, w))),
    )
    .expect("deferred acceptance yields a matching")
}

/// Thresholds the verifier checks a matching against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub eps: f64,
    pub k: usize,
    pub delta: f64,
}

impl VerifyParams {
    /// `k = ceil(8 / eps)`, `delta = eps / 8`.
    pub fn for_eps(eps: f64) -> Self {
        VerifyParams {
            eps,
            k: (8.0 / eps - 1e-9).ceil().max(1.0) as usize,
            delta: eps / 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub observed: f64,
    pub pass: bool,
}

pub const BOUND_BLOCKING: &str = "blocking_within_eps";
pub const BOUND_GOOD_MEN: &str = "good_men_not_eps_blocking";
pub const BOUND_NON_EPS: &str = "non_eps_blocking_within_4e_over_k";
pub const BOUND_BAD_MEN: &str = "bad_men_eps_blocking_within_4_delta_e";
pub const BOUND_OUTER: &str = "bad_fraction_per_outer_iteration";
pub const BOUND_REMAINING: &str = "bad_men_blocking_inside_remaining_list";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub edges: usize,
    pub matching_size: usize,
    pub blocking_pairs: usize,
    /// The `2 / k` threshold.
    pub eps_threshold: f64,
    /// Blocking pairs that are `2 / k`-blocking.
    pub eps_blocking_pairs: usize,
    pub non_eps_blocking_blocking_pairs: usize,
    pub eps_blocking_good_men: usize,
    pub eps_blocking_bad_men: usize,
    pub good_men: BTreeSet<usize>,
    pub bad_men: BTreeSet<usize>,
    pub bounds: BTreeMap<String, BoundCheck>,
}

impl VerificationReport {
    pub fn pass(&self, claim: &str) -> Option<bool> {
        self.bounds.get(claim).map(|b| b.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.bounds.values().all(|b| b.pass)
    }
}

/// Checks a finished matching. Without final states, matched men count as
/// good and everyone else as bad, and the remaining-list check is skipped.
pub fn verify_run(
    profile: &PreferenceProfile,
    matching: &Matching,
    params: &VerifyParams,
    men: Option<&[ManSnapshot]>,
    outer: &[OuterIterationRecord],
) -> Result<VerificationReport, AnalysisError> {
    let blocking = blocking_pairs(profile, matching)?;
    let n = profile.n();
    let edges = profile.edge_count();
    let k = params.k as u64;

    let good_bad = match men {
        Some(men) => classify_good_bad(men),
        None => {
            let mut gb = GoodBad::default();
            for m in 0..n {
                if matching.partner_of_man(m).is_some() {
                    gb.good.insert(m);
                } else {
                    gb.bad.insert(m);
                }
            }
            gb
        }
    };

    let mut eps_blocking = 0usize;
    let mut at_good = 0usize;
    let mut at_bad = 0usize;
    let mut per_bad_man: BTreeMap<usize, usize> = BTreeMap::new();
    let mut outside_remaining = 0usize;
    for &(m, w) in &blocking {
        if !is_fraction_blocking(profile, matching, (m, w), 2, k) {
            continue;
        }
        eps_blocking += 1;
        if good_bad.good.contains(&m) {
            at_good += 1;
        } else {
            at_bad += 1;
            *per_bad_man.entry(m).or_default() += 1;
            if let Some(men) = men {
                if !men[m].remaining.contains(&w) {
                    outside_remaining += 1;
                }
            }
        }
    }
    let non_eps = blocking.len() - eps_blocking;

    let mut bounds = BTreeMap::new();
    let e = edges as f64;
    let bound_blocking = params.eps * e;
    bounds.insert(
        BOUND_BLOCKING.to_string(),
        BoundCheck {
            bound: bound_blocking,
            observed: blocking.len() as f64,
            pass: blocking.len() as f64 <= bound_blocking + 1e-9,
        },
    );
    bounds.insert(
        BOUND_GOOD_MEN.to_string(),
        BoundCheck {
            bound: 0.0,
            observed: at_good as f64,
            pass: at_good == 0,
        },
    );
    bounds.insert(
        BOUND_NON_EPS.to_string(),
        BoundCheck {
            bound: 4.0 * e / k as f64,
            observed: non_eps as f64,
            pass: non_eps as u64 * k <= 4 * edges as u64,
        },
    );
    let bound_bad = 4.0 * params.delta * e;
    bounds.insert(
        BOUND_BAD_MEN.to_string(),
        BoundCheck {
            bound: bound_bad,
            observed: at_bad as f64,
            pass: at_bad as f64 <= bound_bad + 1e-9,
        },
    );
    if !outer.is_empty() {
        let worst = outer
            .iter()
            .map(|r| {
                if r.active_men == 0 {
                    0.0
                } else {
                    r.bad_men as f64 / r.active_men as f64
                }
            })
            .fold(0.0, f64::max);
        bounds.insert(
            BOUND_OUTER.to_string(),
            BoundCheck {
                bound: params.delta,
                observed: worst,
                pass: outer.iter().all(|r| r.pass),
            },
        );
    }
    if let Some(men) = men {
        let cap: usize = per_bad_man.keys().map(|&m| men[m].remaining.len()).sum();
        let within = per_bad_man
            .iter()
            .all(|(&m, &count)| count <= men[m].remaining.len());
        bounds.insert(
            BOUND_REMAINING.to_string(),
            BoundCheck {
                bound: cap as f64,
                observed: at_bad as f64,
                pass: within && outside_remaining == 0,
            },
        );
    }

    Ok(VerificationReport {
        edges,
        matching_size: matching.len(),
        blocking_pairs: blocking.len(),
        eps_threshold: 2.0 / k as f64,
        eps_blocking_pairs: eps_blocking,
        non_eps_blocking_blocking_pairs: non_eps,
        eps_blocking_good_men: at_good,
        eps_blocking_bad_men: at_bad,
        good_men: good_bad.good,
        bad_men: good_bad.bad,
        bounds,
    })
}

/// Verifies a run outcome. `eps` is required for Gale-Shapley, which has none.
pub fn verify_outcome(
    profile: &PreferenceProfile,
    outcome: &RunOutcome,
    eps: f64,
) -> Result<VerificationReport, AnalysisError> {
    let eps = outcome.algorithm.eps().unwrap_or(eps);
    let params = VerifyParams::for_eps(eps);
    verify_run(
        profile,
        &outcome.matching,
        &params,
        Some(&outcome.men),
        &outcome.outer_iterations,
    )
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Observed rate of some event across seeded runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub events: u64,
    pub trials: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RateEstimate {
    /// 99% Wilson interval.
    pub fn new(events: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(events, trials, Z_99);
        RateEstimate {
            events,
            trials,
            rate: if trials == 0 {
                0.0
            } else {
                events as f64 / trials as f64
            },
            lower,
            upper,
        }
    }

    /// A claimed rate is refuted only when the whole interval lies above it.
    pub fn refutes(&self, claimed: f64) -> bool {
        self.lower > claimed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            count: 0,
            mean: 0.0,
            min: 0.0,
            max: 0.0,
        };
    }
    Summary {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
