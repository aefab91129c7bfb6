//! Distributed maximal and almost-maximal matching subroutines.
//!
//! All three flavors run as message-passing rounds on a [`Network`] whose
//! processor states embed an [`MmNode`]. Before a run each node's live
//! neighbor list is set to its neighbors in the subgraph being matched.
//!
//! * Randomized (`rand:s`): `s` iterations of a four-round matching round.
//!   Each in-play vertex points at a uniformly random live neighbor, keeps
//!   one uniformly random incoming pointer, picks one uniformly random edge
//!   of the resulting sparse graph, and mutually picked edges are matched.
//! * Almost maximal (`amm:eta,delta`): the same rounds, with the iteration
//!   count derived from `eta` and `delta`; leftover vertices are reported.
//! * Deterministic (`det`): every unmatched vertex points at its lowest-id
//!   live neighbor and mutual pointers match, until no live edges remain.
//!   Always maximal; at least one pair matches per two-round iteration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    EngineError, Envelope, Message, MessageKind, Network, NetworkConfig, RoundTrace,
};
use crate::model::{Matching, PlayerId};

/// Shrinkage constant `c` assumed for one matching round: the expected
/// residual after a round is at most `c` times the input vertex count.
pub const DEFAULT_SHRINK: f64 = 0.95;

/// Engine rounds per randomized matching round.
pub const ROUNDS_PER_MATCHING_ROUND: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubroutineSpecError {
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("eta must lie in (0, 1], got {0}")]
    Eta(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("cannot parse matching subroutine {0:?}; expected det, rand:S or amm:ETA,DELTA")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor", rename_all = "snake_case")]
pub enum MatchingSubroutineSpec {
    Deterministic,
    RandomizedMaximal { iterations: u32 },
    AlmostMaximal { eta: f64, delta: f64 },
}

impl MatchingSubroutineSpec {
    pub fn validate(&self) -> Result<(), SubroutineSpecError> {
        match *self {
            Self::Deterministic => Ok(()),
            Self::RandomizedMaximal { iterations: 0 } => {
                Err(SubroutineSpecError::ZeroIterations)
            }
            Self::RandomizedMaximal { .. } => Ok(()),
            Self::AlmostMaximal { eta, delta } => {
                if !(eta > 0.0 && eta <= 1.0) {
                    Err(SubroutineSpecError::Eta(eta))
                } else if !(delta > 0.0 && delta < 1.0) {
                    Err(SubroutineSpecError::Delta(delta))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Fixed iteration count for the randomized flavors.
    pub fn iterations(&self, shrink: f64) -> Option<u32> {
        match *self {
            Self::Deterministic => None,
            Self::RandomizedMaximal { iterations } => Some(iterations),
            Self::AlmostMaximal { eta, delta } => Some(almost_maximal_iterations(eta, delta, shrink)),
        }
    }

    /// Rounds consumed on an empty subgraph.
    pub fn idle_rounds(&self, shrink: f64) -> u64 {
        self.iterations(shrink)
            .map_or(0, |s| u64::from(s) * ROUNDS_PER_MATCHING_ROUND)
    }

    pub fn is_randomized(&self) -> bool {
        !matches!(self, Self::Deterministic)
    }
}

impl fmt::Display for MatchingSubroutineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic => f.write_str("det"),
            Self::RandomizedMaximal { iterations } => write!(f, "rand:{iterations}"),
            Self::AlmostMaximal { eta, delta } => write!(f, "amm:{eta},{delta}"),
        }
    }
}

impl FromStr for MatchingSubroutineSpec {
    type Err = SubroutineSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || SubroutineSpecError::Parse(s.to_string());
        let spec = match s.trim().split_once(':') {
            None if s.trim() == "det" => Self::Deterministic,
            Some(("rand", it)) => Self::RandomizedMaximal {
                iterations: it.trim().parse().map_err(|_| parse_err())?,
            },
            Some(("amm", rest)) => {
                let (eta, delta) = rest.split_once(',').ok_or_else(parse_err)?;
                Self::AlmostMaximal {
                    eta: eta.trim().parse().map_err(|_| parse_err())?,
                    delta: delta.trim().parse().map_err(|_| parse_err())?,
                }
            }
            _ => return Err(parse_err()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn iterations_for(ratio: f64, shrink: f64) -> u32 {
    ((ratio.ln() / (1.0 / shrink).ln()).ceil()).max(1.0) as u32
}

/// `ceil(log(n / eta) / log(1 / c))`: matching rounds after which an
/// `n`-vertex graph is fully matched with probability at least `1 - eta`.
pub fn maximal_iterations(n: usize, eta: f64, shrink: f64) -> u32 {
    iterations_for(n.max(1) as f64 / eta, shrink)
}

/// `ceil(log(1 / (delta * eta)) / log(1 / c))`. With `eta = 1` every matching
/// is `(1 - eta)`-maximal, so a single round suffices.
pub fn almost_maximal_iterations(eta: f64, delta: f64, shrink: f64) -> u32 {
    if eta >= 1.0 {
        1
    } else {
        iterations_for(1.0 / (delta * eta), shrink)
    }
}

/// Per-processor state of a matching subroutine.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MmNode {
    live: Vec<PlayerId>,
    partner: Option<PlayerId>,
    in_play: bool,
    out: Option<PlayerId>,
    kept: Option<PlayerId>,
    choice: Option<PlayerId>,
}

impl MmNode {
    /// Starts a new subroutine run on the given subgraph neighbors.
    pub fn reset(&mut self, neighbors: impl IntoIterator<Item = PlayerId>) {
        self.live.clear();
        self.live.extend(neighbors);
        self.live.sort_unstable();
        self.live.dedup();
        self.partner = None;
        self.in_play = !self.live.is_empty();
        self.out = None;
        self.kept = None;
        self.choice = None;
    }

    pub fn clear(&mut self) {
        self.reset(std::iter::empty());
    }

    /// Partner found by the last run, if any.
    pub fn partner(&self) -> Option<PlayerId> {
        self.partner
    }

    /// Still unmatched with at least one unmatched neighbor.
    pub fn in_residual(&self) -> bool {
        self.in_play
    }

    pub fn live_neighbors(&self) -> &[PlayerId] {
        &self.live
    }

    fn match_with(&mut self, partner: PlayerId) {
        self.partner = Some(partner);
        self.in_play = false;
    }
}

pub trait MmHost {
    fn mm(&self) -> &MmNode;
    fn mm_mut(&mut self) -> &mut MmNode;
}

impl MmHost for MmNode {
    fn mm(&self) -> &MmNode {
        self
    }

    fn mm_mut(&mut self) -> &mut MmNode {
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MmOutcome {
    pub iterations: u32,
    /// Vertices violating both maximality conditions at the end.
    pub residual: Vec<PlayerId>,
    pub rounds: u64,
}

fn unexpected(at: PlayerId, env: &Envelope, phase: &'static str) -> EngineError {
    EngineError::UnexpectedMessage {
        at,
        from: env.from,
        kind: env.message.kind,
        phase,
    }
}

fn senders_of(
    at: PlayerId,
    inbox: &[Envelope],
    kind: MessageKind,
    phase: &'static str,
) -> Result<Vec<PlayerId>, EngineError> {
    inbox
        .iter()
        .map(|env| {
            if env.message.kind == kind {
                Ok(env.from)
            } else {
                Err(unexpected(at, env, phase))
            }
        })
        .collect()
}

fn notify_matched(
    node: &MmNode,
    ctx: &mut crate::engine::ProcessorContext<'_>,
) -> Result<(), EngineError> {
    let partner = node.partner;
    for &u in node.live.iter().filter(|&&u| Some(u) != partner) {
        ctx.send(u, Message::token(MessageKind::MmMatched))?;
    }
    Ok(())
}

/// Drops neighbors that announced a match; a vertex left without live
/// neighbors leaves the residual graph.
fn absorb_matched<S: MmHost>(net: &mut Network<S>, phase: &'static str) -> Result<(), EngineError> {
    net.absorb(|st, id, inbox| {
        let node = st.mm_mut();
        for env in inbox {
            if env.message.kind != MessageKind::MmMatched {
                return Err(unexpected(id, env, phase));
            }
            if let Ok(pos) = node.live.binary_search(&env.from) {
                node.live.remove(pos);
            }
        }
        if node.in_play && node.live.is_empty() {
            node.in_play = false;
        }
        Ok(())
    })
}

/// One randomized matching round: pointer, keep, choose, resolve.
pub fn randomized_iteration<S: MmHost>(
    net: &mut Network<S>,
    phase: &'static str,
) -> Result<(), EngineError> {
    net.run_round(phase, |st, ctx| {
        let node = st.mm_mut();
        node.out = None;
        node.kept = None;
        node.choice = None;
        if let Some(env) = ctx.inbox().first() {
            return Err(unexpected(ctx.id(), env, phase));
        }
        if node.in_play {
            let pick = node.live[ctx.rng().gen_range(0..node.live.len())];
            node.out = Some(pick);
            ctx.send(pick, Message::token(MessageKind::MmPoint))?;
        }
        Ok(())
    })?;
    net.run_round(phase, |st, ctx| {
        let pointers = senders_of(ctx.id(), ctx.inbox(), MessageKind::MmPoint, phase)?;
        let node = st.mm_mut();
        if node.in_play && !pointers.is_empty() {
            let keep = pointers[ctx.rng().gen_range(0..pointers.len())];
            node.kept = Some(keep);
            ctx.send(keep, Message::token(MessageKind::MmKeep))?;
        }
        Ok(())
    })?;
    net.run_round(phase, |st, ctx| {
        let keepers = senders_of(ctx.id(), ctx.inbox(), MessageKind::MmKeep, phase)?;
        let node = st.mm_mut();
        if !node.in_play {
            return Ok(());
        }
        let mut sparse: Vec<PlayerId> = node.kept.into_iter().collect();
        if let Some(out) = node.out {
            if keepers.contains(&out) && !sparse.contains(&out) {
                sparse.push(out);
            }
        }
        if !sparse.is_empty() {
            let choice = sparse[ctx.rng().gen_range(0..sparse.len())];
            node.choice = Some(choice);
            ctx.send(choice, Message::token(MessageKind::MmChoose))?;
        }
        Ok(())
    })?;
    net.run_round(phase, |st, ctx| {
        let choosers = senders_of(ctx.id(), ctx.inbox(), MessageKind::MmChoose, phase)?;
        let node = st.mm_mut();
        if let Some(choice) = node.choice {
            if node.in_play && choosers.contains(&choice) {
                node.match_with(choice);
                notify_matched(node, ctx)?;
            }
        }
        Ok(())
    })?;
    absorb_matched(net, phase)
}

/// One iteration of the lowest-id mutual-pointer rule: point, resolve.
pub fn deterministic_iteration<S: MmHost>(
    net: &mut Network<S>,
    phase: &'static str,
) -> Result<(), EngineError> {
    net.run_round(phase, |st, ctx| {
        if let Some(env) = ctx.inbox().first() {
            return Err(unexpected(ctx.id(), env, phase));
        }
        let node = st.mm_mut();
        node.out = None;
        if node.in_play {
            let target = node.live[0];
            node.out = Some(target);
            ctx.send(target, Message::token(MessageKind::MmPoint))?;
        }
        Ok(())
    })?;
    net.run_round(phase, |st, ctx| {
        let pointers = senders_of(ctx.id(), ctx.inbox(), MessageKind::MmPoint, phase)?;
        let node = st.mm_mut();
        if let Some(out) = node.out {
            if node.in_play && pointers.contains(&out) {
                node.match_with(out);
                notify_matched(node, ctx)?;
            }
        }
        Ok(())
    })?;
    absorb_matched(net, phase)
}

fn residual_of<S: MmHost>(net: &Network<S>) -> Vec<PlayerId> {
    net.ids()
        .iter()
        .zip(net.states())
        .filter(|(_, st)| st.mm().in_play)
        .map(|(&id, _)| id)
        .collect()
}

fn any_in_play<S: MmHost>(net: &Network<S>) -> bool {
    net.states().iter().any(|st| st.mm().in_play)
}

/// Runs the subroutine on the subgraph encoded in the nodes' live lists.
///
/// Randomized flavors always occupy `4 * s` rounds; once the residual graph
/// is empty the remaining rounds are silent and fast-forwarded. The
/// deterministic flavor runs until no live edge remains.
pub fn run_subroutine<S: MmHost>(
    net: &mut Network<S>,
    spec: &MatchingSubroutineSpec,
    shrink: f64,
    phase: &'static str,
) -> Result<MmOutcome, EngineError> {
    let start = net.trace().rounds;
    let mut iterations = 0;
    match spec.iterations(shrink) {
        None => {
            while any_in_play(net) {
                deterministic_iteration(net, phase)?;
                iterations += 1;
            }
        }
        Some(s) => {
            for done in 0..s {
                if !any_in_play(net) {
                    net.idle_rounds(phase, u64::from(s - done) * ROUNDS_PER_MATCHING_ROUND)?;
                    break;
                }
                randomized_iteration(net, phase)?;
                iterations += 1;
            }
        }
    }
    Ok(MmOutcome {
        iterations,
        residual: residual_of(net),
        rounds: net.trace().rounds - start,
    })
}

/// A bipartite subgraph with men on the left and women on the right.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_men: usize,
    n_women: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl BipartiteGraph {
    pub fn new(n_men: usize, n_women: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges: BTreeSet<_> = edges.into_iter().collect();
        assert!(
            edges.iter().all(|&(m, w)| m < n_men && w < n_women),
            "edge endpoint out of range"
        );
        BipartiteGraph {
            n_men,
            n_women,
            edges,
        }
    }

    pub fn n_men(&self) -> usize {
        self.n_men
    }

    pub fn n_women(&self) -> usize {
        self.n_women
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, man: usize, woman: usize) -> bool {
        self.edges.contains(&(man, woman))
    }

    /// Vertices with at least one incident edge.
    pub fn vertices(&self) -> BTreeSet<PlayerId> {
        self.edges
            .iter()
            .flat_map(|&(m, w)| [PlayerId::man(m), PlayerId::woman(w)])
            .collect()
    }

    pub fn neighbors(&self, v: PlayerId) -> Vec<PlayerId> {
        self.edges
            .iter()
            .filter_map(|&(m, w)| match v {
                PlayerId { side: crate::model::Side::Man, index } if index == m => {
                    Some(PlayerId::woman(w))
                }
                PlayerId { side: crate::model::Side::Woman, index } if index == w => {
                    Some(PlayerId::man(m))
                }
                _ => None,
            })
            .collect()
    }

    /// Induced subgraph on `keep`, dropping vertices left isolated.
    pub fn induced(&self, keep: &BTreeSet<PlayerId>) -> BipartiteGraph {
        BipartiteGraph::new(
            self.n_men,
            self.n_women,
            self.edges().filter(|&(m, w)| {
                keep.contains(&PlayerId::man(m)) && keep.contains(&PlayerId::woman(w))
            }),
        )
    }
}

/// Result of running a subroutine on a standalone graph.
#[derive(Clone, Debug)]
pub struct MatchingResult {
    pub matching: Matching,
    /// Vertices neither matched nor fully covered, i.e. the residual graph.
    pub residual: Vec<PlayerId>,
    pub iterations: u32,
    pub trace: RoundTrace,
}

impl MatchingResult {
    pub fn is_maximal(&self) -> bool {
        self.residual.is_empty()
    }
}

fn graph_network(graph: &BipartiteGraph, seed: u64) -> Network<MmNode> {
    let config = NetworkConfig {
        seed,
        ..Default::default()
    };
    Network::new(graph.n_men, graph.n_women, graph.edges(), &config, |_, nbrs| {
        let mut node = MmNode::default();
        node.reset(nbrs.iter().copied());
        node
    })
}

fn collect_matching(net: &Network<MmNode>) -> Matching {
    let mut matching = Matching::new();
    for (&id, node) in net.ids().iter().zip(net.states()) {
        if let (true, Some(w)) = (id.is_man(), node.partner) {
            matching
                .insert(id.index, w.index)
                .expect("subroutine partners are mutual");
        }
    }
    matching
}

const STANDALONE_PHASE: &str = "mm";

fn run_standalone(
    graph: &BipartiteGraph,
    spec: &MatchingSubroutineSpec,
    seed: u64,
) -> MatchingResult {
    let mut net = graph_network(graph, seed);
    let outcome = run_subroutine(&mut net, spec, DEFAULT_SHRINK, STANDALONE_PHASE)
        .expect("subroutine on a fresh network cannot fail");
    MatchingResult {
        matching: collect_matching(&net),
        residual: outcome.residual,
        iterations: outcome.iterations,
        trace: net.trace().clone(),
    }
}

/// One matching round on `graph`: returns the matched edges `M1` and the
/// residual graph `G1` (matched and newly isolated vertices removed).
pub fn matching_round(graph: &BipartiteGraph, seed: u64) -> (Matching, BipartiteGraph) {
    let result = run_standalone(
        graph,
        &MatchingSubroutineSpec::RandomizedMaximal { iterations: 1 },
        seed,
    );
    let keep: BTreeSet<PlayerId> = result.residual.iter().copied().collect();
    (result.matching, graph.induced(&keep))
}

/// `s` matching rounds; maximal exactly when the residual is empty.
pub fn randomized_maximal_matching(graph: &BipartiteGraph, s: u32, seed: u64) -> MatchingResult {
    assert!(s >= 1, "iteration count must be at least 1");
    run_standalone(
        graph,
        &MatchingSubroutineSpec::RandomizedMaximal { iterations: s },
        seed,
    )
}

/// Matching rounds iterated per [`almost_maximal_iterations`].
pub fn almost_maximal_matching(
    graph: &BipartiteGraph,
    eta: f64,
    delta: f64,
    seed: u64,
) -> Result<MatchingResult, SubroutineSpecError> {
    let spec = MatchingSubroutineSpec::AlmostMaximal { eta, delta };
    spec.validate()?;
    Ok(run_standalone(graph, &spec, seed))
}

pub fn deterministic_maximal_matching(graph: &BipartiteGraph) -> MatchingResult {
    run_standalone(graph, &MatchingSubroutineSpec::Deterministic, 0)
}
