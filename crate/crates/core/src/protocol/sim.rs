use crate::engine::{EngineError, Envelope, Message, MessageKind, Network, NetworkConfig};
use crate::maximal::{run_subroutine, MatchingSubroutineSpec};
use crate::model::{quantize, Matching, PlayerId, PreferenceProfile};

use super::state::{ManSnapshot, ManState, Player, WomanSnapshot, WomanState};
use super::{InvariantLog, ProtocolError, RunConfig};

pub const PHASE_PROPOSE: &str = "propose";
pub const PHASE_ACCEPT: &str = "accept";
pub const PHASE_MM: &str = "mm";
pub const PHASE_REJECT: &str = "reject";

/// Every phase label a proposal round uses. No other phase sends messages.
pub const PROPOSAL_ROUND_PHASES: [&str; 4] = [PHASE_PROPOSE, PHASE_ACCEPT, PHASE_MM, PHASE_REJECT];

#[derive(Clone, Copy)]
enum Violation {
    Monotonicity,
    QuantileMatch,
    GoodCount,
}

fn record(
    log: &mut InvariantLog,
    strict: bool,
    kind: Violation,
    detail: String,
) -> Result<(), ProtocolError> {
    match kind {
        Violation::Monotonicity => log.monotonicity_violations += 1,
        Violation::QuantileMatch => log.quantile_match_violations += 1,
        Violation::GoodCount => log.good_count_decreases += 1,
    }
    if log.first_violation.is_none() {
        log.first_violation = Some(detail.clone());
    }
    if strict {
        Err(ProtocolError::InvariantViolation(detail))
    } else {
        Ok(())
    }
}

fn unexpected(at: PlayerId, env: &Envelope, phase: &'static str) -> ProtocolError {
    EngineError::UnexpectedMessage {
        at,
        from: env.from,
        kind: env.message.kind,
        phase,
    }
    .into()
}

fn expect_silent(at: PlayerId, inbox: &[Envelope], phase: &'static str) -> Result<(), ProtocolError> {
    match inbox.first() {
        Some(env) => Err(unexpected(at, env, phase)),
        None => Ok(()),
    }
}

fn quantile(prefs: &crate::model::QuantizedPrefs, partner: usize, owner: PlayerId) -> Result<usize, ProtocolError> {
    prefs.quantile_of(partner).ok_or_else(|| {
        ProtocolError::InconsistentState(format!("{owner} has no rank for partner index {partner}"))
    })
}

/// One simulated run of the proposal machinery.
pub(crate) struct Simulation {
    pub(crate) net: Network<Player>,
    n: usize,
    mm: MatchingSubroutineSpec,
    shrink: f64,
    remove_violators: bool,
    strict: bool,
    pub(crate) log: InvariantLog,
    pub(crate) mm_calls: u64,
    pub(crate) mm_failures: u64,
}

impl Simulation {
    /// Each player quantizes its list into `k_of(deg)` quantiles.
    pub(crate) fn new(
        profile: &PreferenceProfile,
        k_of: impl Fn(usize) -> usize,
        mm: MatchingSubroutineSpec,
        config: &RunConfig,
        round_cap: u64,
        remove_violators: bool,
    ) -> Self {
        let n = profile.n();
        let net_config = NetworkConfig {
            seed: config.seed,
            round_cap,
            payload_factor: config.payload_factor,
            log_messages: config.log_messages,
        };
        let net = Network::new(n, n, profile.edges(), &net_config, |id, _| {
            let list = profile.prefs(id);
            let prefs = quantize(list, k_of(list.len()));
            if id.is_man() {
                Player::Man(ManState::new(prefs))
            } else {
                Player::Woman(WomanState::new(prefs))
            }
        });
        Simulation {
            net,
            n,
            mm,
            shrink: config.shrink,
            remove_violators,
            strict: config.strict_invariants.unwrap_or(!mm.is_randomized()),
            log: InvariantLog::default(),
            mm_calls: 0,
            mm_failures: 0,
        }
    }

    pub(crate) fn subroutine(&self) -> MatchingSubroutineSpec {
        self.mm
    }

    pub(crate) fn men(&self) -> impl Iterator<Item = &ManState> + '_ {
        self.net.states()[..self.n].iter().filter_map(Player::as_man)
    }

    pub(crate) fn women(&self) -> impl Iterator<Item = &WomanState> + '_ {
        self.net.states()[self.n..].iter().filter_map(Player::as_woman)
    }

    pub(crate) fn man(&self, index: usize) -> &ManState {
        self.net.states()[index]
            .as_man()
            .expect("men occupy the first n processors")
    }

    fn anyone_proposing(&self) -> bool {
        self.men().any(|m| !m.active.is_empty())
    }

    pub(crate) fn good_count(&self) -> usize {
        self.men().filter(|m| m.is_good()).count()
    }

    /// Fast-forwards `count` proposal rounds in which no man proposes.
    pub(crate) fn idle_proposal_rounds(&mut self, count: u64) -> Result<(), ProtocolError> {
        if count == 0 {
            return Ok(());
        }
        self.log.proposal_rounds += count;
        self.net.idle_rounds(PHASE_PROPOSE, count)?;
        self.net.idle_rounds(PHASE_ACCEPT, count)?;
        self.net
            .idle_rounds(PHASE_MM, count * self.mm.idle_rounds(self.shrink))?;
        self.net.idle_rounds(PHASE_REJECT, count)?;
        Ok(())
    }

    /// Propose, accept, match the accepted-proposal graph, reject.
    pub(crate) fn proposal_round(&mut self) -> Result<(), ProtocolError> {
        if !self.anyone_proposing() {
            return self.idle_proposal_rounds(1);
        }
        self.log.proposal_rounds += 1;
        let strict = self.strict;
        let remove_violators = self.remove_violators;
        let Simulation { net, log, .. } = self;

        // Step 1: men propose to everyone in A.
        net.run_round(PHASE_PROPOSE, |st, ctx| -> Result<(), ProtocolError> {
            expect_silent(ctx.id(), ctx.inbox(), PHASE_PROPOSE)?;
            if let Player::Man(m) = st {
                for &w in &m.active {
                    ctx.send(PlayerId::woman(w), Message::token(MessageKind::Propose))?;
                }
            }
            Ok(())
        })?;

        // Step 2: women accept every proposal from their best proposing quantile.
        net.run_round(PHASE_ACCEPT, |st, ctx| -> Result<(), ProtocolError> {
            let me = ctx.id();
            let inbox = ctx.inbox();
            let Player::Woman(w) = st else {
                return expect_silent(me, inbox, PHASE_ACCEPT);
            };
            w.accepted.clear();
            let mut best: Option<usize> = None;
            for env in inbox {
                if env.message.kind != MessageKind::Propose {
                    return Err(unexpected(me, env, PHASE_ACCEPT));
                }
                if !w.prefs.contains(env.from.index) {
                    return Err(ProtocolError::InconsistentState(format!(
                        "{} proposed to {me}, who had already removed him",
                        env.from
                    )));
                }
                let q = quantile(&w.prefs, env.from.index, me)?;
                best = Some(best.map_or(q, |b| b.min(q)));
            }
            if let Some(best) = best {
                if let Some(p) = w.partner {
                    let current = quantile(&w.prefs, p, me)?;
                    if best >= current {
                        record(
                            log,
                            strict,
                            Violation::Monotonicity,
                            format!("{me} accepted quantile {best} while matched in quantile {current}"),
                        )?;
                    }
                }
                for env in inbox {
                    let m = env.from.index;
                    if w.prefs.quantile_of(m) == Some(best) {
                        ctx.send(env.from, Message::token(MessageKind::Accept))?;
                        w.accepted.push(m);
                    }
                }
            }
            w.mm.reset(w.accepted.iter().map(|&m| PlayerId::man(m)));
            Ok(())
        })?;

        // Men learn their side of the accepted-proposal graph.
        net.absorb(|st, me, inbox| -> Result<(), ProtocolError> {
            let Player::Man(m) = st else {
                return expect_silent(me, inbox, PHASE_MM);
            };
            m.accepted_by.clear();
            for env in inbox {
                if env.message.kind != MessageKind::Accept {
                    return Err(unexpected(me, env, PHASE_MM));
                }
                if !m.active.contains(&env.from.index) {
                    return Err(ProtocolError::InconsistentState(format!(
                        "{me} received ACCEPT from {} without proposing",
                        env.from
                    )));
                }
                m.accepted_by.push(env.from.index);
            }
            m.mm.reset(m.accepted_by.iter().map(|&w| PlayerId::woman(w)));
            Ok(())
        })?;

        // Step 3: matching on the accepted-proposal graph.
        let outcome = run_subroutine(net, &self.mm, self.shrink, PHASE_MM)?;
        self.mm_calls += 1;
        if !outcome.residual.is_empty() {
            self.mm_failures += 1;
        }
        let Simulation { net, log, .. } = self;

        // Step 4: matched women reject everyone not strictly better than
        // their new partner; matched men settle.
        net.run_round(PHASE_REJECT, |st, ctx| -> Result<(), ProtocolError> {
            let me = ctx.id();
            expect_silent(me, ctx.inbox(), PHASE_REJECT)?;
            match st {
                Player::Woman(w) => {
                    if let Some(new) = w.mm.partner() {
                        let new = new.index;
                        let q0 = quantile(&w.prefs, new, me)?;
                        if let Some(old) = w.partner {
                            let q_old = quantile(&w.prefs, old, me)?;
                            if q0 >= q_old {
                                record(
                                    log,
                                    strict,
                                    Violation::Monotonicity,
                                    format!("{me} moved from quantile {q_old} to {q0}"),
                                )?;
                            }
                        }
                        let rejected: Vec<usize> = (q0..=w.prefs.k())
                            .flat_map(|i| w.prefs.bucket(i))
                            .filter(|&m| m != new)
                            .collect();
                        for m in rejected {
                            w.prefs.remove(m);
                            ctx.send(PlayerId::man(m), Message::token(MessageKind::Reject))?;
                        }
                        w.partner = Some(new);
                    }
                    w.accepted.clear();
                    w.mm.clear();
                }
                Player::Man(m) => {
                    if let Some(w0) = m.mm.partner() {
                        m.partner = Some(w0.index);
                        m.active.clear();
                    } else if remove_violators && m.mm.in_residual() {
                        m.removed = true;
                        m.active.clear();
                    }
                    m.accepted_by.clear();
                    m.mm.clear();
                }
            }
            Ok(())
        })?;

        // Step 5: rejected men forget the rejecting women.
        net.absorb(|st, me, inbox| -> Result<(), ProtocolError> {
            let Player::Man(m) = st else {
                return expect_silent(me, inbox, PHASE_REJECT);
            };
            for env in inbox {
                if env.message.kind != MessageKind::Reject {
                    return Err(unexpected(me, env, PHASE_REJECT));
                }
                let w = env.from.index;
                m.prefs.remove(w);
                m.active.retain(|&x| x != w);
                if m.partner == Some(w) {
                    m.partner = None;
                }
            }
            Ok(())
        })
    }

    /// Every unmatched participating man aims at his best nonempty quantile,
    /// then `k` proposal rounds run. Returns false when nobody had anything
    /// to propose, in which case the call changed no state.
    pub(crate) fn quantile_match(&mut self, k: usize) -> Result<bool, ProtocolError> {
        self.log.quantile_matches += 1;
        self.net.local_step(|st, _| -> Result<(), ProtocolError> {
            if let Player::Man(m) = st {
                if m.participating && !m.removed && m.partner.is_none() {
                    let best = m.prefs.best_nonempty();
                    m.active = m.prefs.bucket(best).collect();
                }
            }
            Ok(())
        })?;
        if !self.anyone_proposing() {
            self.idle_proposal_rounds(k as u64)?;
            return Ok(false);
        }
        let entering: Vec<(usize, Vec<usize>)> = self
            .men()
            .enumerate()
            .filter(|(_, m)| !m.active.is_empty())
            .map(|(i, m)| (i, m.active.clone()))
            .collect();
        let good_before = self.good_count();
        for done in 0..k {
            if !self.anyone_proposing() {
                self.idle_proposal_rounds((k - done) as u64)?;
                break;
            }
            self.proposal_round()?;
        }

        let strict = self.strict;
        let mut failures = Vec::new();
        for (i, entered) in &entering {
            let m = self.man(*i);
            if m.removed {
                continue;
            }
            let matched_inside = m.partner.is_some_and(|p| entered.contains(&p));
            let all_rejected = entered.iter().all(|&w| !m.prefs.contains(w));
            if !m.active.is_empty() || !(matched_inside || all_rejected) {
                failures.push(format!(
                    "{} left a quantile match with A = {:?}, partner {:?}",
                    PlayerId::man(*i),
                    m.active,
                    m.partner
                ));
            }
        }
        for detail in failures {
            record(&mut self.log, strict, Violation::QuantileMatch, detail)?;
        }
        let good_after = self.good_count();
        if good_after < good_before {
            record(
                &mut self.log,
                strict,
                Violation::GoodCount,
                format!("good men fell from {good_before} to {good_after}"),
            )?;
        }
        Ok(true)
    }

    /// Matching from the women's side; always a valid matching between rounds.
    pub(crate) fn partial_matching(&self) -> Matching {
        let mut matching = Matching::new();
        for (w, state) in self.women().enumerate() {
            if let Some(m) = state.partner {
                // women's partners are distinct; ignore if not
                let _ = matching.insert(m, w);
            }
        }
        matching
    }

    /// Final matching, checking both sides agree.
    pub(crate) fn matching(&self) -> Result<Matching, ProtocolError> {
        let matching = self.partial_matching();
        for (i, m) in self.men().enumerate() {
            if m.partner != matching.partner_of_man(i) {
                return Err(ProtocolError::InconsistentState(format!(
                    "{} believes his partner is {:?}, women say {:?}",
                    PlayerId::man(i),
                    m.partner,
                    matching.partner_of_man(i)
                )));
            }
        }
        Ok(matching)
    }

    pub(crate) fn snapshots(&self) -> (Vec<ManSnapshot>, Vec<WomanSnapshot>) {
        let men = self
            .men()
            .enumerate()
            .map(|(index, m)| ManSnapshot {
                index,
                partner: m.partner,
                remaining: m.prefs.remaining().collect(),
                removed: m.removed,
            })
            .collect();
        let women = self
            .women()
            .enumerate()
            .map(|(index, w)| WomanSnapshot {
                index,
                partner: w.partner,
                remaining: w.prefs.remaining().collect(),
            })
            .collect();
        (men, women)
    }
}
