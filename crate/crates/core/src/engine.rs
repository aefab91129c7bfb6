//! Synchronous message-passing network in the CONGEST style.
//!
//! Each round has three stages: every processor receives what its neighbors
//! sent during the previous round, computes locally, then stages messages
//! for its neighbors. Staged messages are delivered atomically when the round
//! ends. Processors are stepped in global id order, but a step only sees its
//! own state and inbox, so the order cannot influence the outcome.
//!
//! Every processor owns a ChaCha stream keyed by `(seed, player id)`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PlayerId, Side};

/// Bits used to encode a message kind.
pub const TAG_BITS: u32 = 3;

/// Default constant `c` in the per-message budget `c * ceil(log2 n)`.
pub const DEFAULT_PAYLOAD_FACTOR: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Propose,
    Accept,
    Reject,
    MmPoint,
    MmKeep,
    MmChoose,
    MmMatched,
    Control,
}

/// A message: a constant-size kind token plus at most one small integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub arg: Option<u64>,
}

impl Message {
    pub const fn token(kind: MessageKind) -> Self {
        Message { kind, arg: None }
    }

    pub const fn with_arg(kind: MessageKind, arg: u64) -> Self {
        Message {
            kind,
            arg: Some(arg),
        }
    }

    pub fn payload_bits(&self) -> u32 {
        TAG_BITS + self.arg.map_or(0, |a| (u64::BITS - a.leading_zeros()).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: PlayerId,
    pub message: Message,
}

/// `ceil(log2 n)`, with `ceil_log2(1) == 0`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Per-message bit budget for a network with `n` players per side.
pub fn payload_budget(factor: u32, n: usize) -> u32 {
    factor * ceil_log2(n).max(1)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("{from} -> {to}: payload of {bits} bits exceeds the {budget}-bit budget")]
    OversizedPayload {
        from: PlayerId,
        to: PlayerId,
        bits: u32,
        budget: u32,
    },
    #[error("{from} tried to send to non-neighbor {to}")]
    NonNeighborSend { from: PlayerId, to: PlayerId },
    #[error("round cap of {cap} rounds exceeded")]
    RoundCapExceeded { cap: u64 },
    #[error("{at} received unexpected {kind:?} from {from} during {phase}")]
    UnexpectedMessage {
        at: PlayerId,
        from: PlayerId,
        kind: MessageKind,
        phase: &'static str,
    },
    #[error("idle rounds requested while messages are still in flight")]
    PendingMessages,
}

/// Round and message accounting for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub rounds: u64,
    pub messages_sent: u64,
    pub max_payload_bits: u32,
    pub phase_breakdown: BTreeMap<String, u64>,
    pub phase_messages: BTreeMap<String, u64>,
}

impl RoundTrace {
    fn add_rounds(&mut self, phase: &str, count: u64) {
        self.rounds += count;
        *self.phase_breakdown.entry(phase.to_string()).or_default() += count;
    }
}

/// One line of the optional message log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: u64,
    pub from: PlayerId,
    pub to: PlayerId,
    pub kind: MessageKind,
    pub payload_bits: u32,
}

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub seed: u64,
    /// Maximum number of rounds; exceeding it aborts the run.
    pub round_cap: u64,
    pub payload_factor: u32,
    pub log_messages: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            seed: 0,
            round_cap: u64::MAX,
            payload_factor: DEFAULT_PAYLOAD_FACTOR,
            log_messages: false,
        }
    }
}

/// What a processor can see and do during one round.
pub struct ProcessorContext<'a> {
    id: PlayerId,
    neighbors: &'a [PlayerId],
    inbox: &'a [Envelope],
    outbox: &'a mut Vec<(PlayerId, Message)>,
    rng: &'a mut ChaCha8Rng,
    budget: u32,
}

impl<'a> ProcessorContext<'a> {
    pub fn id(&self) -> PlayerId {
        self.id
    }

    /// Neighbors in the communication graph, in id order.
    pub fn neighbors(&self) -> &'a [PlayerId] {
        self.neighbors
    }

    /// Messages delivered at the end of the previous round, ordered by sender.
    pub fn inbox(&self) -> &'a [Envelope] {
        self.inbox
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// Stages `message` for delivery to `to` at the end of this round.
    pub fn send(&mut self, to: PlayerId, message: Message) -> Result<(), EngineError> {
        if self.neighbors.binary_search(&to).is_err() {
            return Err(EngineError::NonNeighborSend { from: self.id, to });
        }
        let bits = message.payload_bits();
        if bits > self.budget {
            return Err(EngineError::OversizedPayload {
                from: self.id,
                to,
                bits,
                budget: self.budget,
            });
        }
        self.outbox.push((to, message));
        Ok(())
    }
}

/// A synchronous network of processors with per-processor state `S`.
///
/// Processor `i` is man `i` for `i < n_men`, otherwise woman `i - n_men`.
pub struct Network<S> {
    n_men: usize,
    ids: Vec<PlayerId>,
    adjacency: Vec<Vec<PlayerId>>,
    states: Vec<S>,
    inboxes: Vec<Vec<Envelope>>,
    rngs: Vec<ChaCha8Rng>,
    trace: RoundTrace,
    budget: u32,
    round_cap: u64,
    log: Option<Vec<MessageRecord>>,
}

fn stream_id(id: PlayerId) -> u64 {
    let side = match id.side {
        Side::Man => 0,
        Side::Woman => 1,
    };
    (side << 63) | id.index as u64
}

/// Seeded generator for a single processor's stream.
pub fn processor_rng(seed: u64, id: PlayerId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(id));
    rng
}

impl<S> Network<S> {
    /// Builds a network over the bipartite graph given by `edges`
    /// (`(man, woman)` pairs). `init` creates each processor's state from its
    /// id and sorted neighbor list.
    pub fn new(
        n_men: usize,
        n_women: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        config: &NetworkConfig,
        mut init: impl FnMut(PlayerId, &[PlayerId]) -> S,
    ) -> Self {
        let ids: Vec<PlayerId> = (0..n_men)
            .map(PlayerId::man)
            .chain((0..n_women).map(PlayerId::woman))
            .collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (m, w) in edges {
            adjacency[m].push(PlayerId::woman(w));
            adjacency[n_men + w].push(PlayerId::man(m));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let states = ids
            .iter()
            .zip(&adjacency)
            .map(|(&id, nbrs)| init(id, nbrs))
            .collect();
        let rngs = ids.iter().map(|&id| processor_rng(config.seed, id)).collect();
        Network {
            n_men,
            inboxes: vec![Vec::new(); ids.len()],
            ids,
            adjacency,
            states,
            rngs,
            trace: RoundTrace::default(),
            budget: payload_budget(config.payload_factor, n_men.max(n_women)),
            round_cap: config.round_cap,
            log: config.log_messages.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: PlayerId) -> usize {
        match id.side {
            Side::Man => id.index,
            Side::Woman => self.n_men + id.index,
        }
    }

    pub fn ids(&self) -> &[PlayerId] {
        &self.ids
    }

    pub fn neighbors(&self, id: PlayerId) -> &[PlayerId] {
        &self.adjacency[self.index_of(id)]
    }

    pub fn state(&self, id: PlayerId) -> &S {
        &self.states[self.index_of(id)]
    }

    /// Read-only view of all processor states, in id order.
    pub fn states(&self) -> &[S] {
        &self.states
    }

    /// Mutable access for simulator-side setup between runs; protocol logic
    /// goes through [`Network::run_round`] and [`Network::absorb`].
    pub fn states_mut(&mut self) -> &mut [S] {
        &mut self.states
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    pub fn trace(&self) -> &RoundTrace {
        &self.trace
    }

    pub fn budget_bits(&self) -> u32 {
        self.budget
    }

    pub fn round_cap(&self) -> u64 {
        self.round_cap
    }

    pub fn has_pending_messages(&self) -> bool {
        self.inboxes.iter().any(|inbox| !inbox.is_empty())
    }

    pub fn take_message_log(&mut self) -> Option<Vec<MessageRecord>> {
        self.log.take()
    }

    /// Executes one synchronous round labelled `phase`.
    ///
    /// Every processor steps once against last round's inbox; all staged
    /// messages are then delivered together. Inbox contents not consumed
    /// by the step are dropped.
    pub fn run_round<E, F>(&mut self, phase: &'static str, mut step: F) -> Result<(), E>
    where
        E: From<EngineError>,
        F: FnMut(&mut S, &mut ProcessorContext<'_>) -> Result<(), E>,
    {
        if self.trace.rounds >= self.round_cap {
            return Err(EngineError::RoundCapExceeded {
                cap: self.round_cap,
            }
            .into());
        }
        let round = self.trace.rounds + 1;
        let mut next: Vec<Vec<Envelope>> = vec![Vec::new(); self.ids.len()];
        let mut outbox = Vec::new();
        let mut sent = 0u64;
        for i in 0..self.ids.len() {
            let inbox = std::mem::take(&mut self.inboxes[i]);
            let id = self.ids[i];
            let mut ctx = ProcessorContext {
                id,
                neighbors: &self.adjacency[i],
                inbox: &inbox,
                outbox: &mut outbox,
                rng: &mut self.rngs[i],
                budget: self.budget,
            };
            step(&mut self.states[i], &mut ctx)?;
            for (to, message) in outbox.drain(..) {
                let bits = message.payload_bits();
                self.trace.max_payload_bits = self.trace.max_payload_bits.max(bits);
                if let Some(log) = &mut self.log {
                    log.push(MessageRecord {
                        round,
                        from: id,
                        to,
                        kind: message.kind,
                        payload_bits: bits,
                    });
                }
                let j = match to.side {
                    Side::Man => to.index,
                    Side::Woman => self.n_men + to.index,
                };
                next[j].push(Envelope { from: id, message });
                sent += 1;
            }
        }
        self.inboxes = next;
        self.trace.add_rounds(phase, 1);
        self.trace.messages_sent += sent;
        *self.trace.phase_messages.entry(phase.to_string()).or_default() += sent;
        Ok(())
    }

    /// Receive-and-compute stage without a send stage.
    ///
    /// This is the opening half of the next round; it is split out so a
    /// protocol can settle local state between phases. It does not advance
    /// the round counter and processors cannot send.
    pub fn absorb<E, F>(&mut self, mut step: F) -> Result<(), E>
    where
        F: FnMut(&mut S, PlayerId, &[Envelope]) -> Result<(), E>,
    {
        for i in 0..self.ids.len() {
            let inbox = std::mem::take(&mut self.inboxes[i]);
            step(&mut self.states[i], self.ids[i], &inbox)?;
        }
        Ok(())
    }

    /// Local computation between rounds with nothing in flight.
    pub fn local_step<E, F>(&mut self, mut step: F) -> Result<(), E>
    where
        E: From<EngineError>,
        F: FnMut(&mut S, PlayerId) -> Result<(), E>,
    {
        if self.has_pending_messages() {
            return Err(EngineError::PendingMessages.into());
        }
        for (state, &id) in self.states.iter_mut().zip(&self.ids) {
            step(state, id)?;
        }
        Ok(())
    }

    /// Advances the clock by `count` rounds in which no processor sends and
    /// no state changes. Equivalent to `count` calls of `run_round` with a
    /// no-op step.
    pub fn idle_rounds(&mut self, phase: &'static str, count: u64) -> Result<(), EngineError> {
        if count == 0 {
            return Ok(());
        }
        if self.has_pending_messages() {
            return Err(EngineError::PendingMessages);
        }
        let room = self.round_cap.saturating_sub(self.trace.rounds);
        if count > room {
            self.trace.add_rounds(phase, room);
            return Err(EngineError::RoundCapExceeded {
                cap: self.round_cap,
            });
        }
        self.trace.add_rounds(phase, count);
        Ok(())
    }
}
