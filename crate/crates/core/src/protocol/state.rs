use serde::{Deserialize, Serialize};

use crate::maximal::{MmHost, MmNode};
use crate::model::QuantizedPrefs;

#[derive(Clone, Debug)]
pub struct ManState {
    pub prefs: QuantizedPrefs,
    pub partner: Option<usize>,
    /// Active potential mates `A`, best first.
    pub active: Vec<usize>,
    /// Women who accepted this man's proposals in the current proposal round.
    pub accepted_by: Vec<usize>,
    /// Takes part in the current outer iteration.
    pub participating: bool,
    /// Left unmatched by an almost-maximal matching and out of play.
    pub removed: bool,
    pub(crate) mm: MmNode,
}

impl ManState {
    pub fn new(prefs: QuantizedPrefs) -> Self {
        ManState {
            prefs,
            partner: None,
            active: Vec::new(),
            accepted_by: Vec::new(),
            participating: true,
            removed: false,
            mm: MmNode::default(),
        }
    }

    /// Matched, or rejected by every acceptable partner.
    pub fn is_good(&self) -> bool {
        self.partner.is_some() || self.prefs.is_exhausted()
    }
}

#[derive(Clone, Debug)]
pub struct WomanState {
    pub prefs: QuantizedPrefs,
    pub partner: Option<usize>,
    /// Proposers accepted in the current proposal round.
    pub accepted: Vec<usize>,
    pub(crate) mm: MmNode,
}

impl WomanState {
    pub fn new(prefs: QuantizedPrefs) -> Self {
        WomanState {
            prefs,
            partner: None,
            accepted: Vec::new(),
            mm: MmNode::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Player {
    Man(ManState),
    Woman(WomanState),
}

impl Player {
    pub fn as_man(&self) -> Option<&ManState> {
        match self {
            Player::Man(m) => Some(m),
            Player::Woman(_) => None,
        }
    }

    pub fn as_woman(&self) -> Option<&WomanState> {
        match self {
            Player::Woman(w) => Some(w),
            Player::Man(_) => None,
        }
    }
}

impl MmHost for Player {
    fn mm(&self) -> &MmNode {
        match self {
            Player::Man(m) => &m.mm,
            Player::Woman(w) => &w.mm,
        }
    }

    fn mm_mut(&mut self) -> &mut MmNode {
        match self {
            Player::Man(m) => &mut m.mm,
            Player::Woman(w) => &mut w.mm,
        }
    }
}

/// Final state of a man, as seen by the verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManSnapshot {
    pub index: usize,
    pub partner: Option<usize>,
    /// Remaining list `Q`, best first.
    pub remaining: Vec<usize>,
    pub removed: bool,
}

impl ManSnapshot {
    pub fn is_good(&self) -> bool {
        self.partner.is_some() || self.remaining.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WomanSnapshot {
    pub index: usize,
    pub partner: Option<usize>,
    pub remaining: Vec<usize>,
}
