//! Instances, preferences, quantized preferences and matchings.
//!
//! Ranks are 1-based everywhere: rank 1 is a player's most favored partner.
//! An unmatched player ranks "nobody" at `deg + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("instance must have n >= 1")]
    EmptyInstance,
    #[error("expected {expected} {side} preference lists, found {found}")]
    ListCount {
        side: Side,
        expected: usize,
        found: usize,
    },
    #[error("{player} lists partner index {index}, which is out of range for n = {n}")]
    IndexOutOfRange {
        player: PlayerId,
        index: usize,
        n: usize,
    },
    #[error("{player} lists partner index {index} more than once")]
    DuplicateEntry { player: PlayerId, index: usize },
    #[error("asymmetric pair: {lister} lists {listed} but not the other way around")]
    Asymmetric { lister: PlayerId, listed: PlayerId },
    #[error("{0} appears in more than one matched pair")]
    PlayerAlreadyMatched(PlayerId),
    #[error("pair ({man}, {woman}) is not an edge of the communication graph")]
    NotAnEdge { man: PlayerId, woman: PlayerId },
    #[error("cannot parse player id {0:?}")]
    BadPlayerId(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Man,
    Woman,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Man => Side::Woman,
            Side::Woman => Side::Man,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Man => f.write_str("man"),
            Side::Woman => f.write_str("woman"),
        }
    }
}

/// A processor in the simulated network. Men sort before women, and within a
/// side by index, which gives the global id order used by tie-breaking rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlayerId {
    pub side: Side,
    pub index: usize,
}

impl PlayerId {
    pub const fn man(index: usize) -> Self {
        PlayerId {
            side: Side::Man,
            index,
        }
    }

    pub const fn woman(index: usize) -> Self {
        PlayerId {
            side: Side::Woman,
            index,
        }
    }

    pub fn is_man(&self) -> bool {
        self.side == Side::Man
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Side::Man => write!(f, "m{}", self.index),
            Side::Woman => write!(f, "w{}", self.index),
        }
    }
}

impl FromStr for PlayerId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadPlayerId(s.to_string());
        let (side, rest) = match s.split_at_checked(1).ok_or_else(bad)? {
            ("m", rest) => (Side::Man, rest),
            ("w", rest) => (Side::Woman, rest),
            _ => return Err(bad()),
        };
        let index = rest.parse().map_err(|_| bad())?;
        Ok(PlayerId { side, index })
    }
}

impl Serialize for PlayerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlayerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A complete stable-marriage instance with symmetric, possibly incomplete
/// preference lists. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceProfile {
    n: usize,
    men: Vec<Vec<usize>>,
    women: Vec<Vec<usize>>,
    // rank tables, n * n, 0 = not acceptable
    men_rank: Vec<u32>,
    women_rank: Vec<u32>,
}

impl PreferenceProfile {
    /// Builds a profile, validating list ranges, duplicates and symmetry.
    pub fn new(
        n: usize,
        men: Vec<Vec<usize>>,
        women: Vec<Vec<usize>>,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::EmptyInstance);
        }
        for (side, lists) in [(Side::Man, &men), (Side::Woman, &women)] {
            if lists.len() != n {
                return Err(ModelError::ListCount {
                    side,
                    expected: n,
                    found: lists.len(),
                });
            }
        }
        let men_rank = rank_table(Side::Man, n, &men)?;
        let women_rank = rank_table(Side::Woman, n, &women)?;
        for (m, list) in men.iter().enumerate() {
            for &w in list {
                if women_rank[w * n + m] == 0 {
                    return Err(ModelError::Asymmetric {
                        lister: PlayerId::man(m),
                        listed: PlayerId::woman(w),
                    });
                }
            }
        }
        for (w, list) in women.iter().enumerate() {
            for &m in list {
                if men_rank[m * n + w] == 0 {
                    return Err(ModelError::Asymmetric {
                        lister: PlayerId::woman(w),
                        listed: PlayerId::man(m),
                    });
                }
            }
        }
        Ok(PreferenceProfile {
            n,
            men,
            women,
            men_rank,
            women_rank,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn men_prefs(&self) -> &[Vec<usize>] {
        &self.men
    }

    pub fn women_prefs(&self) -> &[Vec<usize>] {
        &self.women
    }

    /// Preference list of `v`, most favored first.
    pub fn prefs(&self, v: PlayerId) -> &[usize] {
        match v.side {
            Side::Man => &self.men[v.index],
            Side::Woman => &self.women[v.index],
        }
    }

    pub fn degree(&self, v: PlayerId) -> usize {
        self.prefs(v).len()
    }

    /// Number of mutually acceptable pairs.
    pub fn edge_count(&self) -> usize {
        self.men.iter().map(Vec::len).sum()
    }

    /// All edges `(man, woman)` in man-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.men
            .iter()
            .enumerate()
            .flat_map(|(m, list)| list.iter().map(move |&w| (m, w)))
    }

    pub fn is_edge(&self, man: usize, woman: usize) -> bool {
        man < self.n && woman < self.n && self.men_rank[man * self.n + woman] != 0
    }

    /// 1-based position of `u` in `v`'s list, or `None` when `u` is not
    /// acceptable to `v` (including same-side queries).
    pub fn rank(&self, v: PlayerId, u: PlayerId) -> Option<usize> {
        if v.side == u.side || v.index >= self.n || u.index >= self.n {
            return None;
        }
        let table = match v.side {
            Side::Man => &self.men_rank,
            Side::Woman => &self.women_rank,
        };
        match table[v.index * self.n + u.index] {
            0 => None,
            r => Some(r as usize),
        }
    }

    /// Rank of `v`'s partner, with the unmatched convention `deg(v) + 1`.
    pub fn partner_rank(&self, v: PlayerId, partner: Option<usize>) -> usize {
        match partner {
            Some(p) => {
                let u = PlayerId {
                    side: v.side.opposite(),
                    index: p,
                };
                self.rank(v, u)
                    .expect("partner must be an acceptable player")
            }
            None => self.degree(v) + 1,
        }
    }

    /// Men's maximum and minimum degree.
    pub fn men_degree_range(&self) -> (usize, usize) {
        let max = self.men.iter().map(Vec::len).max().unwrap_or(0);
        let min = self.men.iter().map(Vec::len).min().unwrap_or(0);
        (max, min)
    }
}

fn rank_table(side: Side, n: usize, lists: &[Vec<usize>]) -> Result<Vec<u32>, ModelError> {
    let mut table = vec![0u32; n * n];
    for (v, list) in lists.iter().enumerate() {
        let player = PlayerId { side, index: v };
        for (pos, &u) in list.iter().enumerate() {
            if u >= n {
                return Err(ModelError::IndexOutOfRange {
                    player,
                    index: u,
                    n,
                });
            }
            let slot = &mut table[v * n + u];
            if *slot != 0 {
                return Err(ModelError::DuplicateEntry { player, index: u });
            }
            *slot = pos as u32 + 1;
        }
    }
    Ok(table)
}

/// Quantile of the partner at 1-based rank position `rank` in a list of
/// length `deg`: `ceil(rank * k / deg)`.
pub fn quantile_of_rank(rank: usize, deg: usize, k: usize) -> usize {
    debug_assert!(rank >= 1 && rank <= deg);
    (rank * k).div_ceil(deg)
}

/// A player's preferences split into `k` contiguous quantiles, with a
/// removal-only "remaining" subset `Q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedPrefs {
    k: usize,
    order: Vec<usize>,
    // 1-based quantile per rank position
    quantile: Vec<usize>,
    present: Vec<bool>,
    // half-open rank-position ranges per quantile (index 0 = Q_1)
    bounds: Vec<(usize, usize)>,
    bucket_len: Vec<usize>,
    remaining: usize,
    // partner index -> rank position + 1, 0 when absent
    lookup: Vec<u32>,
}

/// Splits an ordered partner list into `k` quantiles.
pub fn quantize(prefs: &[usize], k: usize) -> QuantizedPrefs {
    assert!(k >= 1, "quantile count must be at least 1");
    let deg = prefs.len();
    let quantile: Vec<usize> = (1..=deg).map(|r| quantile_of_rank(r, deg, k)).collect();
    let mut bounds = vec![(0, 0); k];
    let mut start = 0;
    for (i, bound) in bounds.iter_mut().enumerate() {
        let mut end = start;
        while end < deg && quantile[end] == i + 1 {
            end += 1;
        }
        *bound = (start, end);
        start = end;
    }
    let bucket_len = bounds.iter().map(|(s, e)| e - s).collect();
    let mut lookup = vec![0u32; prefs.iter().max().map_or(0, |&m| m + 1)];
    for (pos, &u) in prefs.iter().enumerate() {
        lookup[u] = pos as u32 + 1;
    }
    QuantizedPrefs {
        k,
        order: prefs.to_vec(),
        quantile,
        present: vec![true; deg],
        bounds,
        bucket_len,
        remaining: deg,
        lookup,
    }
}

impl QuantizedPrefs {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of the original list.
    pub fn degree(&self) -> usize {
        self.order.len()
    }

    fn position(&self, partner: usize) -> Option<usize> {
        match self.lookup.get(partner) {
            Some(&p) if p != 0 => Some(p as usize - 1),
            _ => None,
        }
    }

    /// Original 1-based rank of `partner`, whether or not it was removed.
    pub fn rank(&self, partner: usize) -> Option<usize> {
        self.position(partner).map(|p| p + 1)
    }

    /// Quantile index `q(partner)` in `1..=k`. Removal does not change it.
    pub fn quantile_of(&self, partner: usize) -> Option<usize> {
        self.position(partner).map(|p| self.quantile[p])
    }

    /// Whether `partner` is still in `Q`.
    pub fn contains(&self, partner: usize) -> bool {
        self.position(partner).is_some_and(|p| self.present[p])
    }

    /// Removes `partner` from `Q` and its quantile. Returns false if it was
    /// not present.
    pub fn remove(&mut self, partner: usize) -> bool {
        let Some(p) = self.position(partner) else {
            return false;
        };
        if !self.present[p] {
            return false;
        }
        self.present[p] = false;
        self.bucket_len[self.quantile[p] - 1] -= 1;
        self.remaining -= 1;
        true
    }

    /// `|Q|`.
    pub fn remaining_len(&self) -> usize {
        self.remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining == 0
    }

    /// Current size of quantile `i` (1-based).
    pub fn bucket_len(&self, i: usize) -> usize {
        self.bucket_len[i - 1]
    }

    /// Size of quantile `i` before any removal.
    pub fn initial_bucket_len(&self, i: usize) -> usize {
        let (s, e) = self.bounds[i - 1];
        e - s
    }

    /// Remaining members of quantile `i` (1-based), best first.
    pub fn bucket(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (s, e) = self.bounds[i - 1];
        (s..e).filter(|&p| self.present[p]).map(|p| self.order[p])
    }

    /// Remaining members of `Q`, best first.
    pub fn remaining(&self) -> impl Iterator<Item = usize> + '_ {
        self.order
            .iter()
            .zip(&self.present)
            .filter(|(_, &present)| present)
            .map(|(&u, _)| u)
    }

    /// `min { i | Q_i nonempty } ∪ { k }`.
    pub fn best_nonempty(&self) -> usize {
        (1..=self.k)
            .find(|&i| self.bucket_len[i - 1] > 0)
            .unwrap_or(self.k)
    }
}

/// A set of man–woman pairs with no player repeated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    by_man: BTreeMap<usize, usize>,
    by_woman: BTreeMap<usize, usize>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Result<Self, ModelError> {
        let mut matching = Matching::new();
        for (m, w) in pairs {
            matching.insert(m, w)?;
        }
        Ok(matching)
    }

    pub fn insert(&mut self, man: usize, woman: usize) -> Result<(), ModelError> {
        if self.by_man.contains_key(&man) {
            return Err(ModelError::PlayerAlreadyMatched(PlayerId::man(man)));
        }
        if self.by_woman.contains_key(&woman) {
            return Err(ModelError::PlayerAlreadyMatched(PlayerId::woman(woman)));
        }
        self.by_man.insert(man, woman);
        self.by_woman.insert(woman, man);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_man.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_man.is_empty()
    }

    pub fn partner_of_man(&self, man: usize) -> Option<usize> {
        self.by_man.get(&man).copied()
    }

    pub fn partner_of_woman(&self, woman: usize) -> Option<usize> {
        self.by_woman.get(&woman).copied()
    }

    pub fn partner(&self, v: PlayerId) -> Option<usize> {
        match v.side {
            Side::Man => self.partner_of_man(v.index),
            Side::Woman => self.partner_of_woman(v.index),
        }
    }

    pub fn contains(&self, man: usize, woman: usize) -> bool {
        self.by_man.get(&man) == Some(&woman)
    }

    /// Pairs `(man, woman)` ordered by man.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.by_man.iter().map(|(&m, &w)| (m, w))
    }

    /// Checks every pair is an edge of `profile`'s communication graph.
    pub fn validate(&self, profile: &PreferenceProfile) -> Result<(), ModelError> {
        match self.pairs().find(|&(m, w)| !profile.is_edge(m, w)) {
            Some((m, w)) => Err(ModelError::NotAnEdge {
                man: PlayerId::man(m),
                woman: PlayerId::woman(w),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bucket_sizes(q: &QuantizedPrefs) -> Vec<usize> {
        (1..=q.k()).map(|i| q.bucket_len(i)).collect()
    }

    #[test]
    fn quantize_exact_division() {
        let q = quantize(&[0, 1, 2, 3, 4, 5, 6, 7], 4);
        assert_eq!(bucket_sizes(&q), vec![2, 2, 2, 2]);
        assert_eq!(q.bucket(1).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn quantize_uneven() {
        let list = [4, 3, 2, 1, 0];
        let q = quantize(&list, 4);
        let qs: Vec<_> = list.iter().map(|&u| q.quantile_of(u).unwrap()).collect();
        assert_eq!(qs, vec![1, 2, 3, 4, 4]);
        assert_eq!(bucket_sizes(&q), vec![1, 1, 1, 2]);
    }

    #[test]
    fn quantize_fewer_partners_than_quantiles() {
        let q = quantize(&[10, 20, 30], 8);
        assert_eq!(q.quantile_of(10), Some(3));
        assert_eq!(q.quantile_of(20), Some(6));
        assert_eq!(q.quantile_of(30), Some(8));
        assert_eq!(bucket_sizes(&q), vec![0, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(q.best_nonempty(), 3);
    }

    #[test]
    fn quantize_empty_list() {
        let q = quantize(&[], 3);
        assert_eq!(bucket_sizes(&q), vec![0, 0, 0]);
        assert_eq!(q.best_nonempty(), 3);
        assert!(q.is_exhausted());
    }

    #[test]
    fn removal_shrinks_buckets() {
        let mut q = quantize(&[5, 6, 7, 8], 2);
        assert!(q.remove(6));
        assert!(!q.remove(6));
        assert!(!q.remove(99));
        assert_eq!(q.remaining_len(), 3);
        assert_eq!(q.bucket(1).collect::<Vec<_>>(), vec![5]);
        assert!(q.remove(5));
        assert_eq!(q.best_nonempty(), 2);
        assert_eq!(q.quantile_of(5), Some(1));
        assert!(!q.contains(5));
    }

    fn small_profile() -> PreferenceProfile {
        // man 0: [3, 1, 2]; man 1 lists only woman 7 in a larger instance
        let n = 8;
        let mut men = vec![Vec::new(); n];
        let mut women = vec![Vec::new(); n];
        men[0] = vec![3, 1, 2];
        men[1] = vec![7];
        women[3] = vec![0];
        women[1] = vec![0];
        women[2] = vec![0];
        women[7] = vec![1];
        PreferenceProfile::new(n, men, women).unwrap()
    }

    #[test]
    fn rank_lookup() {
        let p = small_profile();
        assert_eq!(p.rank(PlayerId::man(0), PlayerId::woman(1)), Some(2));
        assert_eq!(p.rank(PlayerId::man(0), PlayerId::woman(5)), None);
        assert_eq!(p.rank(PlayerId::man(1), PlayerId::woman(7)), Some(1));
        assert_eq!(p.rank(PlayerId::man(1), PlayerId::man(0)), None);
        assert_eq!(p.partner_rank(PlayerId::man(0), None), 4);
    }

    #[test]
    fn profile_rejects_asymmetry() {
        let err = PreferenceProfile::new(2, vec![vec![0], vec![]], vec![vec![], vec![]]).unwrap_err();
        assert_eq!(
            err,
            ModelError::Asymmetric {
                lister: PlayerId::man(0),
                listed: PlayerId::woman(0)
            }
        );
    }

    #[test]
    fn profile_rejects_duplicates_and_range() {
        let err = PreferenceProfile::new(2, vec![vec![0, 0], vec![]], vec![vec![0], vec![]]);
        assert!(matches!(err, Err(ModelError::DuplicateEntry { .. })));
        let err = PreferenceProfile::new(2, vec![vec![2], vec![]], vec![vec![], vec![]]);
        assert!(matches!(err, Err(ModelError::IndexOutOfRange { .. })));
        assert_eq!(
            PreferenceProfile::new(0, vec![], vec![]),
            Err(ModelError::EmptyInstance)
        );
    }

    #[test]
    fn matching_rejects_shared_players() {
        let mut m = Matching::new();
        m.insert(0, 1).unwrap();
        assert_eq!(m.insert(0, 2), Err(ModelError::PlayerAlreadyMatched(PlayerId::man(0))));
        assert_eq!(m.insert(3, 1), Err(ModelError::PlayerAlreadyMatched(PlayerId::woman(1))));
        assert_eq!(m.partner(PlayerId::woman(1)), Some(0));
    }

    #[test]
    fn player_id_round_trips_through_text() {
        for id in [PlayerId::man(0), PlayerId::woman(42)] {
            assert_eq!(id.to_string().parse::<PlayerId>().unwrap(), id);
        }
        assert!("x1".parse::<PlayerId>().is_err());
        assert!("m".parse::<PlayerId>().is_err());
    }
}
