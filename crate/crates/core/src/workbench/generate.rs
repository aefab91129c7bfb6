use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PlayerId, PreferenceProfile};

/// How many times an isolated player's edges are redrawn before giving up.
pub const MAX_REGENERATION_ATTEMPTS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
    #[error("{player} still has an empty preference list after {attempts} redraws")]
    DegenerateInstance { player: PlayerId, attempts: u32 },
    #[error("cannot parse family {0:?}; expected complete, random:P, bounded:D or aregular:ALPHA,D")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Complete,
    /// Each man-woman pair is acceptable independently with probability `p`.
    RandomBipartite { p: f64 },
    /// Union of `d` uniformly random perfect matchings.
    BoundedDegree { d: usize },
    /// Men's degrees drawn uniformly from `[degree, floor(alpha * degree)]`.
    AlmostRegular { alpha: f64, degree: usize },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Complete => f.write_str("complete"),
            Family::RandomBipartite { p } => write!(f, "random:{p}"),
            Family::BoundedDegree { d } => write!(f, "bounded:{d}"),
            Family::AlmostRegular { alpha, degree } => write!(f, "aregular:{alpha},{degree}"),
        }
    }
}

impl FromStr for Family {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || GenerateError::Parse(s.to_string());
        let s = s.trim();
        if s == "complete" {
            return Ok(Family::Complete);
        }
        let (name, args) = s.split_once(':').ok_or_else(err)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        match (name, args.as_slice()) {
            ("random", [p]) => Ok(Family::RandomBipartite {
                p: p.parse().map_err(|_| err())?,
            }),
            ("bounded", [d]) => Ok(Family::BoundedDegree {
                d: d.parse().map_err(|_| err())?,
            }),
            ("aregular", [alpha, d]) => Ok(Family::AlmostRegular {
                alpha: alpha.parse().map_err(|_| err())?,
                degree: d.parse().map_err(|_| err())?,
            }),
            _ => Err(err()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        GeneratorSpec { family, n, seed }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let bad = |msg: String| Err(GenerateError::InvalidSpec(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        match self.family {
            Family::Complete => Ok(()),
            Family::RandomBipartite { p } if !(p > 0.0 && p <= 1.0) => {
                bad(format!("edge probability must lie in (0, 1], got {p}"))
            }
            Family::BoundedDegree { d: 0 } => bad("degree bound must be at least 1".into()),
            Family::AlmostRegular { alpha, degree } if !(alpha >= 1.0 && alpha.is_finite()) => {
                bad(format!("alpha must be a finite value >= 1, got {alpha} (degree {degree})"))
            }
            Family::AlmostRegular { degree, .. } if degree == 0 || degree > self.n => bad(format!(
                "base degree must lie in [1, {}], got {degree}",
                self.n
            )),
            _ => Ok(()),
        }
    }
}

/// Draws a profile: an edge set from the family, then an independent uniform
/// order over each player's neighbors. Deterministic in the seed.
pub fn generate(spec: &GeneratorSpec) -> Result<PreferenceProfile, GenerateError> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    match spec.family {
        Family::Complete => {
            for row in &mut adj {
                row.extend(0..n);
            }
        }
        Family::RandomBipartite { p } => random_bipartite(&mut adj, p, &mut rng)?,
        Family::BoundedDegree { d } => {
            let mut perm: Vec<usize> = (0..n).collect();
            for _ in 0..d {
                perm.shuffle(&mut rng);
                for (m, &w) in perm.iter().enumerate() {
                    adj[m].insert(w);
                }
            }
        }
        Family::AlmostRegular { alpha, degree } => {
            let top = ((alpha * degree as f64 + 1e-9).floor() as usize).clamp(degree, n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            for (m, row) in adj.iter_mut().enumerate() {
                let target = rng.gen_range(degree..=top);
                row.insert(perm[m]);
                let mut others: Vec<usize> = (0..n).filter(|&w| w != perm[m]).collect();
                others.shuffle(&mut rng);
                row.extend(others.into_iter().take(target - 1));
            }
        }
    }
    Ok(shuffled_profile(&adj, &mut rng))
}

fn random_bipartite(
    adj: &mut [BTreeSet<usize>],
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), GenerateError> {
    let n = adj.len();
    for row in adj.iter_mut() {
        row.extend((0..n).filter(|_| rng.gen_bool(p)));
    }
    for (m, row) in adj.iter_mut().enumerate() {
        let mut attempts = 0;
        while row.is_empty() {
            if attempts == MAX_REGENERATION_ATTEMPTS {
                return Err(GenerateError::DegenerateInstance {
                    player: PlayerId::man(m),
                    attempts,
                });
            }
            attempts += 1;
            row.extend((0..n).filter(|_| rng.gen_bool(p)));
        }
    }
    for w in 0..n {
        let mut attempts = 0;
        while !adj.iter().any(|row| row.contains(&w)) {
            if attempts == MAX_REGENERATION_ATTEMPTS {
                return Err(GenerateError::DegenerateInstance {
                    player: PlayerId::woman(w),
                    attempts,
                });
            }
            attempts += 1;
            for row in adj.iter_mut() {
                if rng.gen_bool(p) {
                    row.insert(w);
                }
            }
        }
    }
    Ok(())
}

fn shuffled_profile(adj: &[BTreeSet<usize>], rng: &mut ChaCha8Rng) -> PreferenceProfile {
    let n = adj.len();
    let mut men: Vec<Vec<usize>> = adj.iter().map(|row| row.iter().copied().collect()).collect();
    let mut women: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (m, row) in adj.iter().enumerate() {
        for &w in row {
            women[w].push(m);
        }
    }
    for list in men.iter_mut().chain(women.iter_mut()) {
        list.shuffle(rng);
    }
    PreferenceProfile::new(n, men, women).expect("generated lists are symmetric")
}
