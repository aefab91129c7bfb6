#![allow(dead_code)]

use almost_stable::model::{Matching, PreferenceProfile};
use almost_stable::workbench::{generate, Family, GeneratorSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_profile(n: usize, p: f64, seed: u64) -> PreferenceProfile {
    let family = if p >= 1.0 {
        Family::Complete
    } else {
        Family::RandomBipartite { p }
    };
    generate(&GeneratorSpec::new(family, n, seed)).unwrap()
}

/// Profile with possibly isolated players, built without the generator.
pub fn raw_profile(n: usize, p: f64, seed: u64) -> PreferenceProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut men = vec![Vec::new(); n];
    let mut women = vec![Vec::new(); n];
    for (m, list) in men.iter_mut().enumerate() {
        for (w, wl) in women.iter_mut().enumerate() {
            if rng.gen_bool(p) {
                list.push(w);
                wl.push(m);
            }
        }
    }
    for l in men.iter_mut().chain(women.iter_mut()) {
        l.shuffle(&mut rng);
    }
    PreferenceProfile::new(n, men, women).unwrap()
}

/// A random valid matching using a random subset of edges.
pub fn random_matching(profile: &PreferenceProfile, seed: u64) -> Matching {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = profile.edges().collect();
    edges.shuffle(&mut rng);
    let keep = rng.gen_range(0.0..1.0);
    let mut m = Matching::new();
    for (a, b) in edges {
        if rng.gen_bool(keep) && m.partner_of_man(a).is_none() && m.partner_of_woman(b).is_none() {
            m.insert(a, b).unwrap();
        }
    }
    m
}

fn position(list: &[usize], x: usize) -> Option<usize> {
    list.iter().position(|&y| y == x)
}

/// Blocking pairs by scanning the raw lists woman by woman. Shares no code
/// with the library's counter.
pub fn brute_force_blocking(profile: &PreferenceProfile, pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let n = profile.n();
    let mut man_partner = vec![usize::MAX; n];
    let mut woman_partner = vec![usize::MAX; n];
    for &(m, w) in pairs {
        man_partner[m] = w;
        woman_partner[w] = m;
    }
    let mut out = Vec::new();
    for w in (0..n).rev() {
        let wl = &profile.women_prefs()[w];
        let w_cur = if woman_partner[w] == usize::MAX {
            wl.len()
        } else {
            position(wl, woman_partner[w]).unwrap()
        };
        for (pos_m, &m) in wl.iter().enumerate() {
            if pos_m >= w_cur {
                break;
            }
            let ml = &profile.men_prefs()[m];
            let pos_w = position(ml, w).unwrap();
            let m_cur = if man_partner[m] == usize::MAX {
                ml.len()
            } else {
                position(ml, man_partner[m]).unwrap()
            };
            if pos_w < m_cur {
                out.push((m, w));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Every perfect matching of a complete instance, as `woman_of[man]`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for w in 0..n {
            if !used[w] {
                used[w] = true;
                prefix.push(w);
                go(prefix, used, out);
                prefix.pop();
                used[w] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Every matching (not necessarily perfect) inside the acceptability graph.
pub fn all_matchings(profile: &PreferenceProfile) -> Vec<Vec<(usize, usize)>> {
    fn go(
        p: &PreferenceProfile,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if m == p.n() {
            out.push(cur.clone());
            return;
        }
        go(p, m + 1, used, cur, out);
        for &w in &p.men_prefs()[m] {
            if !used[w] {
                used[w] = true;
                cur.push((m, w));
                go(p, m + 1, used, cur, out);
                cur.pop();
                used[w] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(profile, 0, &mut vec![false; profile.n()], &mut Vec::new(), &mut out);
    out
}

/// 0-based position of `w` in `m`'s list; `deg` when unmatched.
pub fn man_position(profile: &PreferenceProfile, m: usize, w: Option<usize>) -> usize {
    let ml = &profile.men_prefs()[m];
    w.map_or(ml.len(), |w| position(ml, w).unwrap())
}
