//! Brute-force mutual nearest-neighbour matching with a ratio test.

use serde::{Deserialize, Serialize};

use crate::features::{hamming, Descriptor};

pub const DEFAULT_MAX_DISTANCE: u32 = 64;
pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub idx_prev: usize,
    pub idx_curr: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub max_distance: u32,
    /// Nearest / second-nearest bound. `1.0` disables the test.
    pub ratio: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            max_distance: DEFAULT_MAX_DISTANCE,
            ratio: DEFAULT_RATIO,
        }
    }
}

#[derive(Clone, Copy)]
struct Nearest {
    idx: usize,
    dist: u32,
    second: Option<u32>,
}

/// Nearest neighbour of every query among `pool`; ties go to the lowest index.
fn nearest_all(queries: &[Descriptor], pool: &[Descriptor]) -> Vec<Nearest> {
    queries
        .iter()
        .map(|q| {
            let mut best = Nearest {
                idx: 0,
                dist: u32::MAX,
                second: None,
            };
            for (j, d) in pool.iter().enumerate() {
                let dist = hamming(q, d);
                if dist < best.dist {
                    if best.dist != u32::MAX {
                        best.second = Some(best.dist);
                    }
                    best.idx = j;
                    best.dist = dist;
                } else if best.second.is_none_or(|s| dist < s) {
                    best.second = Some(dist);
                }
            }
            best
        })
        .collect()
}

/// Mutual nearest neighbours of `desc_prev` and `desc_curr`, filtered by
/// `max_distance` and by the nearest/second-nearest ratio on the prev→curr
/// side. One-to-one; sorted by distance, then `(idx_prev, idx_curr)`.
pub fn match_descriptors(
    desc_prev: &[Descriptor],
    desc_curr: &[Descriptor],
    max_distance: u32,
    ratio: f64,
) -> Vec<Match> {
    if desc_prev.is_empty() || desc_curr.is_empty() {
        return Vec::new();
    }
    let forward = nearest_all(desc_prev, desc_curr);
    let backward = nearest_all(desc_curr, desc_prev);

    let mut out: Vec<Match> = forward
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            if backward[f.idx].idx != i || f.dist > max_distance {
                return None;
            }
            if ratio < 1.0 {
                if let Some(second) = f.second {
                    if !((f.dist as f64) < ratio * second as f64) {
                        return None;
                    }
                }
            }
            Some(Match {
                idx_prev: i,
                idx_curr: f.idx,
                distance: f.dist,
            })
        })
        .collect();
    out.sort_by_key(|m| (m.distance, m.idx_prev, m.idx_curr));
    out
}

pub fn match_with(cfg: &MatcherConfig, prev: &[Descriptor], curr: &[Descriptor]) -> Vec<Match> {
    match_descriptors(prev, curr, cfg.max_distance, cfg.ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desc(bits: &[usize]) -> Descriptor {
        let mut w = [0u64; 4];
        for &b in bits {
            w[b / 64] |= 1 << (b % 64);
        }
        Descriptor::from_words(w)
    }

    #[test]
    fn exact_copies_match_identically() {
        let prev: Vec<_> = (0..20).map(|i| desc(&[i * 3, i * 3 + 1, 200 + i])).collect();
        let m = match_descriptors(&prev, &prev.clone(), 64, 0.8);
        assert_eq!(m.len(), 20);
        for (k, mm) in m.iter().enumerate() {
            assert_eq!((mm.idx_prev, mm.idx_curr, mm.distance), (k, k, 0));
        }
    }

    #[test]
    fn empty_side_gives_nothing() {
        let a = vec![desc(&[1])];
        assert!(match_descriptors(&a, &[], 64, 0.8).is_empty());
        assert!(match_descriptors(&[], &a, 64, 0.8).is_empty());
    }

    #[test]
    fn ambiguous_pair_fails_ratio_test() {
        // a vs b: 10 bits apart; a vs c: 11 bits apart.
        let a = desc(&[]);
        let b = desc(&(0..10).collect::<Vec<_>>());
        let c = desc(&(100..111).collect::<Vec<_>>());
        assert!(match_descriptors(&[a], &[b, c], 64, 0.8).is_empty());
        // Without a competitor the pair is accepted.
        let m = match_descriptors(&[a], &[b], 64, 0.8);
        assert_eq!(m, vec![Match { idx_prev: 0, idx_curr: 0, distance: 10 }]);
    }

    #[test]
    fn max_distance_is_inclusive() {
        let a = desc(&[]);
        let b = desc(&(0..5).collect::<Vec<_>>());
        assert_eq!(match_descriptors(&[a], &[b], 5, 0.8).len(), 1);
        assert!(match_descriptors(&[a], &[b], 4, 0.8).is_empty());
    }

    fn descriptors(n: usize) -> impl Strategy<Value = Vec<Descriptor>> {
        prop::collection::vec(any::<[u64; 4]>().prop_map(Descriptor::from_words), 0..n)
    }

    fn assert_one_to_one(m: &[Match]) {
        let mut p: Vec<_> = m.iter().map(|x| x.idx_prev).collect();
        let mut c: Vec<_> = m.iter().map(|x| x.idx_curr).collect();
        p.sort();
        c.sort();
        p.dedup();
        c.dedup();
        assert_eq!(p.len(), m.len());
        assert_eq!(c.len(), m.len());
    }

    proptest! {
        #[test]
        fn output_is_one_to_one_and_sorted(a in descriptors(40), b in descriptors(40),
                                           maxd in 0u32..=256, ratio in 0.05f64..=1.0) {
            let m = match_descriptors(&a, &b, maxd, ratio);
            assert_one_to_one(&m);
            for w in m.windows(2) {
                prop_assert!((w[0].distance, w[0].idx_prev, w[0].idx_curr)
                    < (w[1].distance, w[1].idx_prev, w[1].idx_curr));
            }
        }

        #[test]
        fn mutuality_is_symmetric(a in descriptors(30), b in descriptors(30)) {
            let ab = match_descriptors(&a, &b, 256, 1.0);
            let ba = match_descriptors(&b, &a, 256, 1.0);
            let mut x: Vec<_> = ab.iter().map(|m| (m.idx_prev, m.idx_curr)).collect();
            let mut y: Vec<_> = ba.iter().map(|m| (m.idx_curr, m.idx_prev)).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn tighter_max_distance_never_adds(a in descriptors(30), b in descriptors(30),
                                           hi in 0u32..=256, cut in 0u32..=256) {
            let lo = hi.min(cut);
            let loose = match_descriptors(&a, &b, hi, 0.8);
            let tight = match_descriptors(&a, &b, lo, 0.8);
            prop_assert!(tight.iter().all(|t| loose.contains(t)));
        }
    }
}
