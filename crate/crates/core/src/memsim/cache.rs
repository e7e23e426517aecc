use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::trace::AccessEvent;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Lru,
    /// Evicts the line whose next use lies farthest in the future.
    Belady,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheStats {
    pub accesses: usize,
    pub misses: usize,
    pub unique_lines: usize,
    pub miss_rate: f64,
}

fn lines(events: &[AccessEvent], line_bytes: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        if e.size == 0 {
            continue;
        }
        let first = e.address / line_bytes;
        let last = (e.end() - 1) / line_bytes;
        out.extend(first..=last);
    }
    out
}

/// Fully associative cache over the line accesses the events touch.
pub fn simulate_cache(events: &[AccessEvent], capacity_bytes: u64, line_bytes: u64, policy: Policy) -> Result<CacheStats> {
    if line_bytes == 0 || capacity_bytes < line_bytes {
        return Err(Error::config(format!("cache of {capacity_bytes} bytes cannot hold a {line_bytes}-byte line")));
    }
    let ways = (capacity_bytes / line_bytes) as usize;
    let seq = lines(events, line_bytes);
    let misses = match policy {
        Policy::Lru => lru(&seq, ways),
        Policy::Belady => belady(&seq, ways),
    };
    let unique_lines = seq.iter().collect::<BTreeSet<_>>().len();
    Ok(CacheStats {
        accesses: seq.len(),
        misses,
        unique_lines,
        miss_rate: if seq.is_empty() { 0.0 } else { misses as f64 / seq.len() as f64 },
    })
}

fn lru(seq: &[u64], ways: usize) -> usize {
    let mut last_use: HashMap<u64, usize> = HashMap::new();
    let mut by_age: BTreeMap<usize, u64> = BTreeMap::new();
    let mut misses = 0;
    for (i, &line) in seq.iter().enumerate() {
        match last_use.get(&line) {
            Some(&t) => {
                by_age.remove(&t);
            }
            None => {
                misses += 1;
                if last_use.len() == ways {
                    let (_, victim) = by_age.pop_first().expect("full cache has lines");
                    last_use.remove(&victim);
                }
            }
        }
        last_use.insert(line, i);
        by_age.insert(i, line);
    }
    misses
}

fn belady(seq: &[u64], ways: usize) -> usize {
    let mut next = vec![usize::MAX; seq.len()];
    let mut seen: HashMap<u64, usize> = HashMap::new();
    for i in (0..seq.len()).rev() {
        if let Some(&j) = seen.get(&seq[i]) {
            next[i] = j;
        }
        seen.insert(seq[i], i);
    }
    let mut resident: HashMap<u64, usize> = HashMap::new();
    let mut by_next: BTreeSet<(usize, u64)> = BTreeSet::new();
    let mut misses = 0;
    for (i, &line) in seq.iter().enumerate() {
        match resident.get(&line) {
            Some(&n) => {
                by_next.remove(&(n, line));
            }
            None => {
                misses += 1;
                if resident.len() == ways {
                    let (_, victim) = by_next.pop_last().expect("full cache has lines");
                    resident.remove(&victim);
                }
            }
        }
        resident.insert(line, next[i]);
        by_next.insert((next[i], line));
    }
    misses
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memsim::{AccessKind, Level};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(line: u64) -> AccessEvent {
        AccessEvent::new(Level::Dram, AccessKind::Feature, line * 64, 64)
    }

    #[test]
    fn large_cache_only_cold_misses() {
        let evs: Vec<_> = [1, 2, 3, 1, 2, 3, 4, 1].iter().map(|&l| ev(l)).collect();
        for p in [Policy::Lru, Policy::Belady] {
            let s = simulate_cache(&evs, 64 * 64, 64, p).unwrap();
            assert_eq!(s.misses, 4);
            assert_eq!(s.miss_rate, 4.0 / 8.0);
        }
    }

    #[test]
    fn one_line_alternating_always_misses() {
        let evs: Vec<_> = (0..20).map(|i| ev(i % 2)).collect();
        for p in [Policy::Lru, Policy::Belady] {
            assert_eq!(simulate_cache(&evs, 64, 64, p).unwrap().miss_rate, 1.0);
        }
        assert!(simulate_cache(&evs, 32, 64, Policy::Lru).is_err());
    }

    #[test]
    fn events_expand_into_lines() {
        let evs = vec![AccessEvent::new(Level::Dram, AccessKind::Feature, 60, 10)];
        assert_eq!(simulate_cache(&evs, 1024, 64, Policy::Lru).unwrap().accesses, 2);
    }

    #[test]
    fn belady_matches_brute_force_on_tiny_traces() {
        // exhaustive search over eviction choices as an optimality oracle
        fn opt(seq: &[u64], ways: usize, cache: &mut Vec<u64>) -> usize {
            let Some((&l, rest)) = seq.split_first() else { return 0 };
            if cache.contains(&l) {
                return opt(rest, ways, cache);
            }
            if cache.len() < ways {
                cache.push(l);
                let r = 1 + opt(rest, ways, cache);
                cache.pop();
                return r;
            }
            let mut best = usize::MAX;
            for k in 0..cache.len() {
                let old = std::mem::replace(&mut cache[k], l);
                best = best.min(1 + opt(rest, ways, cache));
                cache[k] = old;
            }
            best
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let seq: Vec<u64> = (0..10).map(|_| rng.random_range(0..5)).collect();
            let ways = rng.random_range(1..4);
            assert_eq!(belady(&seq, ways), opt(&seq, ways, &mut Vec::new()), "{seq:?} ways {ways}");
        }
    }

    #[test]
    fn belady_never_loses_to_lru() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let lines = rng.random_range(8..600);
            let evs: Vec<_> = (0..10_000).map(|_| ev(rng.random_range(0..lines))).collect();
            let cap = 64 * rng.random_range(1..256);
            let b = simulate_cache(&evs, cap, 64, Policy::Belady).unwrap();
            let l = simulate_cache(&evs, cap, 64, Policy::Lru).unwrap();
            assert!(b.miss_rate <= l.miss_rate);
        }
    }
}
