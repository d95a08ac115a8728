//! Reference oracles for the test suites.
//!
//! Everything here is written from the definitions, deliberately without
//! touching the implementation crates, so that a test comparing the two is
//! an actual cross-check.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

/// One equation over GF(2): the XOR of the listed unknowns equals `payload`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub unknowns: Vec<usize>,
    pub payload: Vec<u8>,
}

/// Solves a system using only degree-one substitutions (no pivoting), which
/// is exactly what a peeling decoder can reach. Returns `(unknown, value)`
/// pairs in the order they were solved; within one sweep equations are
/// scanned in input order.
pub fn gf2_solve_peel_order(system: &[Equation]) -> Vec<(usize, Vec<u8>)> {
    let mut solved: Vec<(usize, Vec<u8>)> = Vec::new();
    let mut rows: Vec<(BTreeSet<usize>, Vec<u8>)> = system
        .iter()
        .map(|e| (e.unknowns.iter().copied().collect(), e.payload.clone()))
        .collect();
    loop {
        let mut progress = false;
        for i in 0..rows.len() {
            // Substitute everything known so far.
            for (u, v) in &solved {
                if rows[i].0.remove(u) {
                    for (b, x) in rows[i].1.iter_mut().zip(v) {
                        *b ^= x;
                    }
                }
            }
            if rows[i].0.len() == 1 {
                let u = *rows[i].0.iter().next().unwrap();
                let v = rows[i].1.clone();
                rows[i].0.clear();
                solved.push((u, v));
                progress = true;
            }
        }
        if !progress {
            return solved;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateEvent {
    Sent,
    Losses(u64),
}

/// Replays the multiplicative-increase, multiplicative-decrease rule.
pub fn controller_replay(
    events: &[RateEvent],
    r0: f64,
    gamma: f64,
    alpha: f64,
    r_min: f64,
    r_max: f64,
) -> f64 {
    let mut r = r0.max(r_min).min(r_max);
    for e in events {
        match *e {
            RateEvent::Sent => r = f64::max(r_min, r - r * alpha * gamma),
            RateEvent::Losses(n) => {
                for _ in 0..n {
                    r = f64::min(r_max, r + r * alpha);
                }
            }
        }
    }
    r
}

/// Searches payloads `[seed-derived prefix || counter]` of length `len`
/// until `id(payload) == target`. Returns the payload and the number of
/// trials used.
pub fn collision_search(
    id: impl Fn(&[u8]) -> u64,
    target: u64,
    len: usize,
    seed: u64,
    budget: u64,
) -> Result<(Vec<u8>, u64), String> {
    assert!(len >= 8, "payload must hold a counter");
    let mut payload = vec![0u8; len];
    // xorshift fill, independent of any library generator
    let mut s = seed | 1;
    for b in payload.iter_mut() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        *b = s as u8;
    }
    for trial in 1..=budget {
        payload[..8].copy_from_slice(&(trial ^ seed.rotate_left(17)).to_le_bytes());
        if id(&payload) == target {
            return Ok((payload, trial));
        }
    }
    Err(format!(
        "no collision with {target:#x} within {budget} trials"
    ))
}

/// Single-source shortest path lengths with integer weights.
/// `edges` are undirected `(u, v, weight)`.
pub fn shortest_paths(n: usize, edges: &[(usize, usize, u64)], source: usize) -> Vec<Option<u64>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut dist = vec![None; n];
    let mut heap = BinaryHeap::from([Reverse((0u64, source))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some() {
            continue;
        }
        dist[u] = Some(d);
        for &(v, w) in &adj[u] {
            if dist[v].is_none() {
                heap.push(Reverse((d + w, v)));
            }
        }
    }
    dist
}

/// Bytes on the wire for one transaction of `size` bytes cut into `ell`-byte
/// fragments that each spend `header` bytes on framing.
pub fn fragmented_bytes(size: usize, ell: usize, header: usize) -> usize {
    let room = ell - header;
    let mut left = size;
    let mut frags = 0;
    loop {
        frags += 1;
        if left <= room {
            return frags * ell;
        }
        left -= room;
    }
}

/// Exhaustive search for the fragment size with the smallest expected
/// bytes-on-wire per transaction byte; ties go to the smaller size.
pub fn best_fragment_size(
    histogram: &[(usize, f64)],
    lo: usize,
    hi: usize,
    header: usize,
) -> (usize, f64) {
    let payload: f64 = histogram.iter().map(|&(s, w)| s as f64 * w).sum();
    let mut best = (0, f64::INFINITY);
    for ell in lo..=hi {
        let wire: f64 = histogram
            .iter()
            .map(|&(s, w)| fragmented_bytes(s, ell, header) as f64 * w)
            .sum();
        let ratio = wire / payload;
        if ratio < best.1 {
            best = (ell, ratio);
        }
    }
    best
}
