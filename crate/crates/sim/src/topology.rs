//! Undirected network topologies with per-edge propagation delays.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// One-way propagation delay in milliseconds.
    pub delay_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub n: usize,
    pub edges: Vec<Edge>,
}

/// A neighbor entry in an adjacency list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub peer: usize,
    pub edge: usize,
    /// Position of this node in the peer's adjacency list.
    pub back: usize,
}

impl Topology {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let t = Topology { n, edges };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.u >= self.n || e.v >= self.n {
                return Err(SimError::Topology(format!(
                    "edge {}-{} out of range for n={}",
                    e.u, e.v, self.n
                )));
            }
            if e.u == e.v {
                return Err(SimError::Topology(format!("self loop at {}", e.u)));
            }
            if !(e.delay_ms >= 0.0 && e.delay_ms.is_finite()) {
                return Err(SimError::Topology(format!(
                    "bad delay {} on {}-{}",
                    e.delay_ms, e.u, e.v
                )));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(SimError::Topology(format!("parallel edge {}-{}", e.u, e.v)));
            }
        }
        if !self.is_connected() {
            return Err(SimError::Topology("graph is not connected".into()));
        }
        Ok(())
    }

    /// Adjacency lists in edge order.
    pub fn adjacency(&self) -> Vec<Vec<Neighbor>> {
        let mut adj: Vec<Vec<Neighbor>> = vec![Vec::new(); self.n];
        for (i, e) in self.edges.iter().enumerate() {
            let bu = adj[e.v].len();
            let bv = adj[e.u].len();
            adj[e.u].push(Neighbor {
                peer: e.v,
                edge: i,
                back: bu,
            });
            adj[e.v].push(Neighbor {
                peer: e.u,
                edge: i,
                back: bv,
            });
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for nb in &adj[u] {
                if !seen[nb.peer] {
                    seen[nb.peer] = true;
                    count += 1;
                    queue.push_back(nb.peer);
                }
            }
        }
        count == self.n
    }

    /// Line format: `n`, then one `u v delay_ms` line per edge.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.delay_ms);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, first) = lines
            .next()
            .ok_or_else(|| SimError::Parse("empty topology file".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| SimError::Parse(format!("line 1: expected node count, got {first:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || {
                SimError::Parse(format!(
                    "line {}: expected `u v delay_ms`, got {line:?}",
                    lineno + 1
                ))
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            edges.push(Edge {
                u: parts[0].parse().map_err(|_| bad())?,
                v: parts[1].parse().map_err(|_| bad())?,
                delay_ms: parts[2].parse().map_err(|_| bad())?,
            });
        }
        Topology::new(n, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Returns a copy where every edge delay is drawn from a log-normal
    /// distribution with the given median (`exp(mu)`) and shape `sigma`.
    pub fn with_lognormal_delays(mut self, median_ms: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(median_ms > 0.0 && sigma >= 0.0 && sigma.is_finite()) {
            return Err(SimError::config(
                "delay",
                format!("need median > 0 and sigma >= 0, got {median_ms}, {sigma}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in &mut self.edges {
            e.delay_ms = sample_lognormal(&mut rng, median_ms, sigma);
        }
        Ok(self)
    }

    pub fn with_constant_delays(mut self, delay_ms: f64) -> Self {
        for e in &mut self.edges {
            e.delay_ms = delay_ms;
        }
        self
    }
}

pub fn sample_lognormal<R: Rng + ?Sized>(rng: &mut R, median: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return median;
    }
    let z: f64 = StandardNormal.sample(rng);
    median * (sigma * z).exp()
}

/// Uniformly-ish random connected `degree`-regular graph on `n` nodes
/// (pairing model with incremental rejection, restarted on dead ends or
/// disconnection). Delays are zero.
pub fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Topology> {
    if degree == 0 || degree >= n || (n * degree) % 2 != 0 {
        return Err(SimError::Topology(format!(
            "no {degree}-regular graph on {n} nodes"
        )));
    }
    if degree == 1 && n > 2 {
        return Err(SimError::Topology(
            "a 1-regular graph on more than 2 nodes is disconnected".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        if let Some(edges) = try_pairing(n, degree, &mut rng) {
            let t = Topology {
                n,
                edges: edges
                    .into_iter()
                    .map(|(u, v)| Edge {
                        u,
                        v,
                        delay_ms: 0.0,
                    })
                    .collect(),
            };
            if t.is_connected() {
                return Ok(t);
            }
        }
    }
    Err(SimError::Topology(format!(
        "failed to generate a connected {degree}-regular graph on {n} nodes"
    )))
}

fn try_pairing(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n)
        .flat_map(|u| std::iter::repeat_n(u, degree))
        .collect();
    let mut adj: HashSet<(usize, usize)> = HashSet::with_capacity(n * degree / 2);
    let mut edges = Vec::with_capacity(n * degree / 2);
    while !stubs.is_empty() {
        let mut placed = false;
        for _ in 0..64 {
            let i = rng.random_range(0..stubs.len());
            let j = rng.random_range(0..stubs.len());
            let (u, v) = (stubs[i], stubs[j]);
            if i != j && u != v && !adj.contains(&(u.min(v), u.max(v))) {
                adj.insert((u.min(v), u.max(v)));
                edges.push((u.min(v), u.max(v)));
                stubs.swap_remove(i.max(j));
                stubs.swap_remove(i.min(j));
                placed = true;
                break;
            }
        }
        if !placed {
            // Few stubs left: enumerate the admissible pairs or give up.
            let mut options = Vec::new();
            for i in 0..stubs.len() {
                for j in i + 1..stubs.len() {
                    let (u, v) = (stubs[i], stubs[j]);
                    if u != v && !adj.contains(&(u.min(v), u.max(v))) {
                        options.push((i, j));
                    }
                }
            }
            if options.is_empty() {
                return None;
            }
            let (i, j) = options[rng.random_range(0..options.len())];
            let (u, v) = (stubs[i], stubs[j]);
            adj.insert((u.min(v), u.max(v)));
            edges.push((u.min(v), u.max(v)));
            stubs.swap_remove(j);
            stubs.swap_remove(i);
        }
    }
    edges.sort_unstable();
    Some(edges)
}
