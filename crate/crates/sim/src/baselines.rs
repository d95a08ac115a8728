//! Event loop for the store-and-forward baselines: transaction flooding,
//! hash announcements with jitter (Bitcoin-style), and hash announcements
//! with one in-flight request per hash (Shrec-style).

use std::collections::HashMap;

use codedcast_core::Behavior;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Scheme, SimConfig};
use crate::error::Result;
use crate::metrics::{Recorder, Sample};
use crate::network::{streams, sub_seed, Network};
use crate::queue::{secs, to_ticks_ceil, EventQueue, SimTime};
use crate::workload::Workload;
use crate::SimOutput;

#[derive(Clone, Copy, Debug)]
enum Msg {
    Tx(u32),
    Inv(u32),
    GetData(u32),
}

enum Ev {
    Create,
    Deliver { to: u32, port: u32, msg: Msg },
    RequestTimeout { node: u32, tx: u32, attempt: u32 },
    Sample,
}

/// Outstanding-request bookkeeping for one unknown hash at one node.
#[derive(Debug, Default)]
struct Pull {
    /// Ports that announced the hash, in announcement order.
    announcers: Vec<u32>,
    tried: Vec<u32>,
    attempt: u32,
    in_flight: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    net: &'a Network,
    scheme: Scheme,
    queue: EventQueue<Ev>,
    workload: Workload,
    rec: Recorder,
    rng: ChaCha8Rng,
    /// Hashes a node has heard of (used by silent nodes, which never hold
    /// the transaction itself).
    heard: Vec<Vec<u64>>,
    pulls: Vec<HashMap<u32, Pull>>,
    tx_bytes: usize,
    hash_bytes: usize,
    jitter: SimTime,
    timeout: SimTime,
    series: Vec<Sample>,
}

fn test_and_set(bits: &mut Vec<u64>, i: usize) -> bool {
    if bits.len() <= i / 64 {
        bits.resize(i / 64 + 1, 0);
    }
    let was = bits[i / 64] & (1 << (i % 64)) != 0;
    bits[i / 64] |= 1 << (i % 64);
    was
}

pub fn run(cfg: &SimConfig) -> Result<SimOutput> {
    let net = Network::build(cfg)?;
    let n = net.n();
    let warmup = to_ticks_ceil(cfg.warmup_s());
    let horizon = to_ticks_ceil(cfg.duration_s);
    let mut sim = Sim {
        cfg,
        net: &net,
        scheme: cfg.scheme,
        queue: EventQueue::new(),
        workload: Workload::new(cfg, net.honest.clone())?,
        rec: Recorder::new(n, warmup, horizon, cfg.record_arrivals),
        rng: ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, streams::SCHEDULE)),
        heard: vec![Vec::new(); n],
        pulls: (0..n).map(|_| HashMap::new()).collect(),
        tx_bytes: cfg.protocol.tx_len,
        hash_bytes: cfg.baseline.hash_bytes,
        jitter: to_ticks_ceil(cfg.baseline.jitter_max_s),
        timeout: to_ticks_ceil(cfg.baseline.request_timeout_s),
        series: Vec::new(),
    };
    let first = sim.workload.next_gap();
    sim.queue.schedule(first, Ev::Create);
    if cfg.sample_interval_s > 0.0 {
        sim.queue
            .schedule(to_ticks_ceil(cfg.sample_interval_s), Ev::Sample);
    }
    let end = to_ticks_ceil(cfg.end_s());
    while let Some((t, ev)) = sim.queue.pop_until(end) {
        sim.handle(t, ev);
    }
    let censored_stats = cfg.adversary.censored_fraction > 0.0;
    let series = std::mem::take(&mut sim.series);
    let report = sim.rec.finish(
        &sim.workload.registry,
        cfg.scheme.name(),
        cfg.seed,
        &net.honest,
        censored_stats,
        Vec::new(),
        series,
    );
    Ok(SimOutput {
        report,
        arrivals: sim.rec.take_arrivals(),
        txs: std::mem::take(&mut sim.workload.registry.txs),
        network: net,
    })
}

impl Sim<'_> {
    fn handle(&mut self, t: SimTime, ev: Ev) {
        match ev {
            Ev::Create => {
                let tx = self.workload.create(t);
                self.on_first_copy(t, tx.origin, tx.index as u32);
                let gap = self.workload.next_gap();
                self.queue.schedule(t + gap, Ev::Create);
            }
            Ev::Deliver { to, port, msg } => self.on_deliver(t, to as usize, port, msg),
            Ev::RequestTimeout { node, tx, attempt } => {
                self.on_request_timeout(t, node as usize, tx, attempt)
            }
            Ev::Sample => {
                self.series.push(Sample {
                    t: secs(t),
                    mean_link_rate: 0.0,
                    loss_rate: 0.0,
                    deliveries: self.rec.take_interval_deliveries(),
                });
                let next = t + to_ticks_ceil(self.cfg.sample_interval_s);
                self.queue.schedule(next, Ev::Sample);
            }
        }
    }

    fn wire_len(&self, msg: Msg) -> usize {
        match msg {
            Msg::Tx(_) => self.tx_bytes,
            Msg::Inv(_) | Msg::GetData(_) => self.hash_bytes,
        }
    }

    fn send(&mut self, t: SimTime, u: usize, p: usize, msg: Msg) {
        let nb = self.net.adjacency[u][p];
        let name = match msg {
            Msg::Tx(_) => "msgs_tx",
            Msg::Inv(_) => "msgs_inv",
            Msg::GetData(_) => "msgs_getdata",
        };
        self.rec.count(name, 1);
        self.queue.schedule(
            t + self.net.port_delay(u, p),
            Ev::Deliver {
                to: nb.peer as u32,
                port: nb.back as u32,
                msg,
            },
        );
    }

    /// Whether `u` is willing to pass `tx` on at all.
    fn relays(&self, u: usize, tx: u32) -> bool {
        match self.net.behaviors[u] {
            Behavior::Honest => true,
            Behavior::Silent => false,
            Behavior::Censor { .. } => !self.workload.registry.txs[tx as usize].censored,
        }
    }

    /// `u` obtained the full transaction for the first time.
    fn on_first_copy(&mut self, t: SimTime, u: usize, tx: u32) {
        if !self
            .rec
            .on_delivery(&self.workload.registry, u, tx as usize, t)
        {
            return;
        }
        self.pulls[u].remove(&tx);
        if !self.relays(u, tx) {
            return;
        }
        let ports = self.net.adjacency[u].len();
        match self.scheme {
            Scheme::Flooding => {
                for p in 0..ports {
                    self.send(t, u, p, Msg::Tx(tx));
                }
            }
            _ => {
                test_and_set(&mut self.heard[u], tx as usize);
                for p in 0..ports {
                    let delay = if self.jitter > 0 {
                        self.rng.random_range(0..=self.jitter)
                    } else {
                        0
                    };
                    self.send(t + delay, u, p, Msg::Inv(tx));
                }
            }
        }
    }

    fn on_deliver(&mut self, t: SimTime, v: usize, q: u32, msg: Msg) {
        self.rec.on_download(v, t, self.wire_len(msg));
        match msg {
            Msg::Tx(tx) => {
                if self.net.behaviors[v] != Behavior::Silent {
                    self.on_first_copy(t, v, tx);
                }
            }
            Msg::Inv(tx) => self.on_inv(t, v, q, tx),
            Msg::GetData(tx) => {
                if self.rec.has(v, tx as usize) && self.relays(v, tx) {
                    self.send(t, v, q as usize, Msg::Tx(tx));
                }
            }
        }
    }

    fn on_inv(&mut self, t: SimTime, v: usize, q: u32, tx: u32) {
        if self.net.behaviors[v] == Behavior::Silent {
            // Announce everything at once to attract requests, then never
            // answer them.
            if !test_and_set(&mut self.heard[v], tx as usize) {
                for p in 0..self.net.adjacency[v].len() {
                    self.send(t, v, p, Msg::Inv(tx));
                }
            }
            return;
        }
        if self.rec.has(v, tx as usize) {
            return;
        }
        match self.scheme {
            Scheme::Bitcoin => self.send(t, v, q as usize, Msg::GetData(tx)),
            Scheme::Shrec => {
                let pull = self.pulls[v].entry(tx).or_default();
                if !pull.announcers.contains(&q) {
                    pull.announcers.push(q);
                }
                if !pull.in_flight {
                    self.request(t, v, tx, q);
                }
            }
            Scheme::Flooding | Scheme::Coded => unreachable!("no announcements in this scheme"),
        }
    }

    fn request(&mut self, t: SimTime, v: usize, tx: u32, q: u32) {
        let pull = self.pulls[v].get_mut(&tx).expect("pull state exists");
        pull.in_flight = true;
        pull.attempt += 1;
        if !pull.tried.contains(&q) {
            pull.tried.push(q);
        }
        let attempt = pull.attempt;
        self.send(t, v, q as usize, Msg::GetData(tx));
        self.queue.schedule(
            t + self.timeout,
            Ev::RequestTimeout {
                node: v as u32,
                tx,
                attempt,
            },
        );
    }

    fn on_request_timeout(&mut self, t: SimTime, v: usize, tx: u32, attempt: u32) {
        let Some(pull) = self.pulls[v].get_mut(&tx) else {
            return;
        };
        if pull.attempt != attempt {
            return;
        }
        self.rec.count("request_timeouts", 1);
        // Prefer an announcer not yet asked; once all were asked, cycle.
        let next = pull
            .announcers
            .iter()
            .copied()
            .find(|p| !pull.tried.contains(p))
            .unwrap_or_else(|| pull.announcers[attempt as usize % pull.announcers.len()]);
        self.request(t, v, tx, next);
    }
}
