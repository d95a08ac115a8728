//! Event loop for the coded scheme.

use codedcast_core::node::Message;
use codedcast_core::{Behavior, Digest, NodeState, PayloadPool, Received};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::error::Result;
use crate::metrics::{LinkRate, Recorder, Sample};
use crate::network::{streams, sub_seed, Network};
use crate::queue::{secs, to_ticks_ceil, EventQueue, SimTime};
use crate::workload::Workload;
use crate::SimOutput;

enum Ev {
    Create,
    Send { node: u32, port: u32, gen: u32 },
    Deliver { to: u32, port: u32, msg: Message },
    Timeout { node: u32 },
    Sample,
}

#[derive(Clone, Debug, Default)]
struct Port {
    gen: u32,
    last_slot: SimTime,
    next_slot: SimTime,
    /// Measurement-interval counters for the outgoing direction.
    sent: u64,
    /// Measurement-interval counters for the incoming direction.
    received: u64,
    losses: u64,
}

/// Default initial codeword rate per link: twice the share of the
/// aggregate transaction rate a node would need from each neighbor.
pub fn default_initial_rate(tps: f64, mean_degree: f64) -> f64 {
    2.0 * tps / mean_degree.max(1.0)
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    net: &'a Network,
    nodes: Vec<NodeState>,
    ports: Vec<Vec<Port>>,
    timeout_at: Vec<Option<SimTime>>,
    queue: EventQueue<Ev>,
    workload: Workload,
    rec: Recorder,
    warmup: SimTime,
    horizon: SimTime,
    fragmented: bool,
    series: Vec<Sample>,
    interval_losses: u64,
    interval_codewords: u64,
}

pub fn run(cfg: &SimConfig) -> Result<SimOutput> {
    let net = Network::build(cfg)?;
    let n = net.n();
    let mut params = cfg.protocol.clone();
    if params.initial_rate.is_none() {
        let mean_degree = 2.0 * net.topology.edges.len() as f64 / n as f64;
        params.initial_rate = Some(default_initial_rate(cfg.workload.tps, mean_degree));
    }
    let fragmented = cfg.workload.size_histogram.is_some();
    let mut nodes = Vec::with_capacity(n);
    // Nodes decode the same transactions; keep one copy of each payload.
    let pool = PayloadPool::new();
    for i in 0..n {
        let mut node = NodeState::new(
            params.clone(),
            net.behaviors[i],
            sub_seed(cfg.seed, streams::NODES + 16 * i as u64),
        )?;
        node.set_payload_pool(pool.clone());
        if fragmented {
            // No forged fragments are injected in simulation, so every
            // complete chain is a valid transaction.
            node.enable_reassembly(1_000_000, |_| true);
        }
        nodes.push(node);
    }
    // Session p of node u talks to adjacency[u][p]; key exchange is free
    // and instantaneous at time zero.
    let mut keys = Vec::with_capacity(n);
    for (u, node) in nodes.iter_mut().enumerate() {
        let mut ks = Vec::new();
        for nb in &net.adjacency[u] {
            let (idx, msg) = node.open_session(nb.peer);
            debug_assert_eq!(idx, ks.len());
            ks.push(msg);
        }
        keys.push(ks);
    }
    for u in 0..n {
        for (p, nb) in net.adjacency[u].iter().enumerate() {
            if let Message::KeyExchange(k) = keys[u][p] {
                nodes[nb.peer].on_key_exchange(nb.back, k);
            }
        }
    }

    let warmup = to_ticks_ceil(cfg.warmup_s());
    let horizon = to_ticks_ceil(cfg.duration_s);
    let mut sim = Sim {
        cfg,
        net: &net,
        ports: net
            .adjacency
            .iter()
            .map(|a| vec![Port::default(); a.len()])
            .collect(),
        timeout_at: vec![None; n],
        queue: EventQueue::new(),
        workload: Workload::new(cfg, net.honest.clone())?,
        rec: Recorder::new(n, warmup, horizon, cfg.record_arrivals),
        warmup,
        horizon,
        fragmented,
        series: Vec::new(),
        interval_losses: 0,
        interval_codewords: 0,
        nodes,
    };
    sim.start(params.initial_rate.unwrap());
    let end = to_ticks_ceil(cfg.end_s());
    while let Some((t, ev)) = sim.queue.pop_until(end) {
        sim.handle(t, ev);
    }
    Ok(sim.finish(net.clone()))
}

impl Sim<'_> {
    fn start(&mut self, r0: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, streams::SCHEDULE));
        let first = self.workload.next_gap();
        self.queue.schedule(first, Ev::Create);
        let interval = to_ticks_ceil(1.0 / r0).max(1);
        for u in 0..self.net.n() {
            if self.net.behaviors[u] == Behavior::Silent {
                continue;
            }
            for p in 0..self.net.adjacency[u].len() {
                let at = rng.random_range(0..interval);
                self.ports[u][p].next_slot = at;
                self.queue.schedule(
                    at,
                    Ev::Send {
                        node: u as u32,
                        port: p as u32,
                        gen: 0,
                    },
                );
            }
        }
        if self.cfg.sample_interval_s > 0.0 {
            self.queue
                .schedule(to_ticks_ceil(self.cfg.sample_interval_s), Ev::Sample);
        }
    }

    fn in_window(&self, t: SimTime) -> bool {
        t >= self.warmup && t < self.horizon
    }

    fn handle(&mut self, t: SimTime, ev: Ev) {
        match ev {
            Ev::Create => self.on_create(t),
            Ev::Send { node, port, gen } => self.on_send(t, node as usize, port as usize, gen),
            Ev::Deliver { to, port, msg } => self.on_deliver(t, to as usize, port as usize, msg),
            Ev::Timeout { node } => self.on_timeout(t, node as usize),
            Ev::Sample => self.on_sample(t),
        }
    }

    fn on_create(&mut self, t: SimTime) {
        let tx = self.workload.create(t);
        self.rec
            .on_delivery(&self.workload.registry, tx.origin, tx.index, t);
        for unit in tx.units {
            match self.nodes[tx.origin].on_local_transaction(unit) {
                Ok(r) => self.absorb(tx.origin, t, r),
                Err(e) => panic!("workload produced an invalid transaction: {e}"),
            }
        }
        let gap = self.workload.next_gap();
        self.queue.schedule(t + gap, Ev::Create);
    }

    fn on_send(&mut self, t: SimTime, u: usize, p: usize, gen: u32) {
        if self.ports[u][p].gen != gen {
            return;
        }
        let slot = self.nodes[u].on_send_slot(p, secs(t));
        if let Some(msg) = slot.message {
            if self.in_window(t) {
                self.ports[u][p].sent += 1;
            }
            self.transmit(t, u, p, msg);
        }
        let next = to_ticks_ceil(slot.next_at).max(t + 1);
        let port = &mut self.ports[u][p];
        port.last_slot = t;
        port.next_slot = next;
        self.queue.schedule(
            next,
            Ev::Send {
                node: u as u32,
                port: p as u32,
                gen,
            },
        );
    }

    fn transmit(&mut self, t: SimTime, u: usize, p: usize, msg: Message) {
        let nb = self.net.adjacency[u][p];
        let at = t + self.net.port_delay(u, p);
        self.queue.schedule(
            at,
            Ev::Deliver {
                to: nb.peer as u32,
                port: nb.back as u32,
                msg,
            },
        );
    }

    fn on_deliver(&mut self, t: SimTime, v: usize, q: usize, msg: Message) {
        self.rec.on_download(v, t, msg.wire_len());
        match msg {
            Message::Codeword(bytes) => {
                if self.in_window(t) {
                    self.ports[v][q].received += 1;
                }
                if self.net.is_honest(v) {
                    self.interval_codewords += 1;
                }
                let r = self.nodes[v].on_receive_codeword(q, &bytes, secs(t));
                self.absorb(v, t, r);
                self.arm_timeout(v);
            }
            Message::LossReport(bytes) => {
                if self.nodes[v].on_loss_report(q, &bytes).is_ok() {
                    self.repace(t, v, q);
                }
            }
            Message::KeyExchange(k) => self.nodes[v].on_key_exchange(q, k),
        }
    }

    /// After a rate increase, pulls the next send slot forward so the new
    /// interval applies from the last slot rather than after the old one.
    fn repace(&mut self, t: SimTime, u: usize, p: usize) {
        if self.net.behaviors[u] == Behavior::Silent {
            return;
        }
        let rate = self.nodes[u].session(p).rate();
        let port = &mut self.ports[u][p];
        let candidate = (port.last_slot + to_ticks_ceil(1.0 / rate)).max(t);
        if candidate < port.next_slot {
            port.gen = port.gen.wrapping_add(1);
            port.next_slot = candidate;
            self.queue.schedule(
                candidate,
                Ev::Send {
                    node: u as u32,
                    port: p as u32,
                    gen: port.gen,
                },
            );
        }
    }

    fn arm_timeout(&mut self, v: usize) {
        let Some(deadline) = self.nodes[v].next_timeout() else {
            return;
        };
        let at = to_ticks_ceil(deadline);
        if self.timeout_at[v].is_none_or(|cur| at < cur) {
            self.timeout_at[v] = Some(at);
            self.queue.schedule(at, Ev::Timeout { node: v as u32 });
        }
    }

    fn on_timeout(&mut self, t: SimTime, v: usize) {
        if self.timeout_at[v] != Some(t) {
            return;
        }
        self.timeout_at[v] = None;
        for (q, msg) in self.nodes[v].on_timeout_tick(secs(t)) {
            if let Message::LossReport(body) = &msg {
                let events = u16::from_be_bytes([body[0], body[1]]) as u64;
                if self.in_window(t) {
                    self.ports[v][q].losses += events;
                }
                if self.net.is_honest(v) {
                    self.interval_losses += events;
                }
            }
            self.transmit(t, v, q, msg);
        }
        self.arm_timeout(v);
    }

    fn absorb(&mut self, v: usize, t: SimTime, r: Received) {
        let reg = &self.workload.registry;
        if self.fragmented {
            for tx in &r.new_txs {
                if reg.by_unit(&tx.digest()).is_none() {
                    self.rec.count("fabricated", 1);
                }
            }
            for bytes in &r.reassembled {
                match reg.by_whole(&Digest::of(bytes)) {
                    Some(i) => {
                        self.rec.on_delivery(reg, v, i, t);
                    }
                    None => self.rec.count("fabricated", 1),
                }
            }
        } else {
            for tx in &r.new_txs {
                match reg.by_unit(&tx.digest()) {
                    Some(i) => {
                        self.rec.on_delivery(reg, v, i, t);
                    }
                    None => self.rec.count("fabricated", 1),
                }
            }
        }
    }

    fn on_sample(&mut self, t: SimTime) {
        let mut sum = 0.0;
        let mut links = 0usize;
        for &u in &self.net.honest {
            for s in self.nodes[u].sessions() {
                sum += s.rate();
                links += 1;
            }
        }
        let codewords = std::mem::take(&mut self.interval_codewords);
        let losses = std::mem::take(&mut self.interval_losses);
        self.series.push(Sample {
            t: secs(t),
            mean_link_rate: if links > 0 { sum / links as f64 } else { 0.0 },
            loss_rate: if codewords > 0 {
                losses as f64 / codewords as f64
            } else {
                0.0
            },
            deliveries: self.rec.take_interval_deliveries(),
        });
        let next = t + to_ticks_ceil(self.cfg.sample_interval_s);
        self.queue.schedule(next, Ev::Sample);
    }

    fn finish(mut self, net: Network) -> SimOutput {
        let span = secs(self.horizon - self.warmup);
        let mut links = Vec::new();
        for &u in &net.honest {
            for (p, nb) in net.adjacency[u].iter().enumerate() {
                // Losses are counted where they are detected, at the receiver.
                let back = &self.ports[nb.peer][nb.back];
                links.push(LinkRate {
                    from: u,
                    to: nb.peer,
                    rate: self.ports[u][p].sent as f64 / span,
                    loss_rate: if back.received > 0 {
                        back.losses as f64 / back.received as f64
                    } else {
                        0.0
                    },
                });
            }
        }
        for &u in &net.honest {
            let d = self.nodes[u].decoder().stats();
            self.rec.count("codewords_ingested", d.ingested);
            self.rec.count("codewords_redundant", d.redundant);
            self.rec.count("codewords_malformed", d.malformed);
            self.rec.count("codewords_corrupted", d.corrupted);
            self.rec.count("codewords_evicted", d.evicted);
            self.rec.count("loss_events", d.loss_events);
            for s in self.nodes[u].sessions() {
                self.rec.count("parse_failures", s.stats.parse_failures);
                self.rec.count("codewords_sent", s.stats.codewords_sent);
            }
        }
        self.rec.count("fabricated", 0);
        let censored_stats = self.cfg.adversary.censored_fraction > 0.0;
        let report = self.rec.finish(
            &self.workload.registry,
            self.cfg.scheme.name(),
            self.cfg.seed,
            &net.honest,
            censored_stats,
            links,
            std::mem::take(&mut self.series),
        );
        SimOutput {
            report,
            arrivals: self.rec.take_arrivals(),
            txs: std::mem::take(&mut self.workload.registry.txs),
            network: net,
        }
    }
}
