//! Small hand-driven networks of `NodeState`s with fixed link delays.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use codedcast_core::{Behavior, Digest, Message, NodeState, ProtocolParams, Transaction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MICROS: f64 = 1e6;

enum Ev {
    Create(usize),
    Send(usize, usize),
    Deliver {
        to: usize,
        session: usize,
        msg: Message,
    },
    Timeout(usize),
}

struct Net {
    nodes: Vec<NodeState>,
    /// `links[node][session] = (peer, peer's session for node, delay_us)`
    links: Vec<Vec<(usize, usize, u64)>>,
    seen: Vec<HashSet<Digest>>,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    events: Vec<Option<Ev>>,
}

impl Net {
    fn new(n: usize, edges: &[(usize, usize)], delay_us: u64, params: &ProtocolParams) -> Self {
        let mut nodes: Vec<NodeState> = (0..n)
            .map(|i| NodeState::new(params.clone(), Behavior::Honest, 100 + i as u64).unwrap())
            .collect();
        let mut links = vec![Vec::new(); n];
        for &(a, b) in edges {
            let (sa, ka) = nodes[a].open_session(b);
            let (sb, kb) = nodes[b].open_session(a);
            nodes[a].on_message(sa, &kb, 0.0);
            nodes[b].on_message(sb, &ka, 0.0);
            links[a].push((b, sb, delay_us));
            links[b].push((a, sa, delay_us));
        }
        let mut net = Net {
            nodes,
            links,
            seen: vec![HashSet::new(); n],
            queue: BinaryHeap::new(),
            events: Vec::new(),
        };
        for node in 0..n {
            for s in 0..net.links[node].len() {
                net.schedule(0, Ev::Send(node, s));
            }
        }
        net
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.queue.push(Reverse((at, self.events.len() as u64)));
        self.events.push(Some(ev));
    }

    fn arm_timeout(&mut self, node: usize) {
        if let Some(t) = self.nodes[node].next_timeout() {
            self.schedule((t * MICROS).ceil() as u64, Ev::Timeout(node));
        }
    }

    /// Runs until `end_us`; `origin` creates a transaction every `gap_us`
    /// until `stop_us`. Returns the created transactions.
    fn run(
        &mut self,
        origin: usize,
        gap_us: u64,
        stop_us: u64,
        end_us: u64,
        rng: &mut impl Rng,
    ) -> Vec<Digest> {
        let mut created = Vec::new();
        self.schedule(gap_us, Ev::Create(origin));
        while let Some(Reverse((now, id))) = self.queue.pop() {
            if now > end_us {
                break;
            }
            let t = now as f64 / MICROS;
            match self.events[id as usize].take().unwrap() {
                Ev::Create(node) => {
                    let mut p = vec![0u8; self.nodes[node].params().tx_len];
                    rng.fill_bytes(&mut p);
                    let tx = Transaction::new(p, t);
                    created.push(tx.digest());
                    self.seen[node].insert(tx.digest());
                    self.nodes[node].on_local_transaction(tx).unwrap();
                    if now + gap_us < stop_us {
                        self.schedule(now + gap_us, Ev::Create(node));
                    }
                }
                Ev::Send(node, s) => {
                    let slot = self.nodes[node].on_send_slot(s, t);
                    if let Some(msg) = slot.message {
                        let (peer, ps, d) = self.links[node][s];
                        self.schedule(
                            now + d,
                            Ev::Deliver {
                                to: peer,
                                session: ps,
                                msg,
                            },
                        );
                    }
                    self.schedule(
                        ((slot.next_at * MICROS).ceil() as u64).max(now + 1),
                        Ev::Send(node, s),
                    );
                }
                Ev::Deliver { to, session, msg } => {
                    let got = self.nodes[to].on_message(session, &msg, t);
                    for tx in got.new_txs {
                        self.seen[to].insert(tx.digest());
                    }
                    self.arm_timeout(to);
                }
                Ev::Timeout(node) => {
                    for (s, msg) in self.nodes[node].on_timeout_tick(t) {
                        let (peer, ps, d) = self.links[node][s];
                        self.schedule(
                            now + d,
                            Ev::Deliver {
                                to: peer,
                                session: ps,
                                msg,
                            },
                        );
                    }
                    self.arm_timeout(node);
                }
            }
        }
        created
    }

    fn delivery(&self, node: usize, created: &[Digest]) -> f64 {
        created
            .iter()
            .filter(|d| self.seen[node].contains(d))
            .count() as f64
            / created.len() as f64
    }
}

fn params() -> ProtocolParams {
    ProtocolParams {
        tx_len: 64,
        initial_rate: Some(200.0),
        ..ProtocolParams::default()
    }
}

#[test]
fn two_nodes_deliver_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Net::new(2, &[(0, 1)], 20_000, &params());
    // 100 tx/s for 20 s, then 5 s to drain.
    let created = net.run(0, 10_000, 20_000_000, 25_000_000, &mut rng);
    assert_eq!(created.len(), 1999);
    let d = net.delivery(1, &created);
    assert!(d >= 0.95, "delivery {d}");
    let s = &net.nodes[1].sessions()[0];
    assert_eq!(s.stats.parse_failures, 0);
    assert_eq!(net.nodes[1].decoder().stats().corrupted, 0);
}

/// Each hop has a single upstream link, so a missed transaction can only be
/// recovered while it is still in the sender's window: k / tps = 0.5 s here.
/// Loss reports must come back well inside that, hence the shorter timeout.
#[test]
fn three_node_chain_relays_through_middle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = ProtocolParams {
        tau: 0.1,
        ..params()
    };
    let mut net = Net::new(3, &[(0, 1), (1, 2)], 20_000, &p);
    let created = net.run(0, 10_000, 20_000_000, 25_000_000, &mut rng);
    for node in [1, 2] {
        let d = net.delivery(node, &created);
        assert!(d >= 0.95, "node {node} delivery {d}");
    }
    // The far end learns everything through node 1's re-encoded stream.
    assert!(net.nodes[2].decoded_count() as usize >= created.len() * 95 / 100);
}

#[test]
fn loss_reports_keep_rates_near_offered_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Net::new(2, &[(0, 1)], 20_000, &params());
    net.run(0, 10_000, 30_000_000, 30_000_000, &mut rng);
    let rate = net.nodes[0].session(0).rate();
    // 100 tx/s needs somewhat more than 100 codewords/s, not thousands.
    assert!((100.0..600.0).contains(&rate), "rate {rate}");
    assert!(net.nodes[0].session(0).stats.loss_events_received > 0);
}
