//! A topology with integer link delays and a behavior per node.

use codedcast_core::Behavior;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AdversaryMode, DelayModel, Generator, SimConfig};
use crate::error::Result;
use crate::queue::{to_ticks, SimTime};
use crate::topology::{random_regular, Edge, Neighbor, Topology};

/// Independent seed for one consumer of randomness, so that adding or
/// removing one consumer never perturbs the others.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) mod streams {
    pub const TOPOLOGY: u64 = 1;
    pub const DELAYS: u64 = 2;
    pub const ROLES: u64 = 3;
    pub const WORKLOAD: u64 = 4;
    pub const NODES: u64 = 5;
    pub const SCHEDULE: u64 = 6;
}

pub fn delay_ticks(delay_ms: f64) -> SimTime {
    to_ticks(delay_ms / 1000.0)
}

#[derive(Clone, Debug)]
pub struct Network {
    pub topology: Topology,
    pub adjacency: Vec<Vec<Neighbor>>,
    /// One-way delay per edge.
    pub delays: Vec<SimTime>,
    pub behaviors: Vec<Behavior>,
    /// Nodes that follow the protocol; they create transactions and are
    /// the population the metrics are computed over.
    pub honest: Vec<usize>,
}

impl Network {
    pub fn build(cfg: &SimConfig) -> Result<Self> {
        let t = &cfg.topology;
        let mut topo = match t.generator {
            Generator::RandomRegular => {
                random_regular(t.n, t.degree, sub_seed(cfg.seed, streams::TOPOLOGY))?
            }
            Generator::File => Topology::load(t.file.as_deref().expect("validated"))?,
        };
        topo = match t.delay {
            DelayModel::Lognormal => topo.with_lognormal_delays(
                t.delay_median_ms,
                t.delay_sigma,
                sub_seed(cfg.seed, streams::DELAYS),
            )?,
            DelayModel::Constant => topo.with_constant_delays(t.delay_ms),
            DelayModel::FromFile => topo,
        };

        let a = &cfg.adversary;
        let mut behaviors = vec![Behavior::Honest; topo.n];
        let adversarial = match a.mode {
            AdversaryMode::Censor => Some(Behavior::Censor {
                fraction: a.censored_fraction,
            }),
            AdversaryMode::Silent => Some(Behavior::Silent),
            AdversaryMode::None | AdversaryMode::ZeroDelayAttacker => None,
        };
        if let Some(b) = adversarial {
            let count = (a.fraction * topo.n as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, streams::ROLES));
            for i in codedcast_core::codeword::sample_indices(&mut rng, topo.n, count.min(topo.n)) {
                behaviors[i] = b;
            }
        }
        if a.mode == AdversaryMode::ZeroDelayAttacker {
            let honest_n = topo.n;
            for j in 0..a.count {
                let attacker = honest_n + j;
                for u in 0..honest_n {
                    topo.edges.push(Edge {
                        u,
                        v: attacker,
                        delay_ms: 0.0,
                    });
                }
                behaviors.push(Behavior::Censor {
                    fraction: a.censored_fraction,
                });
            }
            topo.n += a.count;
            topo.validate()?;
        }

        let honest: Vec<usize> = (0..topo.n)
            .filter(|&i| behaviors[i] == Behavior::Honest)
            .collect();
        if honest.is_empty() {
            return Err(crate::error::SimError::config(
                "adversary.fraction",
                "no honest nodes left",
            ));
        }
        Ok(Network {
            adjacency: topo.adjacency(),
            delays: topo.edges.iter().map(|e| delay_ticks(e.delay_ms)).collect(),
            behaviors,
            honest,
            topology: topo,
        })
    }

    pub fn n(&self) -> usize {
        self.topology.n
    }

    pub fn is_honest(&self, node: usize) -> bool {
        self.behaviors[node] == Behavior::Honest
    }

    /// Delay from `node` to its neighbor in adjacency slot `port`.
    pub fn port_delay(&self, node: usize, port: usize) -> SimTime {
        self.delays[self.adjacency[node][port].edge]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        let mut c = SimConfig::default();
        c.topology.n = 50;
        c.topology.degree = 6;
        c
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 1), sub_seed(1, 2));
        assert_ne!(sub_seed(1, 1), sub_seed(2, 1));
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
    }

    #[test]
    fn silent_fraction_rounds() {
        let mut c = cfg();
        c.adversary.mode = AdversaryMode::Silent;
        c.adversary.fraction = 0.04;
        let net = Network::build(&c).unwrap();
        assert_eq!(
            net.behaviors
                .iter()
                .filter(|b| **b == Behavior::Silent)
                .count(),
            2
        );
        assert_eq!(net.honest.len(), 48);
    }

    #[test]
    fn zero_fraction_is_all_honest() {
        let mut c = cfg();
        c.adversary.mode = AdversaryMode::Censor;
        let net = Network::build(&c).unwrap();
        let plain = Network::build(&cfg()).unwrap();
        assert_eq!(net.honest, plain.honest);
        assert_eq!(net.delays, plain.delays);
    }

    #[test]
    fn attackers_touch_every_honest_node() {
        let mut c = cfg();
        c.adversary.mode = AdversaryMode::ZeroDelayAttacker;
        c.adversary.count = 2;
        c.adversary.censored_fraction = 0.5;
        let net = Network::build(&c).unwrap();
        assert_eq!(net.n(), 52);
        assert_eq!(net.honest.len(), 50);
        for a in [50, 51] {
            assert_eq!(net.adjacency[a].len(), 50);
            assert!(net.adjacency[a].iter().all(|nb| net.delays[nb.edge] == 0));
        }
        assert!(net.adjacency[0].iter().any(|nb| nb.peer == 50));
    }
}
