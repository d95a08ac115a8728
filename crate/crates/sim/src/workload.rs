//! Poisson transaction workload and the registry of everything created.

use std::collections::HashMap;

use codedcast_core::node::is_censored;
use codedcast_core::{fragment, Digest, Transaction};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::network::{streams, sub_seed};
use crate::queue::{secs, to_ticks_ceil, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub struct TxRecord {
    pub created: SimTime,
    pub origin: usize,
    /// Created inside the measurement interval.
    pub measured: bool,
    pub censored: bool,
    /// Size of the transaction itself (before fragmentation).
    pub bytes: usize,
}

/// Everything created during a run, addressable by content digest.
#[derive(Debug, Default)]
pub struct Registry {
    pub txs: Vec<TxRecord>,
    /// Digest of each broadcast unit (a transaction or one of its fragments).
    units: HashMap<Digest, u32>,
    /// Digest of each whole transaction, for fragmented mode.
    whole: HashMap<Digest, u32>,
}

impl Registry {
    pub fn by_unit(&self, d: &Digest) -> Option<usize> {
        self.units.get(d).map(|&i| i as usize)
    }

    pub fn by_whole(&self, d: &Digest) -> Option<usize> {
        self.whole.get(d).map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn measured(&self) -> impl Iterator<Item = (usize, &TxRecord)> {
        self.txs.iter().enumerate().filter(|(_, r)| r.measured)
    }
}

/// One created transaction ready to hand to its origin node.
#[derive(Clone, Debug)]
pub struct NewTx {
    pub index: usize,
    pub origin: usize,
    /// Broadcast units: the transaction itself, or its fragments.
    pub units: Vec<Transaction>,
}

pub struct Workload {
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    origins: Vec<usize>,
    tx_len: usize,
    sizes: Option<(Vec<usize>, WeightedIndex<f64>)>,
    fragment_size: usize,
    censored_fraction: f64,
    warmup: SimTime,
    horizon: SimTime,
    pub registry: Registry,
}

impl Workload {
    pub fn new(cfg: &SimConfig, origins: Vec<usize>) -> Result<Self> {
        let sizes = match &cfg.workload.size_histogram {
            Some(h) => {
                let w = WeightedIndex::new(h.iter().map(|&(_, w)| w))
                    .map_err(|e| SimError::config("workload.size_histogram", e.to_string()))?;
                Some((h.iter().map(|&(s, _)| s).collect(), w))
            }
            None => None,
        };
        Ok(Workload {
            rng: ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, streams::WORKLOAD)),
            gap: Exp::new(cfg.workload.tps)
                .map_err(|e| SimError::config("workload.tps", e.to_string()))?,
            origins,
            tx_len: cfg.protocol.tx_len,
            sizes,
            fragment_size: cfg.protocol.fragment_size,
            censored_fraction: cfg.adversary.censored_fraction,
            warmup: to_ticks_ceil(cfg.warmup_s()),
            horizon: to_ticks_ceil(cfg.duration_s),
            registry: Registry::default(),
        })
    }

    /// Time until the next creation.
    pub fn next_gap(&mut self) -> SimTime {
        to_ticks_ceil(self.gap.sample(&mut self.rng)).max(1)
    }

    pub fn create(&mut self, now: SimTime) -> NewTx {
        let origin = self.origins[self.rng.random_range(0..self.origins.len())];
        let index = self.registry.txs.len();
        let created_at = secs(now);
        let (bytes, units, whole_digest) = match &self.sizes {
            None => {
                let mut payload = vec![0u8; self.tx_len];
                self.rng.fill_bytes(&mut payload);
                let tx = Transaction::new(payload, created_at);
                (self.tx_len, vec![tx], None)
            }
            Some((sizes, w)) => {
                let size = sizes[w.sample(&mut self.rng)];
                let mut payload = vec![0u8; size];
                self.rng.fill_bytes(&mut payload);
                let units = fragment(&payload, self.fragment_size)
                    .expect("fragment size validated")
                    .iter()
                    .map(|f| Transaction::new(f.to_bytes(), created_at))
                    .collect();
                (size, units, Some(Digest::of(&payload)))
            }
        };
        // The censor mark follows the unit a censor actually sees.
        let censored = units
            .iter()
            .any(|u: &Transaction| is_censored(&u.digest(), self.censored_fraction));
        for u in &units {
            self.registry.units.insert(u.digest(), index as u32);
        }
        if let Some(d) = whole_digest {
            self.registry.whole.insert(d, index as u32);
        }
        self.registry.txs.push(TxRecord {
            created: now,
            origin,
            measured: now >= self.warmup && now < self.horizon,
            censored,
            bytes,
        });
        NewTx {
            index,
            origin,
            units,
        }
    }
}
