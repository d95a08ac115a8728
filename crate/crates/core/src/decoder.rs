//! Peeling decoder shared by all inbound links of a node.
//!
//! Codewords from every peer land in one bipartite graph. Each link has its
//! own keyed ID space, so a transaction learned from one link is re-hashed
//! under every other link's key before it can peel their codewords. Any
//! codeword that peels down to a single unknown must hash to the ID left in
//! its header, otherwise it is dropped; this is what keeps forged or
//! collision-corrupted codewords from polluting the decoded set.

use std::collections::{HashMap, VecDeque};

use crate::codeword::Codeword;
use crate::error::{Error, Result};
use crate::tx::{xor_into, Digest, PayloadPool, Transaction};
use crate::txid::{txid, HashKey, IdWidth, TransactionId};

/// Index of an inbound link within one decoder.
pub type LinkId = usize;

const TIME_SLACK: f64 = 1e-9;

/// Largest peeling window; keeps 32-bit serials in the ID index unambiguous.
pub const MAX_PEELING_WINDOW: usize = 1 << 30;

/// Default size of the peeling window.
pub const DEFAULT_PEELING_WINDOW: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderConfig {
    pub tx_len: usize,
    pub id_width: IdWidth,
    /// Number of most recently decoded transactions usable for peeling (`m`).
    pub peeling_window: usize,
    /// Undecoded codewords kept per link before the oldest is dropped.
    pub pending_cap: usize,
}

impl DecoderConfig {
    pub fn new(
        tx_len: usize,
        id_width: IdWidth,
        peeling_window: usize,
        pending_cap: usize,
    ) -> Result<Self> {
        if tx_len == 0 {
            return Err(Error::config("transaction length must be positive"));
        }
        if peeling_window == 0 || peeling_window > MAX_PEELING_WINDOW {
            return Err(Error::config(format!(
                "peeling window must be in 1..={MAX_PEELING_WINDOW}, got {peeling_window}"
            )));
        }
        if pending_cap == 0 {
            return Err(Error::config("pending codeword cap must be positive"));
        }
        Ok(DecoderConfig {
            tx_len,
            id_width,
            peeling_window,
            pending_cap,
        })
    }
}

/// A received codeword that was not decoded within the timeout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEvent {
    pub link: LinkId,
    pub seqno: u64,
    pub detected_at: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecoderStats {
    pub ingested: u64,
    /// Codewords whose sources were all known on arrival or that peeled to nothing.
    pub redundant: u64,
    /// Codewords with duplicate header IDs or a wrong payload length.
    pub malformed: u64,
    /// Degree-one payloads whose hash disagreed with the header.
    pub corrupted: u64,
    pub decoded: u64,
    pub evicted: u64,
    pub loss_events: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct CwRef {
    slot: u32,
    uid: u64,
}

#[derive(Debug)]
struct Pending {
    uid: u64,
    link: LinkId,
    seqno: u64,
    unresolved: Vec<TransactionId>,
    payload: Vec<u8>,
    reported: bool,
}

#[derive(Debug)]
struct LinkState {
    key: HashKey,
    index: IdIndex,
    waiting: HashMap<TransactionId, Vec<CwRef>>,
    pending_fifo: VecDeque<CwRef>,
    live_pending: usize,
}

impl LinkState {
    fn new(key: HashKey, width: IdWidth) -> Self {
        LinkState {
            key,
            index: IdIndex::new(width),
            waiting: HashMap::new(),
            pending_fifo: VecDeque::new(),
            live_pending: 0,
        }
    }
}

/// Per-link map from short ID to serial in the peeling window. At widths of
/// up to four bytes both are stored as `u32`, halving the table; serials are
/// then kept modulo 2^32 and resolved against the oldest live serial, which
/// is unambiguous because the window is far smaller than 2^32.
#[derive(Debug)]
enum IdIndex {
    Narrow(HashMap<u32, u32>),
    Wide(HashMap<u64, u64>),
}

impl IdIndex {
    fn new(width: IdWidth) -> Self {
        if width.bytes() <= 4 {
            IdIndex::Narrow(HashMap::new())
        } else {
            IdIndex::Wide(HashMap::new())
        }
    }

    fn len(&self) -> usize {
        match self {
            IdIndex::Narrow(m) => m.len(),
            IdIndex::Wide(m) => m.len(),
        }
    }

    /// Serial stored for `id`; `first` is the oldest serial still live.
    fn get(&self, id: TransactionId, first: u64) -> Option<u64> {
        match self {
            IdIndex::Narrow(m) => m
                .get(&(id.0 as u32))
                .map(|&s| first + u64::from(s.wrapping_sub(first as u32))),
            IdIndex::Wide(m) => m.get(&id.0).copied(),
        }
    }

    fn insert(&mut self, id: TransactionId, serial: u64) {
        match self {
            IdIndex::Narrow(m) => {
                m.insert(id.0 as u32, serial as u32);
            }
            IdIndex::Wide(m) => {
                m.insert(id.0, serial);
            }
        }
    }

    /// Removes `id` if it still points at `serial` rather than a newer
    /// transaction that shares the ID.
    fn remove_if(&mut self, id: TransactionId, serial: u64) {
        match self {
            IdIndex::Narrow(m) => {
                if m.get(&(id.0 as u32)) == Some(&(serial as u32)) {
                    m.remove(&(id.0 as u32));
                }
            }
            IdIndex::Wide(m) => {
                if m.get(&id.0) == Some(&serial) {
                    m.remove(&id.0);
                }
            }
        }
    }
}

struct Recent {
    serial: u64,
    tx: Transaction,
}

pub struct DecoderState {
    config: DecoderConfig,
    links: Vec<LinkState>,
    slots: Vec<Option<Pending>>,
    free_slots: Vec<u32>,
    next_uid: u64,
    timeouts: VecDeque<(f64, CwRef)>,
    recent: VecDeque<Recent>,
    known: HashMap<Digest, u64>,
    next_serial: u64,
    stats: DecoderStats,
    pool: Option<PayloadPool>,
}

impl DecoderState {
    pub fn new(config: DecoderConfig) -> Self {
        DecoderState {
            config,
            links: Vec::new(),
            slots: Vec::new(),
            free_slots: Vec::new(),
            next_uid: 0,
            timeouts: VecDeque::new(),
            recent: VecDeque::new(),
            known: HashMap::new(),
            next_serial: 0,
            stats: DecoderStats::default(),
            pool: None,
        }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    /// Backs decoded transactions with buffers from `pool`.
    pub fn set_payload_pool(&mut self, pool: PayloadPool) {
        self.pool = Some(pool);
    }

    /// Registers an inbound link whose peer will label codewords with `key`.
    pub fn add_link(&mut self, key: HashKey) -> LinkId {
        self.links.push(LinkState::new(key, self.config.id_width));
        self.links.len() - 1
    }

    pub fn link_key(&self, link: LinkId) -> HashKey {
        self.links[link].key
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Entries currently usable for peeling on `link`.
    pub fn index_len(&self, link: LinkId) -> usize {
        self.links[link].index.len()
    }

    pub fn pending_len(&self) -> usize {
        self.slots.len() - self.free_slots.len()
    }

    pub fn pending_on_link(&self, link: LinkId) -> usize {
        self.links[link].live_pending
    }

    /// Whether `digest` is among the last `m` known transactions.
    pub fn knows(&self, digest: &Digest) -> bool {
        self.known.contains_key(digest)
    }

    /// Adds a transaction obtained out of band (e.g. created locally). It can
    /// unlock pending codewords, which are returned.
    pub fn add_known(&mut self, tx: Transaction) -> Vec<Transaction> {
        let mut out = Vec::new();
        if self.known.contains_key(&tx.digest()) {
            return out;
        }
        self.learn_cascade(tx, &mut out);
        // The seed itself is not a decode.
        out.remove(0);
        out
    }

    /// Feeds one codeword received on `link` at time `now`; returns every
    /// transaction decoded as a consequence, in decode order.
    pub fn ingest(&mut self, link: LinkId, mut cw: Codeword, now: f64) -> Vec<Transaction> {
        self.stats.ingested += 1;
        let mut out = Vec::new();
        if cw.payload.len() != self.config.tx_len || cw.ids.is_empty() || has_duplicates(&cw.ids) {
            self.stats.malformed += 1;
            return out;
        }

        let state = &self.links[link];
        let first = self.recent.front().map_or(0, |r| r.serial);
        let mut unresolved = Vec::with_capacity(cw.ids.len());
        for id in &cw.ids {
            match state.index.get(*id, first) {
                Some(serial) => xor_into(
                    &mut cw.payload,
                    self.recent[(serial - first) as usize].tx.payload(),
                ),
                None => unresolved.push(*id),
            }
        }

        match unresolved.len() {
            0 => self.stats.redundant += 1,
            1 => {
                if let Some(tx) = self.validate(link, unresolved[0], cw.payload) {
                    self.learn_cascade(tx, &mut out);
                }
            }
            _ => self.insert_pending(link, cw.seqno, unresolved, cw.payload, now),
        }
        out
    }

    /// Degree-one check: accept the payload only if it hashes to the remaining ID.
    pub fn validate_degree1(&self, link: LinkId, remaining: TransactionId, payload: &[u8]) -> bool {
        txid(&self.links[link].key, payload, self.config.id_width) == remaining
    }

    fn validate(
        &mut self,
        link: LinkId,
        remaining: TransactionId,
        payload: Vec<u8>,
    ) -> Option<Transaction> {
        if self.validate_degree1(link, remaining, &payload) {
            let tx = Transaction::decoded(payload);
            Some(match &self.pool {
                Some(pool) => pool.intern(tx),
                None => tx,
            })
        } else {
            self.stats.corrupted += 1;
            None
        }
    }

    /// Reports every pending codeword that has waited at least `tau` seconds
    /// and was not reported before. Reported codewords stay decodable.
    pub fn scan_timeouts(&mut self, now: f64, tau: f64) -> Vec<LossEvent> {
        let mut events = Vec::new();
        while let Some(&(arrival, r)) = self.timeouts.front() {
            // 1 ns slack so a scan fired exactly at `next_deadline` always fires.
            if now + TIME_SLACK < arrival + tau {
                break;
            }
            self.timeouts.pop_front();
            if let Some(p) = self.get_mut(r) {
                if !p.reported {
                    p.reported = true;
                    events.push(LossEvent {
                        link: p.link,
                        seqno: p.seqno,
                        detected_at: now,
                    });
                }
            }
        }
        self.stats.loss_events += events.len() as u64;
        events
    }

    /// Earliest time at which `scan_timeouts` would report something.
    pub fn next_deadline(&mut self, tau: f64) -> Option<f64> {
        while let Some(&(arrival, r)) = self.timeouts.front() {
            if self.get(r).is_some_and(|p| !p.reported) {
                return Some(arrival + tau);
            }
            self.timeouts.pop_front();
        }
        None
    }

    fn get(&self, r: CwRef) -> Option<&Pending> {
        self.slots[r.slot as usize]
            .as_ref()
            .filter(|p| p.uid == r.uid)
    }

    fn get_mut(&mut self, r: CwRef) -> Option<&mut Pending> {
        self.slots[r.slot as usize]
            .as_mut()
            .filter(|p| p.uid == r.uid)
    }

    fn insert_pending(
        &mut self,
        link: LinkId,
        seqno: u64,
        unresolved: Vec<TransactionId>,
        payload: Vec<u8>,
        now: f64,
    ) {
        let uid = self.next_uid;
        self.next_uid += 1;
        let pending = Pending {
            uid,
            link,
            seqno,
            unresolved,
            payload,
            reported: false,
        };
        let slot = match self.free_slots.pop() {
            Some(s) => {
                self.slots[s as usize] = Some(pending);
                s
            }
            None => {
                self.slots.push(Some(pending));
                (self.slots.len() - 1) as u32
            }
        };
        let r = CwRef { slot, uid };
        let state = &mut self.links[link];
        for id in &self.slots[slot as usize].as_ref().unwrap().unresolved {
            state.waiting.entry(*id).or_default().push(r);
        }
        state.pending_fifo.push_back(r);
        state.live_pending += 1;
        self.timeouts.push_back((now, r));

        let cap = self.config.pending_cap;
        while self.links[link].live_pending > cap {
            let Some(old) = self.links[link].pending_fifo.pop_front() else {
                break;
            };
            if self.get(old).is_some() {
                self.remove_pending(old);
                self.stats.evicted += 1;
            }
        }
        let state = &mut self.links[link];
        if state.pending_fifo.len() > 2 * cap + 16 {
            let slots = &self.slots;
            state.pending_fifo.retain(|r| {
                slots[r.slot as usize]
                    .as_ref()
                    .is_some_and(|p| p.uid == r.uid)
            });
        }
    }

    fn remove_pending(&mut self, r: CwRef) -> Option<Pending> {
        let p = self.slots[r.slot as usize].take()?;
        self.free_slots.push(r.slot);
        let state = &mut self.links[p.link];
        state.live_pending -= 1;
        for id in &p.unresolved {
            if let Some(list) = state.waiting.get_mut(id) {
                list.retain(|x| *x != r);
                if list.is_empty() {
                    state.waiting.remove(id);
                }
            }
        }
        Some(p)
    }

    /// Learns `seed` and everything it transitively unlocks; pushes each newly
    /// learned transaction to `out` (the seed first).
    fn learn_cascade(&mut self, seed: Transaction, out: &mut Vec<Transaction>) {
        let mut queue = VecDeque::from([seed]);
        while let Some(tx) = queue.pop_front() {
            if self.known.contains_key(&tx.digest()) {
                continue;
            }
            let ids = self.remember(&tx);
            out.push(tx.clone());
            for (link, id) in ids.into_iter().enumerate() {
                let Some(refs) = self.links[link].waiting.remove(&id) else {
                    continue;
                };
                for r in refs {
                    let Some(p) = self.get_mut(r) else { continue };
                    xor_into(&mut p.payload, tx.payload());
                    p.unresolved.retain(|x| *x != id);
                    match p.unresolved.len() {
                        0 => {
                            self.remove_pending(r);
                            self.stats.redundant += 1;
                        }
                        1 => {
                            let p = self.remove_pending(r).unwrap();
                            if let Some(next) = self.validate(link, p.unresolved[0], p.payload) {
                                queue.push_back(next);
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    /// Inserts `tx` into the peeling window of every link, evicting the oldest
    /// entry once the window is full. Returns its ID under each link's key.
    fn remember(&mut self, tx: &Transaction) -> Vec<TransactionId> {
        let serial = self.next_serial;
        self.next_serial += 1;
        let width = self.config.id_width;
        let ids: Vec<TransactionId> = self
            .links
            .iter_mut()
            .map(|l| {
                let id = txid(&l.key, tx.payload(), width);
                l.index.insert(id, serial);
                id
            })
            .collect();
        self.known.insert(tx.digest(), serial);
        self.recent.push_back(Recent {
            serial,
            tx: tx.clone(),
        });
        self.stats.decoded += 1;

        while self.recent.len() > self.config.peeling_window {
            let old = self.recent.pop_front().unwrap();
            let digest = old.tx.digest();
            if self.known.get(&digest) == Some(&old.serial) {
                self.known.remove(&digest);
            }
            // IDs are recomputed rather than stored; a link added after
            // `old` was learned simply has no entry for it.
            for l in &mut self.links {
                let id = txid(&l.key, old.tx.payload(), width);
                l.index.remove_if(id, old.serial);
            }
        }
        ids
    }
}

fn has_duplicates(ids: &[TransactionId]) -> bool {
    if ids.len() <= 16 {
        ids.iter()
            .enumerate()
            .any(|(i, a)| ids[i + 1..].contains(a))
    } else {
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        sorted.windows(2).any(|w| w[0] == w[1])
    }
}
