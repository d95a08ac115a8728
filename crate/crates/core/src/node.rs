//! A protocol node: coding window, shared decoder, and one session per peer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codeword::{encode, Codeword};
use crate::decoder::{DecoderState, LinkId, LossEvent};
use crate::degree::DegreeDistribution;
use crate::error::{Error, Result};
use crate::fragment::{Fragment, FragmentStore};
use crate::params::ProtocolParams;
use crate::rate::RateController;
use crate::tx::{Digest, PayloadPool, Transaction};
use crate::txid::{HashKey, IdWidth};
use crate::window::CodingWindow;

/// Bytes of the count prefix on a loss report.
pub const LOSS_REPORT_HEADER_BYTES: usize = 2;
pub const KEY_EXCHANGE_BYTES: usize = 16;

/// Messages exchanged on a link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    /// Serialized codeword.
    Codeword(Vec<u8>),
    /// Serialized loss report.
    LossReport(Vec<u8>),
    KeyExchange(HashKey),
}

impl Message {
    pub fn wire_len(&self) -> usize {
        match self {
            Message::Codeword(b) | Message::LossReport(b) => b.len(),
            Message::KeyExchange(_) => KEY_EXCHANGE_BYTES,
        }
    }
}

/// Loss report body: big-endian u16 count followed by that many u64 seqnos.
pub fn encode_loss_report(seqnos: &[u64]) -> Vec<u8> {
    assert!(seqnos.len() <= u16::MAX as usize);
    let mut out = Vec::with_capacity(LOSS_REPORT_HEADER_BYTES + 8 * seqnos.len());
    out.extend_from_slice(&(seqnos.len() as u16).to_be_bytes());
    for s in seqnos {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn decode_loss_report(bytes: &[u8]) -> Result<Vec<u64>> {
    if bytes.len() < LOSS_REPORT_HEADER_BYTES {
        return Err(Error::parse("loss report", "missing count"));
    }
    let n = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    if bytes.len() != LOSS_REPORT_HEADER_BYTES + 8 * n {
        return Err(Error::parse(
            "loss report",
            format!("count {n} but {} bytes", bytes.len()),
        ));
    }
    Ok(bytes[2..]
        .chunks_exact(8)
        .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
        .collect())
}

/// How a node behaves toward its peers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Behavior {
    #[default]
    Honest,
    /// Keeps transactions whose censor mark falls below `fraction` out of
    /// its coding window.
    Censor { fraction: f64 },
    /// Receives but never sends codewords or loss reports.
    Silent,
}

/// Whether a transaction falls in the censored fraction. The mark is derived
/// from the content digest, so every party agrees on it.
pub fn is_censored(digest: &Digest, fraction: f64) -> bool {
    digest.unit_interval() < fraction
}

#[derive(Clone, Debug)]
struct Outbound {
    ctrl: RateController,
    peer_key: Option<HashKey>,
    next_seqno: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub bytes_down: u64,
    pub bytes_up: u64,
    pub codewords_sent: u64,
    pub codewords_received: u64,
    pub loss_events_reported: u64,
    pub loss_events_received: u64,
    pub parse_failures: u64,
}

/// One neighbor as seen from this node.
#[derive(Clone, Debug)]
pub struct PeerSession {
    /// Opaque neighbor identifier chosen by the caller.
    pub peer: usize,
    outbound: Outbound,
    inbound_link: LinkId,
    pub stats: SessionStats,
}

impl PeerSession {
    pub fn rate(&self) -> f64 {
        self.outbound.ctrl.rate()
    }

    pub fn controller(&self) -> &RateController {
        &self.outbound.ctrl
    }

    pub fn next_seqno(&self) -> u64 {
        self.outbound.next_seqno
    }

    pub fn inbound_link(&self) -> LinkId {
        self.inbound_link
    }
}

/// Outcome of a send slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SendSlot {
    pub message: Option<Message>,
    /// When the next slot for this session should fire.
    pub next_at: f64,
}

/// Everything a received codeword yielded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Received {
    /// Transactions this node had not seen before, in decode order.
    pub new_txs: Vec<Transaction>,
    /// Variable-size transactions completed by reassembly.
    pub reassembled: Vec<Vec<u8>>,
}

type TxValidator = Box<dyn Fn(&[u8]) -> bool + Send>;

struct Reassembly {
    store: FragmentStore,
    validator: TxValidator,
}

pub struct NodeState {
    params: ProtocolParams,
    behavior: Behavior,
    width: IdWidth,
    dist: DegreeDistribution,
    window: CodingWindow,
    decoder: DecoderState,
    sessions: Vec<PeerSession>,
    rng: ChaCha8Rng,
    reassembly: Option<Reassembly>,
    decoded_count: u64,
}

impl NodeState {
    pub fn new(params: ProtocolParams, behavior: Behavior, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(NodeState {
            width: params.id_width()?,
            dist: params.degree_distribution()?,
            window: CodingWindow::new(params.k),
            decoder: DecoderState::new(params.decoder_config()?),
            sessions: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            reassembly: None,
            decoded_count: 0,
            behavior,
            params,
        })
    }

    /// Enables reassembly of fragmented transactions. `validator` stands in
    /// for application-level transaction validation (signatures etc.).
    pub fn enable_reassembly(
        &mut self,
        capacity: usize,
        validator: impl Fn(&[u8]) -> bool + Send + 'static,
    ) {
        self.reassembly = Some(Reassembly {
            store: FragmentStore::new(capacity),
            validator: Box::new(validator),
        });
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn window(&self) -> &CodingWindow {
        &self.window
    }

    /// Shares decoded payload buffers with other nodes using `pool`.
    pub fn set_payload_pool(&mut self, pool: PayloadPool) {
        self.decoder.set_payload_pool(pool);
    }

    pub fn decoder(&self) -> &DecoderState {
        &self.decoder
    }

    pub fn sessions(&self) -> &[PeerSession] {
        &self.sessions
    }

    pub fn session(&self, idx: usize) -> &PeerSession {
        &self.sessions[idx]
    }

    /// Transactions obtained from peers (excluding locally created ones).
    pub fn decoded_count(&self) -> u64 {
        self.decoded_count
    }

    pub fn has_seen(&self, digest: &Digest) -> bool {
        self.window.has_seen(digest)
    }

    /// Opens a session with `peer`. Returns its index and the key exchange
    /// message carrying the secret the peer must use for codewords it sends us.
    pub fn open_session(&mut self, peer: usize) -> (usize, Message) {
        let key = HashKey::random(&mut self.rng);
        let inbound_link = self.decoder.add_link(key);
        let ctrl = RateController::new(self.params.rate_params(), self.params.initial_rate())
            .expect("rate parameters validated at construction");
        self.sessions.push(PeerSession {
            peer,
            outbound: Outbound {
                ctrl,
                peer_key: None,
                next_seqno: 0,
            },
            inbound_link,
            stats: SessionStats::default(),
        });
        (self.sessions.len() - 1, Message::KeyExchange(key))
    }

    pub fn on_key_exchange(&mut self, session: usize, key: HashKey) {
        let s = &mut self.sessions[session];
        s.stats.bytes_down += KEY_EXCHANGE_BYTES as u64;
        s.outbound.peer_key = Some(key);
    }

    /// Offers a freshly created transaction to the window. Returns anything
    /// it unlocked in the decoder.
    pub fn on_local_transaction(&mut self, tx: Transaction) -> Result<Received> {
        if tx.len() != self.params.tx_len {
            return Err(Error::config(format!(
                "transaction is {} bytes, expected {}",
                tx.len(),
                self.params.tx_len
            )));
        }
        if !self.offer(tx.clone()) {
            return Ok(Received::default());
        }
        let unlocked = self.decoder.add_known(tx);
        Ok(self.absorb(unlocked))
    }

    /// Produces at most one codeword for `session` and schedules the next slot.
    pub fn on_send_slot(&mut self, session: usize, now: f64) -> SendSlot {
        let s = &mut self.sessions[session];
        let message = match (self.behavior, s.outbound.peer_key) {
            (Behavior::Silent, _) | (_, None) => None,
            (_, Some(key)) => match encode(
                &self.window,
                &self.dist,
                &mut self.rng,
                &key,
                self.width,
                s.outbound.next_seqno,
            ) {
                Ok(cw) => {
                    s.outbound.next_seqno += 1;
                    s.outbound.ctrl.on_codeword_sent();
                    let bytes = cw.to_bytes(self.width);
                    s.stats.bytes_up += bytes.len() as u64;
                    s.stats.codewords_sent += 1;
                    Some(Message::Codeword(bytes))
                }
                Err(_) => None,
            },
        };
        let next_at = s.outbound.ctrl.next_send_time(now);
        SendSlot { message, next_at }
    }

    pub fn on_receive_codeword(&mut self, session: usize, bytes: &[u8], now: f64) -> Received {
        let s = &mut self.sessions[session];
        s.stats.bytes_down += bytes.len() as u64;
        s.stats.codewords_received += 1;
        let link = s.inbound_link;
        let cw = match Codeword::from_bytes(bytes, self.params.tx_len, self.width) {
            Ok(cw) => cw,
            Err(_) => {
                s.stats.parse_failures += 1;
                return Received::default();
            }
        };
        let decoded = self.decoder.ingest(link, cw, now);
        self.absorb(decoded)
    }

    /// Scans for codewords that missed the decoding timeout and batches one
    /// loss report per inbound link.
    pub fn on_timeout_tick(&mut self, now: f64) -> Vec<(usize, Message)> {
        let events = self.decoder.scan_timeouts(now, self.params.tau);
        if self.behavior == Behavior::Silent || events.is_empty() {
            return Vec::new();
        }
        let mut per_session: Vec<Vec<u64>> = vec![Vec::new(); self.sessions.len()];
        let link_to_session = |link: LinkId, sessions: &[PeerSession]| {
            sessions.iter().position(|s| s.inbound_link == link)
        };
        for LossEvent { link, seqno, .. } in events {
            if let Some(i) = link_to_session(link, &self.sessions) {
                per_session[i].push(seqno);
            }
        }
        let mut out = Vec::new();
        for (i, seqnos) in per_session.into_iter().enumerate() {
            for chunk in seqnos.chunks(u16::MAX as usize) {
                let body = encode_loss_report(chunk);
                let s = &mut self.sessions[i];
                s.stats.bytes_up += body.len() as u64;
                s.stats.loss_events_reported += chunk.len() as u64;
                out.push((i, Message::LossReport(body)));
            }
        }
        out
    }

    /// Earliest time a timeout scan could produce a loss event.
    pub fn next_timeout(&mut self) -> Option<f64> {
        self.decoder.next_deadline(self.params.tau)
    }

    /// Applies a loss report from the peer; returns the number of events.
    pub fn on_loss_report(&mut self, session: usize, bytes: &[u8]) -> Result<u64> {
        let s = &mut self.sessions[session];
        s.stats.bytes_down += bytes.len() as u64;
        let seqnos = match decode_loss_report(bytes) {
            Ok(v) => v,
            Err(e) => {
                s.stats.parse_failures += 1;
                return Err(e);
            }
        };
        let n = seqnos.len() as u64;
        s.stats.loss_events_received += n;
        s.outbound.ctrl.on_loss_report(n);
        Ok(n)
    }

    /// Dispatches any message received from the peer of `session`.
    pub fn on_message(&mut self, session: usize, msg: &Message, now: f64) -> Received {
        match msg {
            Message::Codeword(b) => self.on_receive_codeword(session, b, now),
            Message::LossReport(b) => {
                let _ = self.on_loss_report(session, b);
                Received::default()
            }
            Message::KeyExchange(k) => {
                self.on_key_exchange(session, *k);
                Received::default()
            }
        }
    }

    /// Inserts into the coding window unless censored; returns whether the
    /// transaction was new to this node.
    fn offer(&mut self, tx: Transaction) -> bool {
        if let Behavior::Censor { fraction } = self.behavior {
            if is_censored(&tx.digest(), fraction) {
                return self.window.note_seen(tx.digest());
            }
        }
        self.window.insert(tx)
    }

    fn absorb(&mut self, decoded: Vec<Transaction>) -> Received {
        let mut out = Received::default();
        for tx in decoded {
            if !self.offer(tx.clone()) {
                continue;
            }
            self.decoded_count += 1;
            if let Some(r) = &mut self.reassembly {
                if let Ok(frag) = Fragment::from_bytes(tx.payload(), self.params.tx_len) {
                    out.reassembled
                        .extend(r.store.reassemble_validated(frag, &*r.validator));
                }
            }
            out.new_txs.push(tx);
        }
        out
    }
}
