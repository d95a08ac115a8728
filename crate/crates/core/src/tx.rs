use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use sha2::{Digest as _, Sha256};

/// Full-content SHA-256 digest of a transaction or fragment.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    /// Interprets the first eight bytes as a uniform value in `[0, 1)`.
    pub fn unit_interval(&self) -> f64 {
        let mut head = [0u8; 8];
        head.copy_from_slice(&self.0[..8]);
        (u64::from_be_bytes(head) >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..")
    }
}

/// An opaque fixed-length transaction. Cloning is cheap.
#[derive(Clone)]
pub struct Transaction {
    payload: Arc<[u8]>,
    digest: Digest,
    /// Creation time in seconds; `NaN` when unknown (e.g. decoded from the wire).
    pub created_at: f64,
}

impl Transaction {
    pub fn new(payload: impl Into<Arc<[u8]>>, created_at: f64) -> Self {
        let payload = payload.into();
        let digest = Digest::of(&payload);
        Transaction {
            payload,
            digest,
            created_at,
        }
    }

    /// A transaction recovered by the decoder, whose creation time is not known locally.
    pub fn decoded(payload: Vec<u8>) -> Self {
        Self::new(payload, f64::NAN)
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }
}

impl PartialEq for Transaction {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest && self.payload == other.payload
    }
}

impl Eq for Transaction {}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("digest", &self.digest)
            .field("len", &self.payload.len())
            .field("created_at", &self.created_at)
            .finish()
    }
}

/// Shares payload buffers between decoders that learn the same
/// transactions, such as all nodes of one simulation. Buffers are kept for
/// the life of the pool.
#[derive(Clone, Debug, Default)]
pub struct PayloadPool(Arc<Mutex<HashMap<Digest, Arc<[u8]>>>>);

impl PayloadPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `tx` backed by the pooled buffer for its content, adding the
    /// buffer if it is new.
    pub fn intern(&self, mut tx: Transaction) -> Transaction {
        let mut map = self.0.lock().expect("payload pool lock");
        let shared = map.entry(tx.digest).or_insert_with(|| tx.payload.clone());
        if shared[..] == tx.payload[..] {
            tx.payload = shared.clone();
        }
        tx
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("payload pool lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// XORs `src` into `dst` in place. Both must have the same length.
#[inline]
pub fn xor_into(dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    let mut d = dst.chunks_exact_mut(8);
    let mut s = src.chunks_exact(8);
    for (a, b) in (&mut d).zip(&mut s) {
        let x =
            u64::from_ne_bytes(a.try_into().unwrap()) ^ u64::from_ne_bytes(b.try_into().unwrap());
        a.copy_from_slice(&x.to_ne_bytes());
    }
    for (a, b) in d.into_remainder().iter_mut().zip(s.remainder()) {
        *a ^= b;
    }
}
