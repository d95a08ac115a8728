//! Codewords: XOR sums of window transactions plus their keyed short IDs.

use rand::Rng;

use crate::degree::DegreeDistribution;
use crate::error::{Error, Result};
use crate::tx::{xor_into, Transaction};
use crate::txid::{txid, HashKey, IdWidth, TransactionId};
use crate::window::CodingWindow;

/// Fixed header bytes: 8-byte seqno and 2-byte degree.
pub const CODEWORD_HEADER_BYTES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codeword {
    pub seqno: u64,
    pub ids: Vec<TransactionId>,
    pub payload: Vec<u8>,
}

impl Codeword {
    /// XORs `sources` together and labels them with IDs under `key`.
    pub fn from_sources(
        seqno: u64,
        sources: &[&Transaction],
        key: &HashKey,
        width: IdWidth,
    ) -> Self {
        assert!(!sources.is_empty(), "codeword needs at least one source");
        let mut payload = sources[0].payload().to_vec();
        for tx in &sources[1..] {
            xor_into(&mut payload, tx.payload());
        }
        let ids = sources
            .iter()
            .map(|tx| txid(key, tx.payload(), width))
            .collect();
        Codeword {
            seqno,
            ids,
            payload,
        }
    }

    pub fn degree(&self) -> usize {
        self.ids.len()
    }

    pub fn wire_len(&self, width: IdWidth) -> usize {
        wire_len(self.degree(), width, self.payload.len())
    }

    /// Big-endian layout: seqno (8) | degree (2) | ids (h each) | payload (t).
    pub fn to_bytes(&self, width: IdWidth) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len(width));
        out.extend_from_slice(&self.seqno.to_be_bytes());
        out.extend_from_slice(&(self.ids.len() as u16).to_be_bytes());
        for id in &self.ids {
            id.write_be(width, &mut out);
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], tx_len: usize, width: IdWidth) -> Result<Self> {
        if bytes.len() < CODEWORD_HEADER_BYTES + tx_len {
            return Err(Error::parse(
                "codeword",
                format!("{} bytes is too short", bytes.len()),
            ));
        }
        let seqno = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let degree = u16::from_be_bytes(bytes[8..10].try_into().unwrap()) as usize;
        if degree == 0 {
            return Err(Error::parse("codeword", "degree 0"));
        }
        let expected = wire_len(degree, width, tx_len);
        if bytes.len() != expected {
            return Err(Error::parse(
                "codeword",
                format!(
                    "degree {degree} needs {expected} bytes, got {}",
                    bytes.len()
                ),
            ));
        }
        let h = width.bytes();
        let id_end = CODEWORD_HEADER_BYTES + degree * h;
        let ids = bytes[CODEWORD_HEADER_BYTES..id_end]
            .chunks_exact(h)
            .map(TransactionId::read_be)
            .collect();
        Ok(Codeword {
            seqno,
            ids,
            payload: bytes[id_end..].to_vec(),
        })
    }
}

pub fn wire_len(degree: usize, width: IdWidth, tx_len: usize) -> usize {
    CODEWORD_HEADER_BYTES + degree * width.bytes() + tx_len
}

/// Draws one codeword from the window: a degree from `dist` clamped to the
/// window population, then that many distinct entries chosen uniformly.
pub fn encode<R: Rng + ?Sized>(
    window: &CodingWindow,
    dist: &DegreeDistribution,
    rng: &mut R,
    key: &HashKey,
    width: IdWidth,
    seqno: u64,
) -> Result<Codeword> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let degree = dist.sample(rng).min(window.len());
    let picks = sample_indices(rng, window.len(), degree);
    let sources: Vec<&Transaction> = picks.iter().map(|&i| window.get(i).unwrap()).collect();
    Ok(Codeword::from_sources(seqno, &sources, key, width))
}

/// `amount` distinct indices from `0..len` via a partial Fisher-Yates shuffle.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, len: usize, amount: usize) -> Vec<usize> {
    assert!(amount <= len);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..amount {
        let j = rng.random_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(amount);
    idx
}
