//! Keyed short transaction identifiers.
//!
//! Every incoming link gets its own 16-byte secret. The sending peer uses it to
//! compute the short IDs it puts in codeword headers, so an ID collision
//! engineered against one link is useless on any other.

use std::fmt;
use std::hash::Hasher;

use rand::Rng;
use siphasher::sip::SipHasher24;

use crate::error::{Error, Result};

/// Default short-ID width in bytes.
pub const DEFAULT_ID_BYTES: usize = 4;

/// A per-link secret for the keyed ID function.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashKey(pub [u8; 16]);

impl HashKey {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; 16];
        rng.fill(&mut key);
        HashKey(key)
    }
}

impl fmt::Debug for HashKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashKey({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

/// Width of a short ID on the wire, 1..=8 bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IdWidth(u8);

impl IdWidth {
    pub fn new(bytes: usize) -> Result<Self> {
        if (1..=8).contains(&bytes) {
            Ok(IdWidth(bytes as u8))
        } else {
            Err(Error::config(format!(
                "id width must be 1..=8 bytes, got {bytes}"
            )))
        }
    }

    pub fn bytes(self) -> usize {
        self.0 as usize
    }

    pub fn bits(self) -> u32 {
        8 * self.0 as u32
    }

    fn mask(self) -> u64 {
        if self.0 == 8 {
            u64::MAX
        } else {
            (1u64 << (8 * self.0)) - 1
        }
    }
}

impl Default for IdWidth {
    fn default() -> Self {
        IdWidth(DEFAULT_ID_BYTES as u8)
    }
}

/// Short transaction ID, stored right-aligned in a `u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransactionId(pub u64);

impl TransactionId {
    pub fn write_be(self, width: IdWidth, out: &mut Vec<u8>) {
        let bytes = self.0.to_be_bytes();
        out.extend_from_slice(&bytes[8 - width.bytes()..]);
    }

    pub fn read_be(buf: &[u8]) -> Self {
        debug_assert!(buf.len() <= 8);
        let mut bytes = [0u8; 8];
        bytes[8 - buf.len()..].copy_from_slice(buf);
        TransactionId(u64::from_be_bytes(bytes))
    }
}

/// SipHash-2-4 of `payload` under `key`, truncated to `width`.
pub fn txid(key: &HashKey, payload: &[u8], width: IdWidth) -> TransactionId {
    let mut h = SipHasher24::new_with_key(&key.0);
    h.write(payload);
    TransactionId(h.finish() & width.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(seed: u8) -> HashKey {
        let mut k = [0u8; 16];
        for (i, b) in k.iter_mut().enumerate() {
            *b = seed.wrapping_add(i as u8);
        }
        HashKey(k)
    }

    #[test]
    fn deterministic() {
        let w = IdWidth::default();
        assert_eq!(txid(&key(1), b"hello", w), txid(&key(1), b"hello", w));
        assert_ne!(txid(&key(1), b"hello", w), txid(&key(2), b"hello", w));
    }

    #[test]
    fn pinned_vectors() {
        // Key 00..0f is the SipHash reference key; the empty-message output
        // 0x726fdb47dd0e0e31 is the first published SipHash-2-4 test vector.
        let k = key(0);
        let full = txid(&k, b"", IdWidth::new(8).unwrap());
        assert_eq!(full.0, 0x726f_db47_dd0e_0e31);
        assert_eq!(txid(&k, b"", IdWidth::new(4).unwrap()).0, 0xdd0e_0e31);
        assert_eq!(txid(&k, b"", IdWidth::new(1).unwrap()).0, 0x31);
    }

    #[test]
    fn width_bounds() {
        assert!(IdWidth::new(0).is_err());
        assert!(IdWidth::new(9).is_err());
        let w = IdWidth::new(2).unwrap();
        for i in 0..200u32 {
            assert!(txid(&key(3), &i.to_be_bytes(), w).0 < 1 << 16);
        }
    }

    #[test]
    fn wire_roundtrip() {
        let w = IdWidth::new(3).unwrap();
        let id = TransactionId(0x00ab_cdef);
        let mut buf = Vec::new();
        id.write_be(w, &mut buf);
        assert_eq!(buf, [0xab, 0xcd, 0xef]);
        assert_eq!(TransactionId::read_be(&buf), id);
    }
}
