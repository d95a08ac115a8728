//! Hash-chained fragmentation of variable-size transactions.
//!
//! A fragment is exactly `ell` bytes: flags (1) | hash of the previous
//! fragment's bytes (32) | data length (2, big-endian) | zero-padded data.
//! Each fragment names its unique predecessor, so reassembly never has to
//! guess between conflicting fragments.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::tx::Digest;

pub const FLAG_FIRST: u8 = 0b01;
pub const FLAG_LAST: u8 = 0b10;
pub const FRAGMENT_HEADER_BYTES: usize = 35;
pub const DEFAULT_FRAGMENT_SIZE: usize = 128;
pub const DEFAULT_STORE_CAPACITY: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub flags: u8,
    pub prev_hash: Digest,
    pub data_len: u16,
    /// Always `ell - 35` bytes; bytes past `data_len` are zero.
    pub data: Vec<u8>,
}

fn capacity_for(ell: usize) -> Result<usize> {
    if ell <= FRAGMENT_HEADER_BYTES || ell - FRAGMENT_HEADER_BYTES > u16::MAX as usize {
        return Err(Error::config(format!(
            "fragment size must be in {}..={}, got {ell}",
            FRAGMENT_HEADER_BYTES + 1,
            FRAGMENT_HEADER_BYTES + u16::MAX as usize
        )));
    }
    Ok(ell - FRAGMENT_HEADER_BYTES)
}

impl Fragment {
    pub fn is_first(&self) -> bool {
        self.flags & FLAG_FIRST != 0
    }

    pub fn is_last(&self) -> bool {
        self.flags & FLAG_LAST != 0
    }

    pub fn size(&self) -> usize {
        FRAGMENT_HEADER_BYTES + self.data.len()
    }

    pub fn used(&self) -> &[u8] {
        &self.data[..self.data_len as usize]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size());
        out.push(self.flags);
        out.extend_from_slice(&self.prev_hash.0);
        out.extend_from_slice(&self.data_len.to_be_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8], ell: usize) -> Result<Self> {
        let cap = capacity_for(ell)?;
        if bytes.len() != ell {
            return Err(Error::parse(
                "fragment",
                format!("expected {ell} bytes, got {}", bytes.len()),
            ));
        }
        let flags = bytes[0];
        if flags & !(FLAG_FIRST | FLAG_LAST) != 0 {
            return Err(Error::parse(
                "fragment",
                format!("unknown flag bits {flags:#04x}"),
            ));
        }
        let prev_hash = Digest(bytes[1..33].try_into().unwrap());
        let data_len = u16::from_be_bytes([bytes[33], bytes[34]]);
        if data_len as usize > cap || data_len == 0 {
            return Err(Error::parse(
                "fragment",
                format!("data length {data_len} out of range"),
            ));
        }
        let frag = Fragment {
            flags,
            prev_hash,
            data_len,
            data: bytes[FRAGMENT_HEADER_BYTES..].to_vec(),
        };
        if frag.is_first() != prev_hash.is_zero() {
            return Err(Error::parse(
                "fragment",
                "FIRST flag disagrees with predecessor hash",
            ));
        }
        if !frag.is_last() && data_len as usize != cap {
            return Err(Error::parse(
                "fragment",
                "only the last fragment may be short",
            ));
        }
        Ok(frag)
    }
}

/// Splits `tx` into `ceil(|tx| / (ell - 35))` chained fragments.
pub fn fragment(tx: &[u8], ell: usize) -> Result<Vec<Fragment>> {
    let cap = capacity_for(ell)?;
    if tx.is_empty() {
        return Err(Error::config("cannot fragment an empty transaction"));
    }
    let count = tx.len().div_ceil(cap);
    let mut out: Vec<Fragment> = Vec::with_capacity(count);
    let mut prev = Digest::ZERO;
    for (i, chunk) in tx.chunks(cap).enumerate() {
        let mut flags = 0;
        if i == 0 {
            flags |= FLAG_FIRST;
        }
        if i + 1 == count {
            flags |= FLAG_LAST;
        }
        let mut data = chunk.to_vec();
        data.resize(cap, 0);
        let frag = Fragment {
            flags,
            prev_hash: prev,
            data_len: chunk.len() as u16,
            data,
        };
        prev = frag.hash();
        out.push(frag);
    }
    Ok(out)
}

/// Fragments waiting for the rest of their chain.
#[derive(Debug)]
pub struct FragmentStore {
    capacity: usize,
    frags: HashMap<Digest, Fragment>,
    children: HashMap<Digest, Vec<Digest>>,
    order: VecDeque<Digest>,
}

impl FragmentStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        FragmentStore {
            capacity,
            frags: HashMap::new(),
            children: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frags.is_empty()
    }

    pub fn contains(&self, hash: &Digest) -> bool {
        self.frags.contains_key(hash)
    }

    /// Stores `frag` and returns every transaction whose chain from FIRST to
    /// LAST it completes.
    ///
    /// Only the closing LAST fragment is released; the prefix stays until
    /// evicted, since the store cannot tell an honest LAST from a forged one
    /// pointing into the same prefix. Use [`Self::reassemble_validated`] when
    /// the caller can check transactions.
    pub fn reassemble(&mut self, frag: Fragment) -> Vec<Vec<u8>> {
        self.reassemble_inner(frag, None)
    }

    /// Like [`Self::reassemble`], but only returns chains whose bytes pass
    /// `is_valid`. An accepted chain is released entirely; a rejected one
    /// loses just its LAST fragment.
    pub fn reassemble_validated(
        &mut self,
        frag: Fragment,
        is_valid: &dyn Fn(&[u8]) -> bool,
    ) -> Vec<Vec<u8>> {
        self.reassemble_inner(frag, Some(is_valid))
    }

    fn reassemble_inner(
        &mut self,
        frag: Fragment,
        is_valid: Option<&dyn Fn(&[u8]) -> bool>,
    ) -> Vec<Vec<u8>> {
        let hash = frag.hash();
        let mut done = Vec::new();
        if self.frags.contains_key(&hash) {
            return done;
        }
        if !frag.is_first() {
            self.children.entry(frag.prev_hash).or_default().push(hash);
        }
        self.frags.insert(hash, frag);
        self.order.push_back(hash);
        self.evict();

        // Walk forward to every stored LAST reachable from the new fragment,
        // then try to close each one back to a FIRST.
        let mut stack = vec![hash];
        let mut lasts = Vec::new();
        let mut steps = 0;
        while let Some(h) = stack.pop() {
            steps += 1;
            if steps > self.frags.len() + 1 {
                break;
            }
            let Some(f) = self.frags.get(&h) else {
                continue;
            };
            if f.is_last() {
                lasts.push(h);
            }
            if let Some(kids) = self.children.get(&h) {
                stack.extend(kids.iter().rev());
            }
        }
        for last in lasts {
            let Some(chain) = self.chain_back(last) else {
                continue;
            };
            let mut tx = Vec::new();
            for h in chain.iter().rev() {
                tx.extend_from_slice(self.frags[h].used());
            }
            match is_valid {
                None => {
                    self.remove(&last);
                    done.push(tx);
                }
                Some(check) if check(&tx) => {
                    for h in &chain {
                        self.remove(h);
                    }
                    done.push(tx);
                }
                Some(_) => self.remove(&last),
            }
        }
        done
    }

    /// Hashes from `last` back to a FIRST fragment, if every link is present.
    fn chain_back(&self, last: Digest) -> Option<Vec<Digest>> {
        let mut chain = vec![last];
        let mut cur = &self.frags[&last];
        while !cur.is_first() {
            if chain.len() > self.frags.len() {
                return None;
            }
            let prev = cur.prev_hash;
            cur = self.frags.get(&prev)?;
            if cur.is_last() {
                return None;
            }
            chain.push(prev);
        }
        Some(chain)
    }

    fn remove(&mut self, h: &Digest) {
        let Some(f) = self.frags.remove(h) else {
            return;
        };
        self.children.remove(h);
        if !f.is_first() {
            if let Some(kids) = self.children.get_mut(&f.prev_hash) {
                kids.retain(|k| k != h);
                if kids.is_empty() {
                    self.children.remove(&f.prev_hash);
                }
            }
        }
    }

    fn evict(&mut self) {
        while self.frags.len() > self.capacity {
            let Some(old) = self.order.pop_front() else {
                break;
            };
            self.remove(&old);
        }
        if self.order.len() > 2 * self.capacity + 16 {
            let frags = &self.frags;
            self.order.retain(|h| frags.contains_key(h));
        }
    }
}

/// Expected fragment bytes per transaction byte when fragmenting with `ell`.
pub fn fragmentation_overhead(histogram: &[(usize, f64)], ell: usize) -> Result<f64> {
    let cap = capacity_for(ell)?;
    validate_histogram(histogram)?;
    let (mut sent, mut useful) = (0.0, 0.0);
    for &(size, freq) in histogram {
        sent += freq * (size.div_ceil(cap) * ell) as f64;
        useful += freq * size as f64;
    }
    Ok(sent / useful)
}

/// Scans `lo..=hi` for the fragment size with the lowest expected overhead;
/// ties go to the smallest size.
pub fn optimal_fragment_size(
    histogram: &[(usize, f64)],
    lo: usize,
    hi: usize,
) -> Result<(usize, f64)> {
    validate_histogram(histogram)?;
    if lo > hi {
        return Err(Error::config(format!(
            "empty fragment size range [{lo}, {hi}]"
        )));
    }
    capacity_for(lo)?;
    capacity_for(hi)?;
    let mut best = (lo, f64::INFINITY);
    for ell in lo..=hi {
        let o = fragmentation_overhead(histogram, ell)?;
        if o < best.1 {
            best = (ell, o);
        }
    }
    Ok(best)
}

fn validate_histogram(histogram: &[(usize, f64)]) -> Result<()> {
    if histogram.is_empty() {
        return Err(Error::config("size histogram is empty"));
    }
    if histogram
        .iter()
        .any(|&(s, f)| s == 0 || !(f >= 0.0 && f.is_finite()))
    {
        return Err(Error::config(
            "histogram sizes must be positive and frequencies non-negative",
        ));
    }
    if histogram.iter().all(|&(_, f)| f == 0.0) {
        return Err(Error::config("histogram has zero total frequency"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i * 7 + 3) as u8).collect()
    }

    #[test]
    fn single_fragment() {
        let frags = fragment(&bytes(50), 128).unwrap();
        assert_eq!(frags.len(), 1);
        assert!(frags[0].is_first() && frags[0].is_last());
        assert_eq!(frags[0].data_len, 50);
        assert_eq!(frags[0].to_bytes().len(), 128);
        let mut store = FragmentStore::new(16);
        assert_eq!(store.reassemble(frags[0].clone()), vec![bytes(50)]);
        assert!(store.is_empty());
        assert_eq!(store.reassemble(frags[0].clone()), vec![bytes(50)]);
    }

    #[test]
    fn four_fragments_out_of_order() {
        let tx = bytes(300);
        let frags = fragment(&tx, 128).unwrap();
        assert_eq!(frags.len(), 4);
        assert_eq!(frags[3].data_len, 300 - 3 * 93);
        assert!(frags[1..].iter().all(|f| !f.is_first()));
        for w in frags.windows(2) {
            assert_eq!(w[1].prev_hash, w[0].hash());
        }
        let mut store = FragmentStore::new(16);
        assert_eq!(store.reassemble(frags[3].clone()), Vec::<Vec<u8>>::new());
        assert_eq!(store.reassemble(frags[1].clone()), Vec::<Vec<u8>>::new());
        assert_eq!(store.reassemble(frags[0].clone()), Vec::<Vec<u8>>::new());
        assert_eq!(store.reassemble(frags[2].clone()), vec![tx.clone()]);
        assert_eq!(store.len(), 3);

        let mut store = FragmentStore::new(16);
        let valid = |b: &[u8]| b == tx.as_slice();
        for i in [2, 0, 3] {
            assert_eq!(
                store.reassemble_validated(frags[i].clone(), &valid),
                Vec::<Vec<u8>>::new()
            );
        }
        assert_eq!(
            store.reassemble_validated(frags[1].clone(), &valid),
            vec![tx.clone()]
        );
        assert!(store.is_empty());
    }

    #[test]
    fn validated_reassembly_skips_forged_last() {
        let tx = bytes(300);
        let frags = fragment(&tx, 128).unwrap();
        let mut data = vec![1u8; 3];
        data.resize(93, 0);
        let fake = Fragment {
            flags: FLAG_LAST,
            prev_hash: frags[2].hash(),
            data_len: 3,
            data,
        };
        let valid = |b: &[u8]| b == tx.as_slice();
        let mut store = FragmentStore::new(16);
        for f in &frags[..3] {
            store.reassemble_validated(f.clone(), &valid);
        }
        assert_eq!(
            store.reassemble_validated(fake.clone(), &valid),
            Vec::<Vec<u8>>::new()
        );
        assert!(!store.contains(&fake.hash()));
        assert_eq!(
            store.reassemble_validated(frags[3].clone(), &valid),
            vec![tx]
        );
        assert!(store.is_empty());
    }

    #[test]
    fn wire_roundtrip_and_validation() {
        let frags = fragment(&bytes(200), 64).unwrap();
        for f in &frags {
            assert_eq!(Fragment::from_bytes(&f.to_bytes(), 64).unwrap(), *f);
        }
        let mut bad = frags[1].to_bytes();
        bad[0] |= FLAG_FIRST;
        assert!(Fragment::from_bytes(&bad, 64).is_err());
        assert!(Fragment::from_bytes(&frags[0].to_bytes()[..63], 64).is_err());
    }

    #[test]
    fn too_small_fragment_size() {
        assert!(fragment(&bytes(10), 35).is_err());
        assert!(fragment(&bytes(10), 36).is_ok());
        assert!(fragment(&[], 128).is_err());
    }

    #[test]
    fn altered_fragment_breaks_chain() {
        let tx = bytes(400);
        let mut frags = fragment(&tx, 100).unwrap();
        frags[1].data[5] ^= 1;
        let mut store = FragmentStore::new(64);
        for f in frags {
            assert_eq!(store.reassemble(f), Vec::<Vec<u8>>::new());
        }
    }

    #[test]
    fn fake_last_does_not_disturb_honest_chain() {
        let tx = bytes(500);
        let frags = fragment(&tx, 128).unwrap();
        let fake = Fragment {
            flags: FLAG_LAST,
            prev_hash: frags[2].hash(),
            data_len: 4,
            data: {
                let mut d = vec![0xEE; 4];
                d.resize(93, 0);
                d
            },
        };
        let mut store = FragmentStore::new(64);
        for f in &frags[..3] {
            assert_eq!(store.reassemble(f.clone()), Vec::<Vec<u8>>::new());
        }
        // The fake completes a bogus chain, which downstream validation rejects...
        let bogus = store.reassemble(fake).pop().unwrap();
        assert_ne!(bogus, tx);
        // ...but the honest prefix is still there for the real last fragment.
        for f in &frags[..3] {
            assert!(store.contains(&f.hash()));
        }
        let rest: Vec<_> = frags[3..].to_vec();
        let mut done = Vec::new();
        for f in rest {
            done.extend(store.reassemble(f));
        }
        assert_eq!(done, vec![tx]);
    }

    #[test]
    fn degenerate_histogram_overhead() {
        let (ell, o) = optimal_fragment_size(&[(93, 1.0)], 128, 128).unwrap();
        assert_eq!(ell, 128);
        assert!((o - 128.0 / 93.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_errors() {
        assert!(optimal_fragment_size(&[], 128, 256).is_err());
        assert!(optimal_fragment_size(&[(100, 1.0)], 20, 256).is_err());
        assert!(optimal_fragment_size(&[(100, 1.0)], 300, 256).is_err());
        assert!(optimal_fragment_size(&[(0, 1.0)], 128, 256).is_err());
    }

    #[test]
    fn smallest_size_wins_ties() {
        // Any ell whose capacity covers 10 bytes gives one fragment; the smallest is best.
        let (ell, _) = optimal_fragment_size(&[(10, 1.0)], 45, 200).unwrap();
        assert_eq!(ell, 45);
    }
}
