//! Property checks shared by the test suite and the acceptance run.

use codedcast_core::fragment::{
    fragmentation_overhead, FLAG_FIRST, FLAG_LAST, FRAGMENT_HEADER_BYTES,
};
use codedcast_core::{fragment, optimal_fragment_size, Digest, Fragment, FragmentStore};
use codedcast_testkit::best_fragment_size;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bytes(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

pub fn round_trip_random_sizes_and_orders() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let ell = *[64usize, 128, 258].choose(&mut rng).unwrap();
        let size = rng.random_range(1..=4000);
        let tx = random_bytes(&mut rng, size);
        let mut frags = fragment(&tx, ell).unwrap();
        assert_eq!(frags.len(), size.div_ceil(ell - FRAGMENT_HEADER_BYTES));
        assert!(frags.iter().all(|f| f.to_bytes().len() == ell));
        frags.shuffle(&mut rng);

        let mut store = FragmentStore::new(10_000);
        let mut done = Vec::new();
        for f in frags {
            // Go through the wire format as a receiver would.
            let f = Fragment::from_bytes(&f.to_bytes(), ell).unwrap();
            done.extend(store.reassemble(f));
        }
        assert_eq!(done, vec![tx]);
    }
}

fn forge(rng: &mut impl Rng, prev: Digest, last: bool, ell: usize) -> Fragment {
    let cap = ell - FRAGMENT_HEADER_BYTES;
    let len = if last { rng.random_range(1..=cap) } else { cap };
    let mut data = random_bytes(rng, len);
    data.resize(cap, 0);
    let mut flags = if last { FLAG_LAST } else { 0 };
    if prev == Digest::ZERO {
        flags |= FLAG_FIRST;
    }
    Fragment {
        flags,
        prev_hash: prev,
        data_len: len as u16,
        data,
    }
}

/// An attacker who sees honest fragments can point forged ones at any of
/// them. With validation in place the honest transaction still comes out,
/// and nothing else does.
pub fn fake_fragments_never_corrupt_honest_reassembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ell = 128;
    for _ in 0..300 {
        let size = rng.random_range(100..=2000);
        let tx = random_bytes(&mut rng, size);
        let honest = fragment(&tx, ell).unwrap();
        let mut all: Vec<Fragment> = honest.clone();
        for _ in 0..rng.random_range(1..=10) {
            let prev = if rng.random_bool(0.2) {
                Digest::ZERO
            } else {
                honest[rng.random_range(0..honest.len())].hash()
            };
            let last = rng.random_bool(0.7);
            all.push(forge(&mut rng, prev, last, ell));
        }
        all.shuffle(&mut rng);

        let expected = tx.clone();
        let valid = move |bytes: &[u8]| bytes == expected.as_slice();
        let mut store = FragmentStore::new(10_000);
        let mut done = Vec::new();
        for f in all {
            done.extend(store.reassemble_validated(f, &valid));
        }
        assert_eq!(done, vec![tx]);
    }
}

pub fn unvalidated_store_still_returns_honest_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ell = 128;
    for _ in 0..300 {
        let size = rng.random_range(100..=2000);
        let tx = random_bytes(&mut rng, size);
        let honest = fragment(&tx, ell).unwrap();
        let mut all = honest.clone();
        for _ in 0..5 {
            let prev = honest[rng.random_range(0..honest.len())].hash();
            all.push(forge(&mut rng, prev, true, ell));
        }
        all.shuffle(&mut rng);
        let mut store = FragmentStore::new(10_000);
        let mut done = Vec::new();
        for f in all {
            done.extend(store.reassemble(f));
        }
        assert!(
            done.contains(&tx),
            "honest chain lost among {} outputs",
            done.len()
        );
    }
}

pub fn optimal_size_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..10 {
        let buckets = rng.random_range(1..=12);
        let hist: Vec<(usize, f64)> = (0..buckets)
            .map(|_| {
                (
                    rng.random_range(40..=3000),
                    rng.random_range(1..=100) as f64,
                )
            })
            .collect();
        let (lo, hi) = (40, 600);
        let (ell, overhead) = optimal_fragment_size(&hist, lo, hi).unwrap();
        let (oracle_ell, oracle_overhead) =
            best_fragment_size(&hist, lo, hi, FRAGMENT_HEADER_BYTES);
        assert!(
            (overhead - oracle_overhead).abs() < 1e-12,
            "case {case}: {overhead} vs {oracle_overhead}"
        );
        assert_eq!(ell, oracle_ell, "case {case}: {hist:?}");
        assert!((fragmentation_overhead(&hist, ell).unwrap() - overhead).abs() < 1e-15);
    }
}
