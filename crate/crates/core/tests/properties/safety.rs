//! Property checks shared by the test suite and the acceptance run.

use std::collections::{HashMap, HashSet};

use codedcast_core::{
    encode, txid, Codeword, CodingWindow, DecoderConfig, DecoderState, DegreeDistribution, Digest,
    HashKey, IdWidth, Transaction, TransactionId,
};
use codedcast_testkit::{collision_search, gf2_solve_peel_order, Equation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: usize = 64;

fn random_tx(rng: &mut impl Rng) -> Transaction {
    let mut p = vec![0u8; T];
    rng.fill_bytes(&mut p);
    Transaction::new(p, 0.0)
}

fn decoder(width: usize, window: usize, pending_cap: usize) -> DecoderState {
    DecoderState::new(
        DecoderConfig::new(T, IdWidth::new(width).unwrap(), window, pending_cap).unwrap(),
    )
}

fn digests(txs: &[Transaction]) -> HashSet<Digest> {
    txs.iter().map(|t| t.digest()).collect()
}

/// Codewords from a sliding window over `stream`, enough to decode most of it.
fn honest_codewords(
    stream: &[Transaction],
    key: &HashKey,
    width: IdWidth,
    seed: u64,
) -> Vec<Codeword> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = DegreeDistribution::robust_soliton(20, 0.03, 0.5, 20).unwrap();
    let mut window = CodingWindow::new(20);
    let mut out = Vec::new();
    for (i, tx) in stream.iter().enumerate() {
        window.insert(tx.clone());
        for _ in 0..2 {
            out.push(encode(&window, &dist, &mut rng, key, width, (2 * i) as u64).unwrap());
        }
    }
    for j in 0..60 {
        out.push(
            encode(
                &window,
                &dist,
                &mut rng,
                key,
                width,
                (2 * stream.len() + j) as u64,
            )
            .unwrap(),
        );
    }
    out
}

fn junk_codeword(rng: &mut impl Rng, honest: &[Codeword], seqno: u64) -> Codeword {
    let mut payload = vec![0u8; T];
    rng.fill_bytes(&mut payload);
    let ids = if rng.random_bool(0.5) {
        // Random IDs of random degree.
        let d = rng.random_range(1..=10);
        let mut ids: Vec<TransactionId> = Vec::new();
        while ids.len() < d {
            let id = TransactionId(rng.random::<u32>() as u64);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids
    } else {
        // A real header with a forged payload.
        honest[rng.random_range(0..honest.len())].ids.clone()
    };
    Codeword {
        seqno,
        ids,
        payload,
    }
}

pub fn injected_codewords_do_not_change_honest_decode_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let width = IdWidth::new(4).unwrap();
    let stream: Vec<Transaction> = (0..300).map(|_| random_tx(&mut rng)).collect();
    let honest_key = HashKey([1; 16]);
    let honest = honest_codewords(&stream, &honest_key, width, 5);

    let mut clean = decoder(4, 100_000, 1_000_000);
    let link = clean.add_link(honest_key);
    let mut clean_out = Vec::new();
    for cw in &honest {
        clean_out.extend(clean.ingest(link, cw.clone(), 0.0));
    }
    assert!(
        clean_out.len() > 250,
        "baseline decoded only {}",
        clean_out.len()
    );

    // Same honest stream, with 1000 junk codewords interleaved on the honest
    // link and on a separate attacker link.
    let mut attacked = decoder(4, 100_000, 1_000_000);
    let h = attacked.add_link(honest_key);
    let a = attacked.add_link(HashKey([2; 16]));
    let mut attacked_out = Vec::new();
    let mut junk_sent = 0;
    for (i, cw) in honest.iter().enumerate() {
        attacked_out.extend(attacked.ingest(h, cw.clone(), 0.0));
        while junk_sent < (i + 1) * 1000 / honest.len() {
            let link = if junk_sent % 2 == 0 { h } else { a };
            attacked_out.extend(attacked.ingest(
                link,
                junk_codeword(&mut rng, &honest, 1_000_000 + junk_sent as u64),
                0.0,
            ));
            junk_sent += 1;
        }
    }
    assert_eq!(junk_sent, 1000);

    let truth = digests(&stream);
    assert!(
        attacked_out.iter().all(|t| truth.contains(&t.digest())),
        "junk produced a fake transaction"
    );
    assert_eq!(digests(&attacked_out), digests(&clean_out));
    assert!(
        attacked.stats().corrupted > 0,
        "forged payloads should trip the degree-one check"
    );
}

pub fn decoder_matches_peeling_oracle_on_small_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let width = IdWidth::new(4).unwrap();
    let key = HashKey([9; 16]);
    let mut total_decoded = 0;
    for _ in 0..1000 {
        let unknowns: Vec<Transaction> = (0..6).map(|_| random_tx(&mut rng)).collect();
        let rows = rng.random_range(1..=8);
        let system: Vec<Equation> = (0..rows)
            .map(|_| {
                let d = rng.random_range(1..=4);
                let picks = codedcast_core::codeword::sample_indices(&mut rng, 6, d);
                let mut payload = vec![0u8; T];
                for &p in &picks {
                    for (b, x) in payload.iter_mut().zip(unknowns[p].payload()) {
                        *b ^= x;
                    }
                }
                Equation {
                    unknowns: picks,
                    payload,
                }
            })
            .collect();

        let expected: HashMap<usize, Vec<u8>> = gf2_solve_peel_order(&system).into_iter().collect();

        let mut d = decoder(4, 100_000, 1000);
        let link = d.add_link(key);
        let mut got = Vec::new();
        for (seq, eq) in system.iter().enumerate() {
            let srcs: Vec<&Transaction> = eq.unknowns.iter().map(|&u| &unknowns[u]).collect();
            got.extend(d.ingest(
                link,
                Codeword::from_sources(seq as u64, &srcs, &key, width),
                0.0,
            ));
        }
        let got: HashMap<usize, Vec<u8>> = got
            .iter()
            .map(|t| {
                let u = unknowns
                    .iter()
                    .position(|x| x.digest() == t.digest())
                    .expect("decoded an unknown");
                (u, t.payload().to_vec())
            })
            .collect();
        assert_eq!(got, expected, "system {system:?}");
        total_decoded += got.len();
    }
    // Guard against a vacuous comparison.
    assert!(
        total_decoded > 1000,
        "only {total_decoded} unknowns decoded overall"
    );
}

/// With one-byte IDs an attacker can find a payload whose ID matches a
/// transaction the victim already knows. A codeword built around it makes
/// the victim peel off the wrong transaction; the degree-one hash check must
/// reject the result unless the residue happens to hash to the remaining ID
/// as well, which is a second, independent one-in-256 event.
pub fn forced_one_byte_collisions_are_caught_by_degree_one_check() {
    let width = IdWidth::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut caught = 0;
    let mut double_collisions = 0;
    for case in 0..50u64 {
        let key = HashKey::random(&mut rng);
        let known = random_tx(&mut rng);
        let other = random_tx(&mut rng);
        let target = txid(&key, known.payload(), width);
        let (forged, _) =
            collision_search(|p| txid(&key, p, width).0, target.0, T, case, 1 << 16).unwrap();
        assert_ne!(forged.as_slice(), known.payload());
        let forged = Transaction::new(forged, 0.0);
        if txid(&key, other.payload(), width) == target {
            continue;
        }

        let mut d = decoder(1, 64, 100);
        let link = d.add_link(key);
        d.add_known(known.clone());
        let cw = Codeword::from_sources(0, &[&forged, &other], &key, width);
        let out = d.ingest(link, cw, 0.0);

        let mut residue = forged.payload().to_vec();
        for (i, b) in residue.iter_mut().enumerate() {
            *b ^= other.payload()[i] ^ known.payload()[i];
        }
        let residue_collides = txid(&key, &residue, width) == txid(&key, other.payload(), width);
        if residue_collides {
            double_collisions += 1;
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].payload(), residue.as_slice());
        } else {
            assert!(out.is_empty(), "case {case}: mis-peel escaped the check");
            assert_eq!(d.stats().corrupted, 1);
            caught += 1;
        }
    }
    assert!(
        caught >= 45,
        "caught {caught}, double collisions {double_collisions}"
    );
}

pub fn collisions_are_key_dependent() {
    let width = IdWidth::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let key = HashKey::random(&mut rng);
    let known = random_tx(&mut rng);
    let target = txid(&key, known.payload(), width);
    let (forged, trials) =
        collision_search(|p| txid(&key, p, width).0, target.0, T, 1, 1 << 16).unwrap();
    assert!(trials < 4096, "{trials} trials for a one-byte target");
    assert_eq!(txid(&key, &forged, width), target);

    // Under fresh keys the pair collides only by chance, ~100/256 times.
    let incidental = (0..100)
        .filter(|_| {
            let k = HashKey::random(&mut rng);
            txid(&k, &forged, width) == txid(&k, known.payload(), width)
        })
        .count();
    assert!(incidental <= 4, "{incidental} collisions under fresh keys");

    // A decoder keyed differently does not confuse the two.
    let other_key = loop {
        let k = HashKey::random(&mut rng);
        if txid(&k, &forged, width) != txid(&k, known.payload(), width) {
            break k;
        }
    };
    let forged = Transaction::new(forged, 0.0);
    let other = loop {
        let o = random_tx(&mut rng);
        let id = txid(&other_key, o.payload(), width);
        if id != txid(&other_key, forged.payload(), width)
            && id != txid(&other_key, known.payload(), width)
        {
            break o;
        }
    };
    let mut d = decoder(1, 64, 100);
    let link = d.add_link(other_key);
    d.add_known(known);
    d.add_known(other.clone());
    let out = d.ingest(
        link,
        Codeword::from_sources(0, &[&forged, &other], &other_key, width),
        0.0,
    );
    assert_eq!(digests(&out), digests(&[forged]));
    assert_eq!(d.stats().corrupted, 0);
}

pub fn codewords_replayed_on_another_link_do_not_decode() {
    let width = IdWidth::new(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tx = random_tx(&mut rng);
    let k1 = HashKey([1; 16]);
    let k2 = HashKey([2; 16]);
    let cw = Codeword::from_sources(0, &[&tx], &k1, width);

    let mut d = decoder(4, 100, 100);
    let l1 = d.add_link(k1);
    let l2 = d.add_link(k2);
    assert!(d.ingest(l2, cw.clone(), 0.0).is_empty());
    assert_eq!(d.stats().corrupted, 1);
    assert_eq!(digests(&d.ingest(l1, cw, 0.0)), digests(&[tx]));
}

/// Mis-peel rate with one-byte IDs and a 64-entry peeling window. Each
/// codeword carries up to `k` IDs of transactions the receiver lacks; any of
/// them colliding with one of the `m` indexed transactions sends the decoder
/// down a wrong path, which by the union bound happens with probability at
/// most `k * m / 2^8` per codeword.
pub fn mispeel_rate_within_union_bound_at_one_byte_ids() {
    let width = IdWidth::new(1).unwrap();
    let m = 64;
    let trials = 5000;
    for k in [1usize, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + k as u64);
        let mut mispeels = 0u64;
        for seq in 0..trials {
            let key = HashKey::random(&mut rng);
            let mut d = decoder(1, m, 100);
            let link = d.add_link(key);
            for _ in 0..m {
                d.add_known(random_tx(&mut rng));
            }
            let fresh: Vec<Transaction> = (0..k).map(|_| random_tx(&mut rng)).collect();
            let refs: Vec<&Transaction> = fresh.iter().collect();
            let cw = Codeword::from_sources(seq, &refs, &key, width);
            if cw.ids.iter().collect::<HashSet<_>>().len() < k {
                continue;
            }
            let out = d.ingest(link, cw, 0.0);
            let s = d.stats();
            let wrong = out
                .iter()
                .filter(|t| !fresh.iter().any(|f| f.digest() == t.digest()))
                .count() as u64;
            // A wrong path shows up as a rejected residue, a transaction that
            // is not real, or a codeword peeling to nothing.
            if s.corrupted + s.redundant + wrong > 0 {
                mispeels += 1;
            }
        }
        let rate = mispeels as f64 / trials as f64;
        let bound = (k * m) as f64 / 256.0;
        assert!(rate <= 2.0 * bound, "k={k}: rate {rate} vs bound {bound}");
        assert!(rate > 0.0, "k={k}: expected some mis-peels at one-byte IDs");
    }
}
