#[path = "properties/fragments.rs"]
mod fragments;

#[test]
fn round_trip_random_sizes_and_orders() {
    fragments::round_trip_random_sizes_and_orders();
}

#[test]
fn fake_fragments_never_corrupt_honest_reassembly() {
    fragments::fake_fragments_never_corrupt_honest_reassembly();
}

#[test]
fn unvalidated_store_still_returns_honest_chain() {
    fragments::unvalidated_store_still_returns_honest_chain();
}

#[test]
fn optimal_size_matches_brute_force() {
    fragments::optimal_size_matches_brute_force();
}
