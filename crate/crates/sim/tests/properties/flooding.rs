//! Property checks shared by the test suite and the acceptance run.

use codedcast_sim::config::{DelayModel, Generator};
use codedcast_sim::metrics::NOT_ARRIVED;
use codedcast_sim::{random_regular, run_simulation, Scheme, SimConfig, SimOutput, Topology};
use codedcast_testkit::shortest_paths;

/// A 20-node graph with log-normal delays rounded to whole microseconds,
/// so path sums are exact in both the simulator and the oracle.
fn microsecond_topology() -> Topology {
    let mut t = random_regular(20, 4, 5)
        .unwrap()
        .with_lognormal_delays(70.0, 0.5, 6)
        .unwrap();
    for e in &mut t.edges {
        e.delay_ms = (e.delay_ms * 1000.0).round() / 1000.0;
    }
    t
}

fn run_on(
    topology: &Topology,
    scheme: Scheme,
    delay: DelayModel,
    dir: &tempfile::TempDir,
) -> (SimConfig, SimOutput) {
    let path = dir.path().join("topology.txt");
    std::fs::write(&path, topology.to_text()).unwrap();
    let mut cfg = SimConfig {
        scheme,
        duration_s: 5.0,
        drain_s: 5.0,
        record_arrivals: true,
        ..SimConfig::default()
    };
    cfg.topology.generator = Generator::File;
    cfg.topology.file = Some(path);
    cfg.topology.delay = delay;
    cfg.topology.delay_ms = 50.0;
    cfg.workload.tps = 40.0;
    let out = run_simulation(&cfg).unwrap();
    (cfg, out)
}

fn horizon(cfg: &SimConfig) -> u64 {
    ((cfg.duration_s + cfg.drain_s) * 1e9).round() as u64
}

fn micros_edges(t: &Topology) -> Vec<(usize, usize, u64)> {
    t.edges
        .iter()
        .map(|e| (e.u, e.v, (e.delay_ms * 1000.0).round() as u64))
        .collect()
}

pub fn flooding_first_arrivals_equal_shortest_paths() {
    let dir = tempfile::tempdir().unwrap();
    let topo = microsecond_topology();
    let (cfg, out) = run_on(&topo, Scheme::Flooding, DelayModel::FromFile, &dir);
    let arrivals = out.arrivals.unwrap();
    let edges = micros_edges(&topo);
    let mut checked = 0;
    for (i, tx) in out.txs.iter().enumerate() {
        let dist = shortest_paths(20, &edges, tx.origin);
        for node in 0..20 {
            let expect = tx.created + dist[node].unwrap() * 1000;
            let got = arrivals[i][node];
            if expect > horizon(&cfg) {
                assert_eq!(got, NOT_ARRIVED);
            } else {
                assert_eq!(got, expect, "tx {i} from {} at node {node}", tx.origin);
                checked += 1;
            }
        }
    }
    assert!(checked > 20 * 300, "{checked}");
}

pub fn flooding_overhead_equals_degree() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = run_on(
        &microsecond_topology(),
        Scheme::Flooding,
        DelayModel::FromFile,
        &dir,
    );
    let r = &out.report;
    // Every node hears each transaction from all four neighbors, less the
    // transactions it created itself.
    assert!(
        (r.aggregate_overhead - 4.0).abs() < 0.4,
        "{}",
        r.aggregate_overhead
    );
    assert_eq!(r.delivery.p5, 1.0);
}

/// With equal link delays and no jitter, a transaction needs an
/// announcement, a request and the transfer on every hop.
pub fn hash_flooding_takes_three_trips_per_hop() {
    let dir = tempfile::tempdir().unwrap();
    let topo = microsecond_topology();
    let hops: Vec<(usize, usize, u64)> = topo.edges.iter().map(|e| (e.u, e.v, 1)).collect();
    for scheme in [Scheme::Bitcoin, Scheme::Shrec] {
        let (cfg, out) = run_on(&topo, scheme, DelayModel::Constant, &dir);
        let arrivals = out.arrivals.unwrap();
        for (i, tx) in out.txs.iter().enumerate() {
            let dist = shortest_paths(20, &hops, tx.origin);
            for node in 0..20 {
                let expect = tx.created + dist[node].unwrap() * 3 * 50_000_000;
                if expect <= horizon(&cfg) {
                    assert_eq!(arrivals[i][node], expect, "{scheme:?} tx {i} node {node}");
                }
            }
        }
        assert_eq!(out.report.delivery.p5, 1.0, "{scheme:?}");
    }
}

pub fn hash_flooding_saves_bandwidth_over_flooding() {
    let dir = tempfile::tempdir().unwrap();
    let topo = microsecond_topology();
    let flood = run_on(&topo, Scheme::Flooding, DelayModel::FromFile, &dir)
        .1
        .report;
    let shrec = run_on(&topo, Scheme::Shrec, DelayModel::FromFile, &dir)
        .1
        .report;
    assert!(shrec.aggregate_overhead < flood.aggregate_overhead);
    // One copy of each transaction plus 32-byte hashes both ways per link.
    assert!(shrec.aggregate_overhead > 1.0);
    assert_eq!(
        shrec.counters.get("request_timeouts").copied().unwrap_or(0),
        0
    );
}

pub fn unreached_nodes_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = run_on(
        &microsecond_topology(),
        Scheme::Flooding,
        DelayModel::FromFile,
        &dir,
    );
    let arrivals = out.arrivals.unwrap();
    for (i, tx) in out.txs.iter().enumerate() {
        for &a in &arrivals[i] {
            assert!(a == NOT_ARRIVED || (a >= tx.created && a <= horizon(&cfg)));
        }
    }
    // Transactions created in the final instant have not spread yet.
    assert!(arrivals.last().unwrap().contains(&NOT_ARRIVED));
}
