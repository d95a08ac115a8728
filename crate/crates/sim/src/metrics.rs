//! Per-node accounting and the run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::queue::{secs, SimTime};
use crate::workload::Registry;

/// Linear-interpolation percentile over sorted finite values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub p5: f64,
    pub mean: f64,
    pub p95: f64,
    /// Number of finite values summarized.
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let mean = if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Summary {
            p5: percentile(&v, 0.05),
            mean,
            p95: percentile(&v, 0.95),
            count: v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: usize,
    pub mean_latency_s: f64,
    pub delivery_rate: f64,
    pub overhead: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoredReport {
    /// Censored transactions created in the measurement interval.
    pub txs: usize,
    pub delivery: Summary,
    pub latency: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRate {
    pub from: usize,
    pub to: usize,
    /// Codewords per second over the measurement interval.
    pub rate: f64,
    /// Loss events reported by `to` per codeword received from `from`.
    pub loss_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Mean codeword rate over links out of honest nodes (coded only).
    pub mean_link_rate: f64,
    /// Loss events per codeword received during the last interval.
    pub loss_rate: f64,
    /// First deliveries at honest nodes during the last interval.
    pub deliveries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: String,
    pub seed: u64,
    pub nodes: usize,
    pub honest_nodes: usize,
    /// Transactions created in the measurement interval.
    pub measured_txs: usize,
    pub latency: Summary,
    pub delivery: Summary,
    pub overhead: Summary,
    /// Total bytes downloaded over total transaction bytes decoded, across
    /// honest nodes.
    pub aggregate_overhead: f64,
    pub censored: Option<CensoredReport>,
    pub links: Vec<LinkRate>,
    pub series: Vec<Sample>,
    pub counters: BTreeMap<String, u64>,
    #[serde(skip)]
    pub per_node: Vec<NodeReport>,
}

impl MetricsReport {
    /// Looks up a scalar by dotted path, e.g. `latency.p95` or
    /// `counters.fabricated`.
    pub fn metric(&self, path: &str) -> Option<f64> {
        let summary = |s: &Summary, field: &str| match field {
            "p5" => Some(s.p5),
            "mean" => Some(s.mean),
            "p95" => Some(s.p95),
            "count" => Some(s.count as f64),
            _ => None,
        };
        let (head, tail) = path.split_once('.').unwrap_or((path, ""));
        match head {
            "latency" => summary(&self.latency, tail),
            "delivery" => summary(&self.delivery, tail),
            "overhead" => summary(&self.overhead, tail),
            "aggregate_overhead" => Some(self.aggregate_overhead),
            "measured_txs" => Some(self.measured_txs as f64),
            "honest_nodes" => Some(self.honest_nodes as f64),
            "link_rate" => {
                let s = Summary::of(self.links.iter().map(|l| l.rate));
                summary(&s, tail)
            }
            "link_loss_rate" => {
                let s = Summary::of(self.links.iter().map(|l| l.loss_rate));
                summary(&s, tail)
            }
            "censored" => {
                let c = self.censored.as_ref()?;
                let (h2, t2) = tail.split_once('.').unwrap_or((tail, ""));
                match h2 {
                    "txs" => Some(c.txs as f64),
                    "delivery" => summary(&c.delivery, t2),
                    "latency" => summary(&c.latency, t2),
                    _ => None,
                }
            }
            "counters" => self.counters.get(tail).map(|&v| v as f64),
            _ => None,
        }
    }

    pub fn nodes_csv(&self) -> String {
        let mut s = String::from("node_id,mean_latency_s,delivery_rate,overhead\n");
        for n in &self.per_node {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                n.node, n.mean_latency_s, n.delivery_rate, n.overhead
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `nodes.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("nodes.csv"), self.nodes_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct NodeAcc {
    bytes_down: u64,
    decoded_bytes: u64,
    received: u64,
    latency_sum: f64,
    latency_n: u64,
    censored_received: u64,
    censored_latency_sum: f64,
    censored_latency_n: u64,
}

/// Collects per-node counters while a simulation runs.
#[derive(Debug)]
pub struct Recorder {
    warmup: SimTime,
    horizon: SimTime,
    nodes: Vec<NodeAcc>,
    delivered: Vec<Vec<u64>>,
    arrivals: Option<Vec<Vec<SimTime>>>,
    interval_deliveries: u64,
    pub counters: BTreeMap<String, u64>,
}

pub const NOT_ARRIVED: SimTime = SimTime::MAX;

impl Recorder {
    pub fn new(n: usize, warmup: SimTime, horizon: SimTime, record_arrivals: bool) -> Self {
        Recorder {
            warmup,
            horizon,
            nodes: vec![NodeAcc::default(); n],
            delivered: vec![Vec::new(); n],
            arrivals: record_arrivals.then(Vec::new),
            interval_deliveries: 0,
            counters: BTreeMap::new(),
        }
    }

    fn in_window(&self, t: SimTime) -> bool {
        t >= self.warmup && t < self.horizon
    }

    pub fn count(&mut self, name: &str, by: u64) {
        *self.counters.entry(name.to_string()).or_default() += by;
    }

    /// Bytes arriving at `node` at time `t`.
    pub fn on_download(&mut self, node: usize, t: SimTime, bytes: usize) {
        if self.in_window(t) {
            self.nodes[node].bytes_down += bytes as u64;
        }
    }

    pub fn has(&self, node: usize, tx: usize) -> bool {
        self.delivered[node]
            .get(tx / 64)
            .is_some_and(|w| w & (1 << (tx % 64)) != 0)
    }

    /// Records that `node` holds transaction `tx` as of `t`. Returns false if
    /// it already did.
    pub fn on_delivery(&mut self, reg: &Registry, node: usize, tx: usize, t: SimTime) -> bool {
        if self.has(node, tx) {
            return false;
        }
        let words = &mut self.delivered[node];
        if words.len() <= tx / 64 {
            words.resize(tx / 64 + 1, 0);
        }
        words[tx / 64] |= 1 << (tx % 64);
        if let Some(arr) = &mut self.arrivals {
            if arr.len() <= tx {
                arr.resize_with(tx + 1, Vec::new);
            }
            if arr[tx].is_empty() {
                arr[tx] = vec![NOT_ARRIVED; self.nodes.len()];
            }
            arr[tx][node] = t;
        }
        let rec = &reg.txs[tx];
        let own = rec.origin == node;
        let in_window = self.in_window(t);
        let acc = &mut self.nodes[node];
        if !own && in_window {
            acc.decoded_bytes += rec.bytes as u64;
        }
        if !own {
            self.interval_deliveries += 1;
        }
        if rec.measured {
            acc.received += 1;
            if rec.censored {
                acc.censored_received += 1;
            }
            if !own {
                let lat = secs(t - rec.created);
                acc.latency_sum += lat;
                acc.latency_n += 1;
                if rec.censored {
                    acc.censored_latency_sum += lat;
                    acc.censored_latency_n += 1;
                }
            }
        }
        true
    }

    /// First deliveries since the previous call.
    pub fn take_interval_deliveries(&mut self) -> u64 {
        std::mem::take(&mut self.interval_deliveries)
    }

    pub fn take_arrivals(&mut self) -> Option<Vec<Vec<SimTime>>> {
        self.arrivals.take()
    }

    pub fn finish(
        &self,
        reg: &Registry,
        scheme: &str,
        seed: u64,
        honest: &[usize],
        censored_stats: bool,
        links: Vec<LinkRate>,
        series: Vec<Sample>,
    ) -> MetricsReport {
        let measured = reg.measured().count();
        let censored_total = reg.measured().filter(|(_, r)| r.censored).count();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
        let per_node: Vec<NodeReport> = honest
            .iter()
            .map(|&i| {
                let a = &self.nodes[i];
                NodeReport {
                    node: i,
                    mean_latency_s: ratio(a.latency_sum, a.latency_n as f64),
                    delivery_rate: ratio(a.received as f64, measured as f64),
                    overhead: ratio(a.bytes_down as f64, a.decoded_bytes as f64),
                }
            })
            .collect();
        let total_down: u64 = honest.iter().map(|&i| self.nodes[i].bytes_down).sum();
        let total_decoded: u64 = honest.iter().map(|&i| self.nodes[i].decoded_bytes).sum();
        let censored = censored_stats.then(|| CensoredReport {
            txs: censored_total,
            delivery: Summary::of(honest.iter().map(|&i| {
                ratio(
                    self.nodes[i].censored_received as f64,
                    censored_total as f64,
                )
            })),
            latency: Summary::of(honest.iter().map(|&i| {
                let a = &self.nodes[i];
                ratio(a.censored_latency_sum, a.censored_latency_n as f64)
            })),
        });
        MetricsReport {
            scheme: scheme.to_string(),
            seed,
            nodes: self.nodes.len(),
            honest_nodes: honest.len(),
            measured_txs: measured,
            latency: Summary::of(per_node.iter().map(|n| n.mean_latency_s)),
            delivery: Summary::of(per_node.iter().map(|n| n.delivery_rate)),
            overhead: Summary::of(per_node.iter().map(|n| n.overhead)),
            aggregate_overhead: ratio(total_down as f64, total_decoded as f64),
            censored,
            links,
            series,
            counters: self.counters.clone(),
            per_node,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&v, 0.05), 5.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.5), 1.5);
        assert!(percentile(&[], 0.5).is_nan());
    }

    #[test]
    fn summary_skips_nan() {
        let s = Summary::of([1.0, f64::NAN, 3.0]);
        assert_eq!(s.count, 2);
        assert_eq!(s.mean, 2.0);
    }
}
