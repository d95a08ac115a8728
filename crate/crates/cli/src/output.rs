//! Plot-ready CSV and JSON files written by `run`.
//!
//! Per variant, under `<out>/<variant>/`:
//! - `summary.json`: the full metrics report (see `schemas/summary.schema.json`)
//! - `nodes.csv`: `node_id,mean_latency_s,delivery_rate,overhead`
//! - `series.csv`: `time_s,mean_link_rate,loss_rate,deliveries`
//! - `links.csv`: `from,to,rate,loss_rate` (coded scheme only)
//!
//! Per recipe, `<out>/results.csv` has one row per variant in recipe order
//! with the columns in [`RESULTS_HEADER`].

use std::fmt::Write as _;
use std::path::Path;

use codedcast_sim::MetricsReport;

use crate::{CliError, Result};

pub const RESULTS_HEADER: &str = "variant,scheme,seed,measured_txs,latency_p5_s,latency_mean_s,latency_p95_s,\
delivery_p5,delivery_mean,overhead_mean,overhead_p95,aggregate_overhead,censored_delivery_mean,censored_latency_mean_s";

pub fn series_csv(r: &MetricsReport) -> String {
    let mut s = String::from("time_s,mean_link_rate,loss_rate,deliveries\n");
    for x in &r.series {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            x.t, x.mean_link_rate, x.loss_rate, x.deliveries
        );
    }
    s
}

pub fn links_csv(r: &MetricsReport) -> String {
    let mut s = String::from("from,to,rate,loss_rate\n");
    for l in &r.links {
        let _ = writeln!(s, "{},{},{},{}", l.from, l.to, l.rate, l.loss_rate);
    }
    s
}

pub fn results_csv(reports: &[(String, MetricsReport)]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for (name, r) in reports {
        let (cd, cl) = r
            .censored
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |c| (c.delivery.mean, c.latency.mean));
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.seed,
            r.measured_txs,
            r.latency.p5,
            r.latency.mean,
            r.latency.p95,
            r.delivery.p5,
            r.delivery.mean,
            r.overhead.mean,
            r.overhead.p95,
            r.aggregate_overhead,
            cd,
            cl
        );
    }
    s
}

/// The one-line summary printed for each variant.
pub fn summary_line(name: &str, r: &MetricsReport) -> String {
    format!(
        "{name} [{}]: latency p95 {:.3} s, delivery p5 {:.4}, overhead p95 {:.3}",
        r.scheme, r.latency.p95, r.delivery.p5, r.overhead.p95
    )
}

pub fn write_variant(dir: &Path, r: &MetricsReport) -> Result<()> {
    r.write(dir)?;
    write(&dir.join("series.csv"), &series_csv(r))?;
    if !r.links.is_empty() {
        write(&dir.join("links.csv"), &links_csv(r))?;
    }
    Ok(())
}

pub fn write_all(out: &Path, reports: &[(String, MetricsReport)]) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (name, r) in reports {
        write_variant(&out.join(name), r)?;
    }
    write(&out.join("results.csv"), &results_csv(reports))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
