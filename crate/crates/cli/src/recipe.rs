//! Recipes: a base simulator config, optional variants and sweeps merged over
//! it, and inline assertions on the resulting metrics.
//!
//! A file without any recipe keys is read as a plain simulator config and
//! runs as a single variant named `main`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use codedcast_sim::{run_simulation, MetricsReport, SimConfig};
use serde::Deserialize;
use toml::{Table, Value};

use crate::{CliError, Result};

const RECIPE_KEYS: [&str; 8] = [
    "name",
    "description",
    "time_budget_s",
    "out_dir",
    "base",
    "variant",
    "sweep",
    "assert",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecipe {
    name: Option<String>,
    description: Option<String>,
    time_budget_s: Option<f64>,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    base: Table,
    #[serde(default, rename = "variant")]
    variants: Vec<RawVariant>,
    #[serde(default, rename = "sweep")]
    sweeps: Vec<RawSweep>,
    #[serde(default, rename = "assert")]
    asserts: Vec<Assertion>,
}

#[derive(Debug, Deserialize)]
struct RawVariant {
    name: String,
    #[serde(flatten)]
    set: Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    name: String,
    /// Dotted config path, e.g. `baseline.jitter_max_s`.
    key: String,
    values: Vec<Value>,
    /// Overrides applied to every point of the sweep.
    #[serde(default)]
    set: Table,
}

/// A bound on one metric of one or more variants. With `ratio_to` or
/// `difference_to` the bound applies to the metric relative to the same
/// metric of another variant.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    /// Variant to check; all variants when absent.
    pub variant: Option<String>,
    pub metric: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub ratio_to: Option<String>,
    pub difference_to: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: SimConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub description: String,
    pub time_budget: Option<Duration>,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
    pub asserts: Vec<Assertion>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<(String, MetricsReport)>,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
    pub over_budget: bool,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        !self.over_budget && self.checks.iter().all(|c| c.pass)
    }
}

impl Recipe {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Self::parse(&text, &stem).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, default_name: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let is_recipe = table.keys().any(|k| RECIPE_KEYS.contains(&k.as_str()));
        let raw = if is_recipe {
            Value::Table(table)
                .try_into::<RawRecipe>()
                .map_err(|e| CliError::Config(e.to_string()))?
        } else {
            RawRecipe {
                name: None,
                description: None,
                time_budget_s: None,
                out_dir: None,
                base: table,
                variants: Vec::new(),
                sweeps: Vec::new(),
                asserts: Vec::new(),
            }
        };
        Self::build(raw, default_name)
    }

    fn build(raw: RawRecipe, default_name: &str) -> Result<Self> {
        let name = raw.name.unwrap_or_else(|| default_name.to_string());
        let mut overrides: Vec<(String, Table)> = Vec::new();
        for v in raw.variants {
            overrides.push((v.name, v.set));
        }
        for s in raw.sweeps {
            if s.values.is_empty() {
                return Err(CliError::Config(format!(
                    "sweep {}: values must not be empty",
                    s.name
                )));
            }
            for value in &s.values {
                let mut set = s.set.clone();
                set_path(&mut set, &s.key, value.clone())
                    .map_err(|e| CliError::Config(format!("sweep {}: {e}", s.name)))?;
                overrides.push((format!("{}_{}", s.name, value_label(value)), set));
            }
        }
        if overrides.is_empty() {
            overrides.push(("main".into(), Table::new()));
        }

        let mut seen = BTreeSet::new();
        let mut variants = Vec::with_capacity(overrides.len());
        for (vname, set) in overrides {
            if !seen.insert(vname.clone()) {
                return Err(CliError::Config(format!(
                    "duplicate variant name {vname:?}"
                )));
            }
            let mut merged = raw.base.clone();
            merge(&mut merged, set);
            let config: SimConfig = Value::Table(merged)
                .try_into()
                .map_err(|e| CliError::Config(format!("variant {vname}: {e}")))?;
            config
                .validate()
                .map_err(|e| CliError::Config(format!("variant {vname}: {e}")))?;
            variants.push(Variant {
                name: vname,
                config,
            });
        }

        for a in &raw.asserts {
            if !known_metric(&a.metric) {
                return Err(CliError::Config(format!(
                    "assert: unknown metric {:?}",
                    a.metric
                )));
            }
            if a.min.is_none() && a.max.is_none() {
                return Err(CliError::Config(format!(
                    "assert on {}: needs min or max",
                    a.metric
                )));
            }
            if a.ratio_to.is_some() && a.difference_to.is_some() {
                return Err(CliError::Config(format!(
                    "assert on {}: ratio_to and difference_to are exclusive",
                    a.metric
                )));
            }
            for v in [&a.variant, &a.ratio_to, &a.difference_to]
                .into_iter()
                .flatten()
            {
                if !seen.contains(v) {
                    return Err(CliError::Config(format!("assert: unknown variant {v:?}")));
                }
            }
        }

        let time_budget = match raw.time_budget_s {
            Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
            Some(s) => {
                return Err(CliError::Config(format!(
                    "time_budget_s must be positive, got {s}"
                )))
            }
            None => None,
        };
        Ok(Recipe {
            out_dir: raw
                .out_dir
                .unwrap_or_else(|| PathBuf::from("out").join(&name)),
            name,
            description: raw.description.unwrap_or_default(),
            time_budget,
            variants,
            asserts: raw.asserts,
        })
    }

    /// Runs every variant, using up to `jobs` threads. Reports come back in
    /// recipe order whatever order the runs finish in.
    pub fn run(&self, jobs: usize) -> Result<RunOutcome> {
        let start = Instant::now();
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<codedcast_sim::Result<MetricsReport>>>> =
            Mutex::new((0..self.variants.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs.clamp(1, self.variants.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(v) = self.variants.get(i) else { break };
                    tracing::info!(recipe = %self.name, variant = %v.name, "running");
                    let result = run_simulation(&v.config).map(|o| o.report);
                    slots.lock().expect("no worker panicked")[i] = Some(result);
                });
            }
        });
        let mut reports = Vec::with_capacity(self.variants.len());
        for (v, slot) in self
            .variants
            .iter()
            .zip(slots.into_inner().expect("no worker panicked"))
        {
            let report = slot.expect("every variant ran")?;
            reports.push((v.name.clone(), report));
        }
        let elapsed = start.elapsed();
        let checks = self.evaluate(&reports);
        Ok(RunOutcome {
            checks,
            over_budget: self.time_budget.is_some_and(|b| elapsed > b),
            elapsed,
            reports,
        })
    }

    pub fn evaluate(&self, reports: &[(String, MetricsReport)]) -> Vec<Check> {
        let find = |name: &str| reports.iter().find(|(n, _)| n == name).map(|(_, r)| r);
        let mut checks = Vec::new();
        for a in &self.asserts {
            let targets: Vec<&str> = match &a.variant {
                Some(v) => vec![v.as_str()],
                None => reports.iter().map(|(n, _)| n.as_str()).collect(),
            };
            for name in targets {
                let value = find(name).and_then(|r| r.metric(&a.metric));
                let (value, relation) = match (&a.ratio_to, &a.difference_to) {
                    (Some(other), _) => {
                        let b = find(other).and_then(|r| r.metric(&a.metric));
                        (value.zip(b).map(|(x, y)| x / y), format!(" / {other}"))
                    }
                    (_, Some(other)) => {
                        let b = find(other).and_then(|r| r.metric(&a.metric));
                        (value.zip(b).map(|(x, y)| x - y), format!(" - {other}"))
                    }
                    _ => (value, String::new()),
                };
                let value = value.unwrap_or(f64::NAN);
                let pass = value.is_finite()
                    && a.min.is_none_or(|m| value >= m)
                    && a.max.is_none_or(|m| value <= m);
                let bounds = match (a.min, a.max) {
                    (Some(lo), Some(hi)) => format!("in [{lo}, {hi}]"),
                    (Some(lo), None) => format!(">= {lo}"),
                    (None, Some(hi)) => format!("<= {hi}"),
                    (None, None) => unreachable!("checked at load"),
                };
                checks.push(Check {
                    label: format!("{name}: {}{relation} {bounds}", a.metric),
                    value,
                    pass,
                });
            }
        }
        checks
    }
}

/// Whether `path` names a metric `MetricsReport::metric` can resolve.
pub fn known_metric(path: &str) -> bool {
    const STATS: [&str; 4] = ["p5", "mean", "p95", "count"];
    let (head, tail) = path.split_once('.').unwrap_or((path, ""));
    match head {
        "latency" | "delivery" | "overhead" | "link_rate" | "link_loss_rate" => {
            STATS.contains(&tail)
        }
        "aggregate_overhead" | "measured_txs" | "honest_nodes" => tail.is_empty(),
        "censored" => match tail.split_once('.') {
            Some(("delivery" | "latency", stat)) => STATS.contains(&stat),
            None => tail == "txs",
            _ => false,
        },
        "counters" => !tail.is_empty(),
        _ => false,
    }
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut Table, path: &str, value: Value) -> std::result::Result<(), String> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("bad key {path:?}"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("key {path:?}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
