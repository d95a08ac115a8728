//! Experiment configuration, read from TOML.

use std::path::PathBuf;

use codedcast_core::ProtocolParams;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Coded,
    Flooding,
    Bitcoin,
    Shrec,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Coded => "coded",
            Scheme::Flooding => "flooding",
            Scheme::Bitcoin => "bitcoin",
            Scheme::Shrec => "shrec",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    RandomRegular,
    File,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    #[default]
    Lognormal,
    Constant,
    /// Keep the delays stored in the topology file.
    FromFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub generator: Generator,
    pub n: usize,
    pub degree: usize,
    pub file: Option<PathBuf>,
    pub delay: DelayModel,
    pub delay_median_ms: f64,
    pub delay_sigma: f64,
    /// Used by the constant delay model.
    pub delay_ms: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            generator: Generator::RandomRegular,
            n: 100,
            degree: 8,
            file: None,
            delay: DelayModel::Lognormal,
            delay_median_ms: 70.0,
            delay_sigma: 0.5,
            delay_ms: 70.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    #[default]
    None,
    /// A fraction of nodes keep censored transactions out of what they send.
    Censor,
    /// A fraction of nodes never send anything useful.
    Silent,
    /// Extra censoring nodes linked to every honest node with zero delay.
    ZeroDelayAttacker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    pub mode: AdversaryMode,
    /// Fraction of topology nodes that are adversarial (censor, silent).
    pub fraction: f64,
    /// Number of added attacker nodes (zero_delay_attacker).
    pub count: usize,
    /// Fraction of transactions marked as censored.
    pub censored_fraction: f64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            mode: AdversaryMode::None,
            fraction: 0.0,
            count: 0,
            censored_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Aggregate transaction creation rate across honest nodes.
    pub tps: f64,
    /// Optional `[size, weight]` pairs. When present, transactions have
    /// variable sizes and travel as fragments of `protocol.fragment_size`.
    pub size_histogram: Option<Vec<(usize, f64)>>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            tps: 400.0,
            size_histogram: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Upper bound of the uniform delay before announcing a hash.
    pub jitter_max_s: f64,
    /// Request timeout for the one-request-per-hash scheme.
    pub request_timeout_s: f64,
    /// Hash size used in announcements and requests.
    pub hash_bytes: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            jitter_max_s: 0.0,
            request_timeout_s: 30.0,
            hash_bytes: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub seed: u64,
    /// Length of the measured run in seconds (warmup included).
    pub duration_s: f64,
    /// Fraction of `duration_s` excluded from metrics.
    pub warmup_fraction: f64,
    /// Extra simulated time after `duration_s` so late transactions can
    /// finish spreading. The workload keeps running.
    pub drain_s: f64,
    /// Time-series sampling period; 0 disables sampling.
    pub sample_interval_s: f64,
    /// Record first-arrival times of every transaction at every node
    /// (memory grows with nodes times transactions).
    pub record_arrivals: bool,
    pub topology: TopologyConfig,
    pub workload: WorkloadConfig,
    pub protocol: ProtocolParams,
    pub adversary: AdversaryConfig,
    pub baseline: BaselineConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheme: Scheme::Coded,
            seed: 1,
            duration_s: 100.0,
            warmup_fraction: 0.2,
            drain_s: 5.0,
            sample_interval_s: 1.0,
            record_arrivals: false,
            topology: TopologyConfig::default(),
            workload: WorkloadConfig::default(),
            protocol: ProtocolParams::default(),
            adversary: AdversaryConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

fn check(ok: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::config(field, reason()))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            "duration_s",
            || format!("must be positive, got {}", self.duration_s),
        )?;
        check(
            (0.0..1.0).contains(&self.warmup_fraction),
            "warmup_fraction",
            || format!("must be in [0, 1), got {}", self.warmup_fraction),
        )?;
        check(
            self.drain_s >= 0.0 && self.drain_s.is_finite(),
            "drain_s",
            || format!("must be non-negative, got {}", self.drain_s),
        )?;
        check(self.sample_interval_s >= 0.0, "sample_interval_s", || {
            format!("must be non-negative, got {}", self.sample_interval_s)
        })?;
        check(
            self.workload.tps > 0.0 && self.workload.tps.is_finite(),
            "workload.tps",
            || format!("must be positive, got {}", self.workload.tps),
        )?;
        if let Some(h) = &self.workload.size_histogram {
            check(!h.is_empty(), "workload.size_histogram", || {
                "must not be empty".into()
            })?;
            check(
                h.iter().all(|&(s, w)| s > 0 && w >= 0.0 && w.is_finite())
                    && h.iter().any(|&(_, w)| w > 0.0),
                "workload.size_histogram",
                || "sizes must be positive and weights non-negative with a positive total".into(),
            )?;
            check(
                self.scheme == Scheme::Coded,
                "workload.size_histogram",
                || "variable-size transactions are only simulated for the coded scheme".into(),
            )?;
            check(
                self.protocol.tx_len == self.protocol.fragment_size,
                "protocol.tx_len",
                || {
                    format!(
                        "variable-size mode sends fragments, so tx_len ({}) must equal fragment_size ({})",
                        self.protocol.tx_len, self.protocol.fragment_size
                    )
                },
            )?;
        }
        self.protocol
            .validate()
            .map_err(|e| SimError::config("protocol", e.to_string()))?;

        let t = &self.topology;
        match t.generator {
            Generator::RandomRegular => {
                check(t.n >= 2, "topology.n", || {
                    format!("need at least 2 nodes, got {}", t.n)
                })?;
                check(t.degree >= 1 && t.degree < t.n, "topology.degree", || {
                    format!("must be in [1, n), got {}", t.degree)
                })?;
                check(t.delay != DelayModel::FromFile, "topology.delay", || {
                    "from_file needs generator = \"file\"".into()
                })?;
            }
            Generator::File => check(t.file.is_some(), "topology.file", || {
                "required for generator = \"file\"".into()
            })?,
        }
        match t.delay {
            DelayModel::Lognormal => check(
                t.delay_median_ms > 0.0 && t.delay_sigma >= 0.0 && t.delay_sigma.is_finite(),
                "topology.delay_median_ms",
                || {
                    format!(
                        "need median > 0 and sigma >= 0, got {} and {}",
                        t.delay_median_ms, t.delay_sigma
                    )
                },
            )?,
            DelayModel::Constant => check(
                t.delay_ms >= 0.0 && t.delay_ms.is_finite(),
                "topology.delay_ms",
                || format!("must be non-negative, got {}", t.delay_ms),
            )?,
            DelayModel::FromFile => {}
        }

        let a = &self.adversary;
        check(unit(a.fraction), "adversary.fraction", || {
            format!("must be in [0, 1], got {}", a.fraction)
        })?;
        check(
            unit(a.censored_fraction),
            "adversary.censored_fraction",
            || format!("must be in [0, 1], got {}", a.censored_fraction),
        )?;
        if a.mode == AdversaryMode::ZeroDelayAttacker {
            check(a.count >= 1, "adversary.count", || {
                "zero_delay_attacker needs count >= 1".into()
            })?;
        }

        let b = &self.baseline;
        check(
            b.jitter_max_s >= 0.0 && b.jitter_max_s.is_finite(),
            "baseline.jitter_max_s",
            || format!("must be non-negative, got {}", b.jitter_max_s),
        )?;
        check(
            b.request_timeout_s > 0.0 && b.request_timeout_s.is_finite(),
            "baseline.request_timeout_s",
            || format!("must be positive, got {}", b.request_timeout_s),
        )?;
        check(b.hash_bytes >= 1, "baseline.hash_bytes", || {
            "must be positive".into()
        })?;
        Ok(())
    }

    pub fn warmup_s(&self) -> f64 {
        self.duration_s * self.warmup_fraction
    }

    pub fn end_s(&self) -> f64 {
        self.duration_s + self.drain_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
        let cfg = SimConfig::from_toml("").unwrap();
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn parses_nested_tables() {
        let cfg = SimConfig::from_toml(
            r#"
            scheme = "shrec"
            seed = 9
            duration_s = 50
            [topology]
            n = 20
            degree = 4
            delay = "constant"
            delay_ms = 10
            [adversary]
            mode = "silent"
            fraction = 0.04
            [baseline]
            request_timeout_s = 30
            [protocol]
            k = 16
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scheme, Scheme::Shrec);
        assert_eq!(cfg.topology.n, 20);
        assert_eq!(cfg.protocol.k, 16);
        assert_eq!(cfg.protocol.tx_len, 128);
        assert_eq!(cfg.adversary.mode, AdversaryMode::Silent);
    }

    #[test]
    fn field_level_errors() {
        let err = SimConfig::from_toml("duration_s = -1")
            .unwrap_err()
            .to_string();
        assert!(err.contains("duration_s"), "{err}");
        let err = SimConfig::from_toml("[topology]\ndegree = 100")
            .unwrap_err()
            .to_string();
        assert!(err.contains("topology.degree"), "{err}");
        let err = SimConfig::from_toml("[adversary]\nfraction = 2")
            .unwrap_err()
            .to_string();
        assert!(err.contains("adversary.fraction"), "{err}");
        assert!(SimConfig::from_toml("bogus = 1").is_err());
        assert!(SimConfig::from_toml("[protocol]\ngamma = 2").is_err());
    }
}
