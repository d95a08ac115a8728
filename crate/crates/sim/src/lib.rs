//! Deterministic discrete-event simulator for coded transaction broadcast
//! and the store-and-forward baselines it is compared against.
//!
//! Time is kept in integer nanoseconds and every source of randomness is a
//! seeded stream derived from the run seed, so a configuration always
//! produces the same report.

pub mod baselines;
pub mod coded;
pub mod config;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod network;
pub mod queue;
pub mod topology;
pub mod workload;

pub use config::{AdversaryMode, Scheme, SimConfig};
pub use error::{Result, SimError};
pub use metrics::{MetricsReport, Summary};
pub use network::Network;
pub use queue::SimTime;
pub use topology::{random_regular, Topology};
pub use workload::TxRecord;

/// Everything a run produces.
#[derive(Debug)]
pub struct SimOutput {
    pub report: MetricsReport,
    /// `arrivals[tx][node]`: first time `node` held `tx`, or
    /// [`metrics::NOT_ARRIVED`]. Only when `record_arrivals` is set.
    pub arrivals: Option<Vec<Vec<SimTime>>>,
    pub txs: Vec<TxRecord>,
    pub network: Network,
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    tracing::debug!(
        scheme = cfg.scheme.name(),
        seed = cfg.seed,
        "starting simulation"
    );
    match cfg.scheme {
        Scheme::Coded => coded::run(cfg),
        Scheme::Flooding | Scheme::Bitcoin | Scheme::Shrec => baselines::run(cfg),
    }
}
