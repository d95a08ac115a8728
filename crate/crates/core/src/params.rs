use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderConfig, DEFAULT_PEELING_WINDOW};
use crate::degree::DegreeDistribution;
use crate::error::{Error, Result};
use crate::fragment::DEFAULT_FRAGMENT_SIZE;
use crate::rate::RateParams;
use crate::txid::{IdWidth, DEFAULT_ID_BYTES};

/// Protocol knobs; the defaults are the settings used by the desk-scale recipes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Transaction (or fragment) size in bytes.
    pub tx_len: usize,
    /// Coding window size.
    pub k: usize,
    pub soliton_c: f64,
    pub soliton_delta: f64,
    /// Cap on codeword degree; `None` means `k`.
    pub max_degree: Option<usize>,
    pub id_bytes: usize,
    /// Peeling window size.
    pub peeling_window: usize,
    /// Undecoded codewords kept per link; `None` means `10 * k`.
    pub pending_cap: Option<usize>,
    pub gamma: f64,
    pub alpha: f64,
    /// Decoding timeout in seconds.
    pub tau: f64,
    /// Initial codeword rate per link; `None` means 100/s.
    pub initial_rate: Option<f64>,
    pub r_min: f64,
    pub r_max: f64,
    /// Fragment size for variable-size transactions.
    pub fragment_size: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        let rate = RateParams::default();
        ProtocolParams {
            tx_len: 128,
            k: 50,
            soliton_c: 0.03,
            soliton_delta: 0.5,
            max_degree: None,
            id_bytes: DEFAULT_ID_BYTES,
            peeling_window: DEFAULT_PEELING_WINDOW,
            pending_cap: None,
            gamma: rate.gamma,
            alpha: rate.alpha,
            tau: rate.tau,
            initial_rate: None,
            r_min: rate.r_min,
            r_max: rate.r_max,
            fragment_size: DEFAULT_FRAGMENT_SIZE,
        }
    }
}

pub const DEFAULT_INITIAL_RATE: f64 = 100.0;

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        self.degree_distribution()?;
        self.decoder_config()?;
        self.rate_params().validate()?;
        if let Some(r) = self.initial_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config(format!(
                    "initial_rate must be positive, got {r}"
                )));
            }
        }
        if self.fragment_size <= crate::fragment::FRAGMENT_HEADER_BYTES {
            return Err(Error::config(format!(
                "fragment_size must exceed 35, got {}",
                self.fragment_size
            )));
        }
        Ok(())
    }

    pub fn id_width(&self) -> Result<IdWidth> {
        IdWidth::new(self.id_bytes)
    }

    pub fn degree_distribution(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::robust_soliton(
            self.k,
            self.soliton_c,
            self.soliton_delta,
            self.max_degree.unwrap_or(self.k),
        )
    }

    pub fn decoder_config(&self) -> Result<DecoderConfig> {
        DecoderConfig::new(
            self.tx_len,
            self.id_width()?,
            self.peeling_window,
            self.pending_cap.unwrap_or(10 * self.k),
        )
    }

    pub fn rate_params(&self) -> RateParams {
        RateParams {
            gamma: self.gamma,
            alpha: self.alpha,
            tau: self.tau,
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }

    pub fn initial_rate(&self) -> f64 {
        self.initial_rate.unwrap_or(DEFAULT_INITIAL_RATE)
    }

    /// Interval between timeout scans.
    pub fn timeout_tick(&self) -> f64 {
        self.tau / 2.0
    }
}
