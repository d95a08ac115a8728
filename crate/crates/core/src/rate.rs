//! Per-link MIMD codeword rate controller.
//!
//! Each sent codeword shrinks the rate by `r * alpha * gamma`; each loss event
//! reported by the receiver grows it by `r * alpha`. The two balance exactly
//! when the receiver's loss probability equals `gamma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Target loss rate.
    pub gamma: f64,
    /// Aggressiveness.
    pub alpha: f64,
    /// Decoding timeout in seconds, mirrored from the receiver.
    pub tau: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams {
            gamma: 0.02,
            alpha: 0.1,
            tau: 0.5,
            r_min: 1.0,
            r_max: 1e6,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!(
                "gamma must be in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.alpha * self.gamma >= 1.0 {
            return Err(Error::config("alpha * gamma must be below 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::config(format!(
                "need 0 < r_min <= r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateController {
    params: RateParams,
    rate: f64,
    next_send: f64,
}

impl RateController {
    pub fn new(params: RateParams, initial_rate: f64) -> Result<Self> {
        params.validate()?;
        if !(initial_rate > 0.0 && initial_rate.is_finite()) {
            return Err(Error::config(format!(
                "initial rate must be positive, got {initial_rate}"
            )));
        }
        Ok(RateController {
            params,
            rate: initial_rate.clamp(params.r_min, params.r_max),
            next_send: 0.0,
        })
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    /// Current rate in codewords per second.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn next_send(&self) -> f64 {
        self.next_send
    }

    pub fn on_codeword_sent(&mut self) -> f64 {
        let p = &self.params;
        self.rate = (self.rate * (1.0 - p.alpha * p.gamma)).max(p.r_min);
        self.rate
    }

    /// Applies `events` loss reports, one multiplicative step each.
    pub fn on_loss_report(&mut self, events: u64) -> f64 {
        let p = &self.params;
        for _ in 0..events {
            self.rate = (self.rate * (1.0 + p.alpha)).min(p.r_max);
        }
        self.rate
    }

    /// Schedules the next codeword one interval of the current rate after `now`.
    pub fn next_send_time(&mut self, now: f64) -> f64 {
        self.next_send = now + 1.0 / self.rate;
        self.next_send
    }
}
