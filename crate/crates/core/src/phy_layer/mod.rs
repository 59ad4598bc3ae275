//! Transceiver model: link budget, SINR with co-channel interference,
//! half-duplex gating, BLER-driven decoding and the sensing record.
//!
//! Power is treated as spread evenly over a transmission's RBs, so the share
//! of another transmission that lands in a band is proportional to the RB
//! overlap.

mod bler;
mod sensing;

use std::fmt;
use std::str::FromStr;

pub use bler::{decode, decode_with, BlerCurve, Decode};
pub use sensing::{SciEntry, SensingRecord};

use crate::resource_grid::{Csr, GridConfig, SCI_RBS, SUBCARRIERS_PER_RB};
use crate::{Error, Result};

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// How the SCI that precedes every TB is judged decodable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SciModel {
    /// Received SCI power above sensitivity and SINR above the threshold.
    #[default]
    Threshold,
    /// Received SCI power above sensitivity is enough.
    AboveSensitivity,
}

impl fmt::Display for SciModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SciModel::Threshold => f.write_str("threshold"),
            SciModel::AboveSensitivity => f.write_str("above_sensitivity"),
        }
    }
}

impl FromStr for SciModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SciModel::Threshold),
            "above_sensitivity" => Ok(SciModel::AboveSensitivity),
            other => Err(Error::config(format!(
                "unknown SCI model {other:?} (expected threshold or above_sensitivity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    /// Per end of the link.
    pub antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
    /// Receive diversity is folded into the BLER curve.
    pub rx_antennas: u32,
    pub noise_density_dbm_hz: f64,
    pub rb_bandwidth_hz: f64,
    pub sci_sensitivity_dbm: f64,
    pub sci_sinr_threshold_db: f64,
    pub sci_model: SciModel,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_dbm: 23.0,
            antenna_gain_dbi: 3.0,
            noise_figure_db: 9.0,
            rx_antennas: 2,
            noise_density_dbm_hz: -174.0,
            rb_bandwidth_hz: 180e3,
            sci_sensitivity_dbm: -107.0,
            sci_sinr_threshold_db: 0.0,
            sci_model: SciModel::Threshold,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("radio.tx_power_dbm", self.tx_power_dbm),
            ("radio.antenna_gain_dbi", self.antenna_gain_dbi),
            ("radio.noise_figure_db", self.noise_figure_db),
            ("radio.noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("radio.rb_bandwidth_hz", self.rb_bandwidth_hz),
            ("radio.sci_sensitivity_dbm", self.sci_sensitivity_dbm),
            ("radio.sci_sinr_threshold_db", self.sci_sinr_threshold_db),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        // 33 dBm is the ITS-band EIRP ceiling for this class of device
        if self.tx_power_dbm > 33.0 {
            return Err(Error::config(format!(
                "radio.tx_power_dbm {} exceeds 33 dBm",
                self.tx_power_dbm
            )));
        }
        if self.rb_bandwidth_hz <= 0.0 || self.rx_antennas == 0 {
            return Err(Error::config(
                "radio.rb_bandwidth_hz and radio.rx_antennas must be positive",
            ));
        }
        Ok(())
    }

    /// Received power before fading for a link with `loss_db` attenuation.
    pub fn received_power(&self, loss_db: f64) -> f64 {
        self.tx_power_dbm + 2.0 * self.antenna_gain_dbi - loss_db
    }

    pub fn noise_floor(&self, n_rb: u32) -> f64 {
        self.noise_density_dbm_hz
            + linear_to_db(n_rb as f64 * self.rb_bandwidth_hz)
            + self.noise_figure_db
    }

    /// `true` if the SCI of a transmission received at `rx_total_mw` over `n_rb` RBs and the
    /// given SINR can be decoded.
    pub fn sci_decodable(&self, rx_total_mw: f64, n_rb: u32, sinr_db: f64) -> bool {
        let sci_mw = rx_total_mw * SCI_RBS as f64 / n_rb as f64;
        let above = linear_to_db(sci_mw) >= self.sci_sensitivity_dbm;
        match self.sci_model {
            SciModel::Threshold => above && sinr_db >= self.sci_sinr_threshold_db,
            SciModel::AboveSensitivity => above,
        }
    }
}

/// `tx + 2·gain − loss` in dBm.
pub fn received_power(cfg: &RadioConfig, loss_db: f64) -> f64 {
    cfg.received_power(loss_db)
}

pub fn noise_floor(n_rb: u32, cfg: &RadioConfig) -> f64 {
    cfg.noise_floor(n_rb)
}

/// Linear-domain `signal / (Σ interferers + noise)` in dB.
pub fn sinr(signal_dbm: f64, interferers_dbm: &[f64], noise_dbm: f64) -> f64 {
    let i: f64 = interferers_dbm.iter().map(|&p| db_to_linear(p)).sum();
    signal_dbm - linear_to_db(i + db_to_linear(noise_dbm))
}

/// Per-RE received power of a transmission spread over `n_rb` RBs.
pub fn rsrp_dbm(rx_total_mw: f64, n_rb: u32) -> f64 {
    linear_to_db(rx_total_mw) - linear_to_db((SUBCARRIERS_PER_RB * n_rb) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    MayReceive,
    Transmitting,
}

/// A UE transmitting in this subframe cannot receive in it.
pub fn half_duplex_gate(ue: u32, txs: &[Transmission]) -> Gate {
    if txs.iter().any(|t| t.tx == ue) {
        Gate::Transmitting
    } else {
        Gate::MayReceive
    }
}

/// One SCI+TB on the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub tx: u32,
    pub csr: Csr,
    /// RBs occupied, SCI included.
    pub n_rb: u32,
    pub packet: u64,
    pub retx: bool,
    pub period_ms: u32,
}

impl Transmission {
    fn rb_span(&self, subchannel_size: u32) -> (u32, u32) {
        let lo = self.csr.start_subch * subchannel_size;
        (lo, lo + self.n_rb)
    }
}

fn overlap(a: (u32, u32), b: (u32, u32)) -> u32 {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// RB-overlap weights for the transmissions of one subframe, shared by every
/// receiver.
#[derive(Debug, Clone, Default)]
pub struct SubframePlan {
    n: usize,
    n_subch: usize,
    /// `w[i * n + k]`: fraction of transmission `k` inside the band of `i`.
    pair: Vec<f64>,
    /// `s[k * n_subch + j]`: fraction of transmission `k` in sub-channel `j`.
    subch: Vec<f64>,
    n_rb: Vec<u32>,
}

impl SubframePlan {
    pub fn new(txs: &[Transmission], grid: &GridConfig) -> Self {
        let n = txs.len();
        let n_subch = grid.n_subch() as usize;
        let size = grid.subchannel_size;
        let spans: Vec<(u32, u32)> = txs.iter().map(|t| t.rb_span(size)).collect();
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    pair[i * n + k] = overlap(spans[i], spans[k]) as f64 / txs[k].n_rb as f64;
                }
            }
        }
        let mut subch = vec![0.0; n * n_subch];
        for k in 0..n {
            for j in 0..n_subch {
                let band = (j as u32 * size, (j as u32 + 1) * size);
                subch[k * n_subch + j] = overlap(spans[k], band) as f64 / txs[k].n_rb as f64;
            }
        }
        SubframePlan {
            n,
            n_subch,
            pair,
            subch,
            n_rb: txs.iter().map(|t| t.n_rb).collect(),
        }
    }

    /// SINR (dB) of each transmission at a receiver that sees powers
    /// `rx_mw`, with `noise_rb_mw` thermal noise per RB.
    pub fn sinr_db(&self, rx_mw: &[f64], noise_rb_mw: f64, out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.n {
            let w = &self.pair[i * self.n..(i + 1) * self.n];
            let interference: f64 = w.iter().zip(rx_mw).map(|(w, p)| w * p).sum();
            let noise = noise_rb_mw * self.n_rb[i] as f64;
            out.push(linear_to_db(rx_mw[i] / (interference + noise)));
        }
    }

    /// S-RSSI (mW) per sub-channel: noise plus every transmission's share.
    pub fn rssi_mw(&self, rx_mw: &[f64], noise_subch_mw: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.n_subch, noise_subch_mw);
        for (k, p) in rx_mw.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.subch[k * self.n_subch..]) {
                *o += w * p;
            }
        }
    }
}
