//! Grants, reselection counters and the keep-or-reselect decision.

use rand::Rng;

use crate::resource_grid::Csr;
use crate::{Error, Result, Subframe};

use super::{slrrc_range, SpsConfig};

/// Largest subframe distance between the two blind transmissions of a packet.
pub const MAX_RETX_OFFSET: Subframe = 14;

/// A periodic reservation. `csr` is the first initial transmission and
/// `retx`, when present, the first blind retransmission; both recur every
/// `period` subframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub csr: Csr,
    pub retx: Option<Csr>,
    pub period: Subframe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occurrence {
    Initial,
    Retx,
}

impl Grant {
    fn hits(anchor: Subframe, period: Subframe, t: Subframe) -> bool {
        t >= anchor && (t - anchor) % period == 0
    }

    pub fn occurs_at(&self, t: Subframe) -> Option<Occurrence> {
        if Grant::hits(self.csr.subframe, self.period, t) {
            Some(Occurrence::Initial)
        } else if self
            .retx
            .is_some_and(|r| Grant::hits(r.subframe, self.period, t))
        {
            Some(Occurrence::Retx)
        } else {
            None
        }
    }

    /// First initial transmission at or after `t`.
    pub fn next_initial(&self, t: Subframe) -> Subframe {
        let a = self.csr.subframe;
        if t <= a {
            a
        } else {
            a + (t - a + self.period - 1) / self.period * self.period
        }
    }

    pub fn retx_offset(&self) -> Option<Subframe> {
        self.retx.map(|r| r.subframe - self.csr.subframe)
    }
}

/// Reservation horizon: span from the first to the last of `c_resel`
/// transmissions `p_rsvp` apart.
pub fn reservation_horizon(p_rsvp: u32, c_resel: u32) -> u64 {
    p_rsvp as u64 * (c_resel as u64).saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reservation {
    pub grant: Grant,
    pub slrrc: u32,
    pub c_resel: u32,
}

impl Reservation {
    pub fn horizon(&self) -> u64 {
        reservation_horizon(self.grant.period as u32, self.c_resel)
    }
}

pub fn draw_slrrc<R: Rng + ?Sized>(p_rsvp: u32, rng: &mut R) -> u32 {
    rng.random_range(slrrc_range(p_rsvp))
}

/// Picks the grant uniformly from `s_b` and, with HARQ on, the
/// retransmission uniformly among the other members of `s_b` at most
/// [`MAX_RETX_OFFSET`] subframes away. The earlier of the two carries the
/// initial transmission.
pub fn reserve<R: Rng + ?Sized>(s_b: &[Csr], cfg: &SpsConfig, rng: &mut R) -> Result<Reservation> {
    if s_b.is_empty() {
        return Err(Error::Scheduling(
            "reserve called with an empty candidate list".into(),
        ));
    }
    let mut csr = s_b[rng.random_range(0..s_b.len())];
    let mut retx = None;
    if cfg.harq_enabled {
        let partners: Vec<Csr> = s_b
            .iter()
            .filter(|c| {
                let d = (c.subframe - csr.subframe).abs();
                (1..=MAX_RETX_OFFSET).contains(&d)
            })
            .copied()
            .collect();
        if !partners.is_empty() {
            let mut other = partners[rng.random_range(0..partners.len())];
            if other.subframe < csr.subframe {
                std::mem::swap(&mut csr, &mut other);
            }
            retx = Some(other);
        }
    }
    let slrrc = draw_slrrc(cfg.p_rsvp_ms, rng);
    Ok(Reservation {
        grant: Grant {
            csr,
            retx,
            period: cfg.p_rsvp_ms as Subframe,
        },
        slrrc,
        c_resel: 10 * slrrc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expiry {
    Keep,
    Reselect,
}

/// Keep-or-reselect when the counter runs out.
pub fn on_expiry<R: Rng + ?Sized>(cfg: &SpsConfig, rng: &mut R) -> Expiry {
    if cfg.p_resel > 0.0 && rng.random::<f64>() < cfg.p_resel {
        Expiry::Reselect
    } else {
        Expiry::Keep
    }
}

/// Why a UE must pick new resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    NoGrant,
    CounterExpired,
    /// Nothing sent for over a second.
    Idle,
    MissedOpportunities,
    Latency,
    Capacity,
}

impl Trigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            Trigger::NoGrant => "no_grant",
            Trigger::CounterExpired => "counter_expired",
            Trigger::Idle => "idle",
            Trigger::MissedOpportunities => "missed",
            Trigger::Latency => "latency",
            Trigger::Capacity => "capacity",
        }
    }
}

/// Per-UE MAC state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpsState {
    pub slrrc: u32,
    pub c_resel: u32,
    pub grant: Option<Grant>,
    pub granted_at: Subframe,
    pub last_tx: Option<Subframe>,
    pub missed: u32,
    pub threshold_dbm: f64,
}

impl SpsState {
    pub fn apply(&mut self, r: Reservation, now: Subframe, threshold_dbm: f64) {
        self.grant = Some(r.grant);
        self.slrrc = r.slrrc;
        self.c_resel = r.c_resel;
        self.granted_at = now;
        self.missed = 0;
        self.threshold_dbm = threshold_dbm;
    }

    /// Keeps the grant for a fresh counter.
    pub fn renew<R: Rng + ?Sized>(&mut self, cfg: &SpsConfig, rng: &mut R) {
        self.slrrc = draw_slrrc(cfg.p_rsvp_ms, rng);
        self.c_resel = 10 * self.slrrc;
    }

    /// First trigger that holds for a PDU of `pdu_bits` arriving at `n`,
    /// given grants carry `tb_capacity_bits`.
    pub fn trigger(
        &self,
        n: Subframe,
        pdu_bits: u32,
        tb_capacity_bits: u32,
        cfg: &SpsConfig,
    ) -> Option<Trigger> {
        let Some(g) = self.grant else {
            return Some(Trigger::NoGrant);
        };
        if self.slrrc == 0 {
            return Some(Trigger::CounterExpired);
        }
        if n - self.last_tx.unwrap_or(self.granted_at) > 1000 {
            return Some(Trigger::Idle);
        }
        if self.missed > cfg.max_missed {
            return Some(Trigger::MissedOpportunities);
        }
        if g.next_initial(n) - n > cfg.t2 as Subframe {
            return Some(Trigger::Latency);
        }
        if tb_capacity_bits < pdu_bits {
            return Some(Trigger::Capacity);
        }
        None
    }

    pub fn triggers(
        &self,
        n: Subframe,
        pdu_bits: u32,
        tb_capacity_bits: u32,
        cfg: &SpsConfig,
    ) -> bool {
        self.trigger(n, pdu_bits, tb_capacity_bits, cfg).is_some()
    }

    /// Initial transmission of a PDU at `t`.
    pub fn on_transmit(&mut self, t: Subframe) {
        self.slrrc = self.slrrc.saturating_sub(1);
        self.last_tx = Some(t);
        self.missed = 0;
    }

    /// Reserved initial opportunity passed with nothing to send.
    pub fn on_missed(&mut self) {
        self.missed += 1;
    }
}
