//! Sensing-based semi-persistent scheduling.
//!
//! On a reselection at subframe `n` a UE looks at the report window
//! `[n+t1, n+t2]`, drops candidates that collide with reservations it sensed
//! during the last `10·p_step` subframes (or that it could not sense because
//! it was transmitting), ranks the rest by average S-RSSI and picks one of
//! the quietest 20% at random. The pick then recurs every `p_rsvp` until the
//! reselection counter runs out.

mod reservation;
mod sensing_report;

use std::ops::RangeInclusive;

use rand::Rng;

pub use reservation::{
    draw_slrrc, on_expiry, reservation_horizon, reserve, Expiry, Grant, Occurrence, Reservation,
    SpsState, Trigger, MAX_RETX_OFFSET,
};
pub use sensing_report::{
    build_report_window, exempt, min_keep, rank_select, ranking_energy, substitute_rssi,
    CandidateSet, RANKING_PERIODS,
};

use crate::phy_layer::SensingRecord;
use crate::resource_grid::GridConfig;
use crate::{Error, Result, Subframe};

/// Reservation intervals a UE may signal, in ms.
pub const STANDARD_PERIODS_MS: &[u32] =
    &[20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];
pub const STANDARD_P_RESEL: &[f64] = &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SpsConfig {
    pub t1: u32,
    pub t2: u32,
    pub p_rsvp_ms: u32,
    pub p_step_ms: u32,
    pub th_sps_dbm: f64,
    pub p_resel: f64,
    pub harq_enabled: bool,
    /// Missed reserved opportunities tolerated before reselecting.
    pub max_missed: u32,
    /// Periods assumed possible for reservations hidden in unmonitored
    /// subframes.
    pub allowed_periods_ms: Vec<u32>,
}

impl Default for SpsConfig {
    fn default() -> Self {
        SpsConfig {
            t1: 1,
            t2: 100,
            p_rsvp_ms: 100,
            p_step_ms: 100,
            th_sps_dbm: -80.0,
            p_resel: 0.0,
            harq_enabled: false,
            max_missed: 1,
            allowed_periods_ms: STANDARD_PERIODS_MS.to_vec(),
        }
    }
}

impl SpsConfig {
    pub fn sensing_window(&self) -> usize {
        10 * self.p_step_ms as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.t1) {
            return Err(Error::config(format!(
                "sps.t1 = {} must be in 1..=4",
                self.t1
            )));
        }
        if !(20..=100).contains(&self.t2) {
            return Err(Error::config(format!(
                "sps.t2 = {} must be in 20..=100",
                self.t2
            )));
        }
        if !self.allowed_periods_ms.contains(&self.p_rsvp_ms) {
            return Err(Error::config(format!(
                "sps.p_rsvp_ms = {} is not one of {:?}",
                self.p_rsvp_ms, self.allowed_periods_ms
            )));
        }
        if self.allowed_periods_ms.contains(&0) || self.p_step_ms == 0 {
            return Err(Error::config("sps periods must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_resel) {
            return Err(Error::config(format!(
                "sps.p_resel = {} must be in [0, 1]",
                self.p_resel
            )));
        }
        if !self.th_sps_dbm.is_finite() {
            return Err(Error::config("sps.th_sps_dbm must be finite"));
        }
        Ok(())
    }

    /// Non-fatal oddities worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !STANDARD_P_RESEL
            .iter()
            .any(|&p| (p - self.p_resel).abs() < 1e-12)
        {
            w.push(format!(
                "sps.p_resel = {} is outside the standard set {STANDARD_P_RESEL:?}",
                self.p_resel
            ));
        }
        w
    }
}

/// Reselection counter range for a reservation interval.
pub fn slrrc_range(p_rsvp_ms: u32) -> RangeInclusive<u32> {
    if p_rsvp_ms >= 100 {
        5..=15
    } else if p_rsvp_ms >= 50 {
        10..=30
    } else {
        25..=75
    }
}

/// Longest reservation horizon a UE can hold with interval `p_ms`.
pub fn max_horizon(p_ms: u32) -> u64 {
    reservation_horizon(p_ms, 10 * *slrrc_range(p_ms).end())
}

/// Result of a full sensing-based selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub reservation: Reservation,
    pub initial_count: usize,
    pub survivor_count: usize,
    pub s_b_count: usize,
    pub final_threshold: f64,
    pub fallback: bool,
}

/// Runs report window, exclusion, ranking and reservation for a UE deciding
/// at `n` with sensing data through `n - 1`.
pub fn select<R: Rng + ?Sized>(
    n: Subframe,
    record: &SensingRecord,
    cfg: &SpsConfig,
    grid: &GridConfig,
    rng: &mut R,
) -> Result<Selection> {
    if record.latest() >= n {
        return Err(Error::Invariant(format!(
            "selection at {n} would see sensing data from {}",
            record.latest()
        )));
    }
    let candidates = build_report_window(n, cfg, grid);
    let set = exempt(&candidates, record, n, cfg);
    let s_b = rank_select(&set, record, n, cfg);
    let reservation = reserve(&s_b, cfg, rng)?;
    Ok(Selection {
        reservation,
        initial_count: set.initial_count,
        survivor_count: set.survivors.len(),
        s_b_count: s_b.len(),
        final_threshold: set.final_threshold,
        fallback: set.fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy_layer::SciEntry;
    use crate::resource_grid::Csr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slrrc_ranges() {
        assert_eq!(slrrc_range(100), 5..=15);
        assert_eq!(slrrc_range(1000), 5..=15);
        assert_eq!(slrrc_range(50), 10..=30);
        assert_eq!(slrrc_range(20), 25..=75);
        assert_eq!(max_horizon(100), 100 * 149);
    }

    #[test]
    fn config_validation() {
        assert!(SpsConfig::default().validate().is_ok());
        let bad_t2 = SpsConfig {
            t2: 150,
            ..SpsConfig::default()
        };
        assert!(bad_t2.validate().is_err());
        let bad_t1 = SpsConfig {
            t1: 5,
            ..SpsConfig::default()
        };
        assert!(bad_t1.validate().is_err());
        let odd = SpsConfig {
            p_resel: 0.5,
            ..SpsConfig::default()
        };
        assert!(odd.validate().is_ok());
        assert_eq!(odd.warnings().len(), 1);
        assert!(SpsConfig::default().warnings().is_empty());
    }

    #[test]
    fn selection_is_deterministic_and_avoids_strong_neighbours() {
        let grid = GridConfig::default();
        let cfg = SpsConfig::default();
        let n = 2000;
        let mut rec = SensingRecord::new(1000, 5, 1e-10);
        for t in 0..n {
            rec.push_monitored(t, &[1e-10; 5]);
            if t % 100 < 50 {
                rec.push_sci(SciEntry {
                    tx: 9,
                    csr: Csr::new(t, 0, 2),
                    rsrp_dbm: -60.0,
                    period_ms: 100,
                    retx: false,
                });
            }
        }
        let a = select(n, &rec, &cfg, &grid, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = select(n, &rec, &cfg, &grid, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.initial_count, 200);
        assert_eq!(a.survivor_count, 150);
        assert_eq!(a.s_b_count, 40);
        let g = a.reservation.grant.csr;
        assert!(g.start_subch == 2 || g.subframe % 100 >= 50, "{g}");
    }

    #[test]
    fn selection_refuses_same_subframe_data() {
        let mut rec = SensingRecord::new(1000, 5, 1e-10);
        rec.push_monitored(0, &[1e-10; 5]);
        let err = select(
            0,
            &rec,
            &SpsConfig::default(),
            &GridConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(matches!(err, Err(Error::Invariant(_))));
    }
}
