//! Per-UE record of the last `window` subframes: monitored flag and
//! per-sub-channel S-RSSI for each slot, plus the SCIs decoded in them.

use std::collections::VecDeque;

use crate::resource_grid::Csr;
use crate::Subframe;

/// Reservation metadata read from a decoded SCI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SciEntry {
    pub tx: u32,
    pub csr: Csr,
    pub rsrp_dbm: f64,
    /// Signalled reservation interval.
    pub period_ms: u32,
    pub retx: bool,
}

#[derive(Debug, Clone)]
pub struct SensingRecord {
    window: usize,
    n_subch: usize,
    slot_time: Vec<Subframe>,
    monitored: Vec<bool>,
    rssi_mw: Vec<f64>,
    scis: VecDeque<SciEntry>,
    min_rsrp_dbm: f64,
    idle_rssi_mw: f64,
    latest: Subframe,
}

impl SensingRecord {
    /// A record whose pre-history (subframes `-window..-1`) reads as
    /// monitored, with `idle_rssi_mw` on every sub-channel.
    pub fn new(window: usize, n_subch: usize, idle_rssi_mw: f64) -> Self {
        assert!(window > 0 && n_subch > 0);
        let mut slot_time = vec![0; window];
        for z in -(window as Subframe)..0 {
            slot_time[z.rem_euclid(window as Subframe) as usize] = z;
        }
        SensingRecord {
            window,
            n_subch,
            slot_time,
            monitored: vec![true; window],
            rssi_mw: vec![idle_rssi_mw; window * n_subch],
            scis: VecDeque::new(),
            min_rsrp_dbm: f64::NEG_INFINITY,
            idle_rssi_mw,
            latest: -1,
        }
    }

    /// Stop retaining SCIs weaker than `dbm`. Exclusion thresholds only ever
    /// rise from their starting value, so entries below it can never matter.
    pub fn with_rsrp_floor(mut self, dbm: f64) -> Self {
        self.min_rsrp_dbm = dbm;
        self
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_subch(&self) -> usize {
        self.n_subch
    }

    /// Most recent recorded subframe.
    pub fn latest(&self) -> Subframe {
        self.latest
    }

    fn slot(&self, z: Subframe) -> Option<usize> {
        let i = z.rem_euclid(self.window as Subframe) as usize;
        (self.slot_time[i] == z).then_some(i)
    }

    fn advance(&mut self, t: Subframe) -> usize {
        assert!(
            t > self.latest,
            "sensing record written out of order: {t} after {}",
            self.latest
        );
        self.latest = t;
        let oldest = t - self.window as Subframe;
        while self.scis.front().is_some_and(|e| e.csr.subframe <= oldest) {
            self.scis.pop_front();
        }
        let i = t.rem_euclid(self.window as Subframe) as usize;
        self.slot_time[i] = t;
        i
    }

    pub fn push_monitored(&mut self, t: Subframe, rssi_mw: &[f64]) {
        debug_assert_eq!(rssi_mw.len(), self.n_subch);
        let i = self.advance(t);
        self.monitored[i] = true;
        self.rssi_mw[i * self.n_subch..(i + 1) * self.n_subch].copy_from_slice(rssi_mw);
    }

    /// Own transmission: nothing heard, slot flagged for exclusion.
    pub fn push_unmonitored(&mut self, t: Subframe) {
        let i = self.advance(t);
        self.monitored[i] = false;
        self.rssi_mw[i * self.n_subch..(i + 1) * self.n_subch].fill(f64::NAN);
    }

    /// Adds an SCI decoded in the latest recorded subframe.
    pub fn push_sci(&mut self, e: SciEntry) {
        debug_assert_eq!(e.csr.subframe, self.latest);
        if e.rsrp_dbm >= self.min_rsrp_dbm {
            self.scis.push_back(e);
        }
    }

    /// `None` when `z` is outside the record.
    pub fn is_monitored(&self, z: Subframe) -> Option<bool> {
        self.slot(z).map(|i| self.monitored[i])
    }

    /// S-RSSI of sub-channel `j` at `z`; `None` if unmonitored or not held.
    pub fn rssi(&self, z: Subframe, j: usize) -> Option<f64> {
        let i = self.slot(z)?;
        self.monitored[i].then(|| self.rssi_mw[i * self.n_subch + j])
    }

    /// Decoded SCIs in the sensing window ending at `n - 1`, oldest first.
    pub fn scis_before(&self, n: Subframe) -> impl Iterator<Item = &SciEntry> + '_ {
        let lo = n - self.window as Subframe;
        self.scis
            .iter()
            .filter(move |e| e.csr.subframe >= lo && e.csr.subframe < n)
    }

    /// Per-sub-channel mean S-RSSI over the monitored slots of the sensing
    /// window ending at `n - 1`, or the idle level if none were monitored.
    pub fn mean_rssi(&self, n: Subframe) -> Vec<f64> {
        let mut sum = vec![0.0; self.n_subch];
        let mut count = 0usize;
        for z in n - self.window as Subframe..n {
            if let Some(i) = self.slot(z) {
                if self.monitored[i] {
                    count += 1;
                    for (s, v) in sum.iter_mut().zip(&self.rssi_mw[i * self.n_subch..]) {
                        *s += v;
                    }
                }
            }
        }
        if count == 0 {
            return vec![self.idle_rssi_mw; self.n_subch];
        }
        sum.iter().map(|s| s / count as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sci(t: Subframe, rsrp: f64) -> SciEntry {
        SciEntry {
            tx: 1,
            csr: Csr::new(t, 0, 2),
            rsrp_dbm: rsrp,
            period_ms: 100,
            retx: false,
        }
    }

    #[test]
    fn prehistory_reads_idle() {
        let r = SensingRecord::new(10, 3, 1e-10);
        assert_eq!(r.is_monitored(-10), Some(true));
        assert_eq!(r.rssi(-1, 2), Some(1e-10));
        assert_eq!(r.is_monitored(-11), None);
        assert_eq!(r.is_monitored(0), None);
    }

    #[test]
    fn own_transmission_has_no_rssi() {
        let mut r = SensingRecord::new(10, 2, 1e-10);
        r.push_monitored(0, &[1e-9, 2e-9]);
        r.push_unmonitored(1);
        assert_eq!(r.is_monitored(1), Some(false));
        assert_eq!(r.rssi(1, 0), None);
        assert_eq!(r.rssi(0, 1), Some(2e-9));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut r = SensingRecord::new(4, 1, 0.0);
        for t in 0..6 {
            r.push_monitored(t, &[t as f64]);
            r.push_sci(sci(t, -70.0));
        }
        assert_eq!(r.rssi(1, 0), None);
        assert_eq!(r.rssi(2, 0), Some(2.0));
        let held: Vec<Subframe> = r.scis_before(6).map(|e| e.csr.subframe).collect();
        assert_eq!(held, vec![2, 3, 4, 5]);
        let before5: Vec<Subframe> = r.scis_before(5).map(|e| e.csr.subframe).collect();
        assert_eq!(before5, vec![2, 3, 4]);
    }

    #[test]
    fn rsrp_floor_drops_weak_entries() {
        let mut r = SensingRecord::new(4, 1, 0.0).with_rsrp_floor(-80.0);
        r.push_monitored(0, &[0.0]);
        r.push_sci(sci(0, -85.0));
        r.push_sci(sci(0, -80.0));
        assert_eq!(r.scis_before(1).count(), 1);
    }

    #[test]
    fn mean_skips_unmonitored() {
        let mut r = SensingRecord::new(3, 1, 1.0);
        r.push_monitored(0, &[4.0]);
        r.push_unmonitored(1);
        r.push_monitored(2, &[7.0]);
        assert_eq!(r.mean_rssi(3), vec![5.5]);
        r.push_unmonitored(3);
        r.push_unmonitored(4);
        r.push_unmonitored(5);
        assert_eq!(r.mean_rssi(6), vec![1.0]);
        assert_eq!(SensingRecord::new(3, 1, 2.0).mean_rssi(0), vec![2.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_order_write_panics() {
        let mut r = SensingRecord::new(3, 1, 1.0);
        r.push_monitored(5, &[1.0]);
        r.push_monitored(5, &[1.0]);
    }
}
