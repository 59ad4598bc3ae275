//! Brute-force reference implementations and random instance generators
//! shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spssim::phy_layer::{SciEntry, SensingRecord};
use spssim::resource_grid::{Csr, GridConfig};
use spssim::sps_scheduler::SpsConfig;
use spssim::Subframe;

/// A small selection problem: a filled sensing record and the decision time.
pub struct Instance {
    pub n: Subframe,
    pub grid: GridConfig,
    pub cfg: SpsConfig,
    pub record: SensingRecord,
    pub window: usize,
    pub n_subch: u32,
    /// Monitored flag per absolute subframe `n - window .. n`.
    pub monitored: Vec<bool>,
    /// S-RSSI per absolute subframe and sub-channel (mW), NaN if unmonitored.
    pub rssi: Vec<Vec<f64>>,
    pub scis: Vec<SciEntry>,
    pub idle_mw: f64,
}

/// Largest SLRRC for a reservation interval, straight from the ranges
/// 5..15 (P >= 100), 10..30 (P = 50), 25..75 (shorter).
pub fn max_slrrc(p: u32) -> u64 {
    match p {
        p if p >= 100 => 15,
        p if p >= 50 => 30,
        _ => 75,
    }
}

/// Random instance with `n_subch <= 4`, a 30-subframe sensing window and at
/// most five sensed SCIs.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_subch: u32 = rng.random_range(1..=4);
    let l_subch: u32 = rng.random_range(1..=n_subch);
    let size = 10;
    let grid = GridConfig {
        bandwidth_rbs: n_subch * size,
        subchannel_size: size,
        l_subch,
        ..GridConfig::default()
    };
    let p_step = 3;
    let window = 10 * p_step as usize;
    let mut periods = vec![3u32, 6, 20, 50, 100];
    periods.shuffle(&mut rng);
    periods.truncate(rng.random_range(1..=3));
    periods.sort_unstable();
    let t1 = rng.random_range(1..=4);
    let t2 = rng.random_range(t1..=t1 + 25);
    let cfg = SpsConfig {
        t1,
        t2,
        p_rsvp_ms: periods[0],
        p_step_ms: p_step,
        th_sps_dbm: rng.random_range(-90.0..-70.0),
        allowed_periods_ms: periods.clone(),
        ..SpsConfig::default()
    };
    let idle_mw = 1e-10;
    let n: Subframe = window as Subframe + rng.random_range(0..5);
    let mut record = SensingRecord::new(window, n_subch as usize, idle_mw);
    let p_unmon = rng.random_range(0.0..0.2);
    let mut monitored = Vec::new();
    let mut rssi = Vec::new();
    let mut scis = Vec::new();
    let sci_budget = rng.random_range(0..=5usize);
    for t in 0..n {
        let mon = !rng.random_bool(p_unmon);
        let row: Vec<f64> = (0..n_subch)
            .map(|_| 10f64.powf(rng.random_range(-10.5..-7.0)))
            .collect();
        if mon {
            record.push_monitored(t, &row);
        } else {
            record.push_unmonitored(t);
        }
        let mut fresh = Vec::new();
        if mon && t >= n - window as Subframe && scis.len() < sci_budget && rng.random_bool(0.3) {
            let start = rng.random_range(0..n_subch);
            let len = rng.random_range(1..=n_subch - start);
            let e = SciEntry {
                tx: rng.random_range(0..10),
                csr: Csr::new(t, start, len),
                rsrp_dbm: rng.random_range(-95.0..-60.0),
                period_ms: periods[rng.random_range(0..periods.len())],
                retx: rng.random_bool(0.2),
            };
            record.push_sci(e);
            fresh.push(e);
        }
        if t >= n - window as Subframe {
            monitored.push(mon);
            rssi.push(if mon {
                row
            } else {
                vec![f64::NAN; n_subch as usize]
            });
            scis.extend(fresh);
        }
    }
    Instance {
        n,
        grid,
        cfg,
        record,
        window,
        n_subch,
        monitored,
        rssi,
        scis,
        idle_mw,
    }
}

impl Instance {
    fn slot(&self, z: Subframe) -> Option<usize> {
        let lo = self.n - self.window as Subframe;
        (z >= lo && z < self.n).then(|| (z - lo) as usize)
    }

    /// Every CSR of the report window, enumerated directly.
    pub fn candidates(&self) -> Vec<Csr> {
        let l = self.grid.l_subch;
        let mut out = Vec::new();
        for y in self.n + self.cfg.t1 as Subframe..=self.n + self.cfg.t2 as Subframe {
            let mut x = 0;
            while x + l <= self.n_subch {
                out.push(Csr::new(y, x, l));
                x += l;
            }
        }
        out
    }

    /// Condition 1 by enumeration of every (z, P, k).
    pub fn c1(&self, c: &Csr) -> bool {
        for (i, &mon) in self.monitored.iter().enumerate() {
            if mon {
                continue;
            }
            let z = self.n - self.window as Subframe + i as Subframe;
            for &p in &self.cfg.allowed_periods_ms {
                let horizon = p as u64 * (10 * max_slrrc(p) - 1);
                let mut k = 1u64;
                while k * p as u64 <= horizon {
                    let y = z + (k * p as u64) as Subframe;
                    if y == c.subframe {
                        return true;
                    }
                    if y > c.subframe {
                        break;
                    }
                    k += 1;
                }
            }
        }
        false
    }

    /// Condition 2 at threshold `th`: some sensed SCI at or above `th`
    /// projects onto `c` with a shared sub-channel.
    pub fn c2(&self, c: &Csr, th: f64) -> bool {
        self.scis
            .iter()
            .any(|e| e.rsrp_dbm >= th && self.projects(e, c))
    }

    fn projects(&self, e: &SciEntry, c: &Csr) -> bool {
        let p = e.period_ms as u64;
        let horizon = p * (10 * max_slrrc(e.period_ms) - 1);
        let shares = (c.start_subch..c.start_subch + c.l_subch)
            .any(|j| j >= e.csr.start_subch && j < e.csr.start_subch + e.csr.l_subch);
        if !shares {
            return false;
        }
        (1..)
            .map(|k: u64| k * p)
            .take_while(|&d| d <= horizon)
            .any(|d| e.csr.subframe + d as Subframe == c.subframe)
    }

    /// Minimal-k threshold search, recomputing every exclusion from scratch
    /// for each candidate threshold. Returns (survivors, threshold, fallback).
    pub fn oracle_exempt(&self) -> (Vec<Csr>, f64, bool) {
        let all = self.candidates();
        let need = all.len().div_ceil(5);
        for k in 0.. {
            let th = self.cfg.th_sps_dbm + 3.0 * k as f64;
            let survivors: Vec<Csr> = all
                .iter()
                .filter(|c| !self.c1(c) && !self.c2(c, th))
                .copied()
                .collect();
            if survivors.len() >= need {
                return (survivors, th, false);
            }
            if !all.iter().any(|c| self.c2(c, th)) {
                return (all, th, true);
            }
        }
        unreachable!()
    }

    /// Mean monitored S-RSSI per sub-channel over the window.
    pub fn substitute(&self) -> Vec<f64> {
        let rows: Vec<&Vec<f64>> = self
            .rssi
            .iter()
            .zip(&self.monitored)
            .filter(|(_, m)| **m)
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            return vec![self.idle_mw; self.n_subch as usize];
        }
        (0..self.n_subch as usize)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    }

    /// Ranking energy of `c`, recomputed from the raw samples. Summed
    /// smallest first so that equal sample sets give equal energies.
    pub fn energy(&self, c: &Csr) -> f64 {
        let sub = self.substitute();
        let mut values = Vec::new();
        for j in c.start_subch..c.start_subch + c.l_subch {
            for i in 1..=10 {
                let z = c.subframe - i * self.cfg.p_step_ms as Subframe;
                values.push(match self.slot(z) {
                    Some(s) if self.monitored[s] => self.rssi[s][j as usize],
                    _ => sub[j as usize],
                });
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut total = 0.0;
        for v in values {
            total += v;
        }
        total / 10.0
    }

    /// S_B by full sort of oracle energies.
    pub fn oracle_s_b(&self, survivors: &[Csr]) -> Vec<Csr> {
        let need = self.candidates().len().div_ceil(5);
        let mut scored: Vec<(f64, Csr)> = survivors.iter().map(|c| (self.energy(c), *c)).collect();
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then((a.1.subframe, a.1.start_subch).cmp(&(b.1.subframe, b.1.start_subch)))
        });
        scored.into_iter().take(need).map(|(_, c)| c).collect()
    }
}
