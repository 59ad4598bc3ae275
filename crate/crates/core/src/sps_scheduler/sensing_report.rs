//! Candidate construction: report window, exclusion and energy ranking.

use crate::phy_layer::SensingRecord;
use crate::resource_grid::{Csr, GridConfig};
use crate::Subframe;

use super::{max_horizon, SpsConfig};

/// Number of past periods averaged when ranking a candidate.
pub const RANKING_PERIODS: i64 = 10;

/// Outcome of the exclusion stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub initial_count: usize,
    pub survivors: Vec<Csr>,
    pub final_threshold: f64,
    /// Exclusion left too few candidates even with every reservation
    /// ignored, so the whole report window was restored.
    pub fallback: bool,
}

/// Minimum S_B size for `initial` candidates: 20%, rounded up.
pub fn min_keep(initial: usize) -> usize {
    initial.div_ceil(5)
}

/// Every CSR in `[n+t1, n+t2]` whose start is a multiple of `l_subch`, in
/// (subframe, start) order.
pub fn build_report_window(n: Subframe, cfg: &SpsConfig, grid: &GridConfig) -> Vec<Csr> {
    let per_sf = grid.csrs_per_subframe();
    let mut out =
        Vec::with_capacity((cfg.t2.saturating_sub(cfg.t1) + 1) as usize * per_sf as usize);
    for y in n + cfg.t1 as Subframe..=n + cfg.t2 as Subframe {
        for c in 0..per_sf {
            out.push(Csr::new(y, c * grid.l_subch, grid.l_subch));
        }
    }
    out
}

/// Per-candidate exclusion inputs: Condition 1 hit, and the strongest RSRP
/// among sensed reservations projecting onto it.
#[derive(Debug, Clone)]
struct Exposure {
    c1: Vec<bool>,
    c2_rsrp: Vec<f64>,
}

fn exposure(candidates: &[Csr], record: &SensingRecord, n: Subframe, cfg: &SpsConfig) -> Exposure {
    let mut c1 = vec![false; candidates.len()];
    let mut c2_rsrp = vec![f64::NEG_INFINITY; candidates.len()];
    let Some(first) = candidates.first() else {
        return Exposure { c1, c2_rsrp };
    };
    let y_lo = first.subframe;
    let y_hi = candidates.last().map_or(y_lo, |c| c.subframe);
    // candidates of one subframe are contiguous
    let mut by_sf: Vec<(usize, usize)> = vec![(0, 0); (y_hi - y_lo + 1) as usize];
    for (i, c) in candidates.iter().enumerate() {
        let e = &mut by_sf[(c.subframe - y_lo) as usize];
        if e.1 == 0 {
            e.0 = i;
        }
        e.1 += 1;
    }

    // Projections z + k·P, k >= 1, landing in [y_lo, y_hi] within the horizon.
    let hits = |z: Subframe, p: Subframe, f: &mut dyn FnMut(Subframe)| {
        if p <= 0 {
            return;
        }
        let horizon = max_horizon(p as u32) as Subframe;
        let k0 = ((y_lo - z) + p - 1).div_euclid(p).max(1);
        let mut k = k0;
        while z + k * p <= y_hi && k * p <= horizon {
            f(z + k * p);
            k += 1;
        }
    };

    let w = record.window() as Subframe;
    for z in n - w..n {
        if record.is_monitored(z) == Some(false) {
            for &p in &cfg.allowed_periods_ms {
                hits(z, p as Subframe, &mut |y| {
                    let (s, len) = by_sf[(y - y_lo) as usize];
                    c1[s..s + len].fill(true);
                });
            }
        }
    }

    for e in record.scis_before(n) {
        hits(e.csr.subframe, e.period_ms as Subframe, &mut |y| {
            let (s, len) = by_sf[(y - y_lo) as usize];
            for i in s..s + len {
                if candidates[i].overlaps_subchannels(e.csr.start_subch, e.csr.l_subch) {
                    c2_rsrp[i] = c2_rsrp[i].max(e.rsrp_dbm);
                }
            }
        });
    }
    Exposure { c1, c2_rsrp }
}

/// Removes candidates hit by Condition 1 (unmonitored subframe whose possible
/// reservations land on them) or Condition 2 (sensed reservation at or above
/// the threshold), raising the threshold in 3 dB steps until at least 20% of
/// `candidates` survive. If only Condition 1 stands in the way, every
/// candidate is restored.
pub fn exempt(
    candidates: &[Csr],
    record: &SensingRecord,
    n: Subframe,
    cfg: &SpsConfig,
) -> CandidateSet {
    let initial = candidates.len();
    let need = min_keep(initial);
    let ex = exposure(candidates, record, n, cfg);
    let strongest = ex.c2_rsrp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut k = 0u32;
    loop {
        let th = cfg.th_sps_dbm + 3.0 * k as f64;
        let survivors: Vec<Csr> = candidates
            .iter()
            .zip(ex.c1.iter().zip(&ex.c2_rsrp))
            .filter(|(_, (&c1, &r))| !c1 && r < th)
            .map(|(c, _)| *c)
            .collect();
        if survivors.len() >= need {
            return CandidateSet {
                initial_count: initial,
                survivors,
                final_threshold: th,
                fallback: false,
            };
        }
        if strongest < th {
            return CandidateSet {
                initial_count: initial,
                survivors: candidates.to_vec(),
                final_threshold: th,
                fallback: true,
            };
        }
        k += 1;
    }
}

/// Average over the last [`RANKING_PERIODS`] periods of the S-RSSI summed over
/// the candidate's sub-channels, in mW. Slots that are unmonitored or not yet
/// sensed read as `substitute[j]`. Samples are added in ascending order, so
/// candidates seeing the same samples score exactly the same.
pub fn ranking_energy(
    csr: &Csr,
    record: &SensingRecord,
    substitute: &[f64],
    p_step: Subframe,
) -> f64 {
    let mut samples = Vec::with_capacity(RANKING_PERIODS as usize * csr.l_subch as usize);
    for i in 1..=RANKING_PERIODS {
        let z = csr.subframe - i * p_step;
        for j in csr.subchannels() {
            let j = j as usize;
            samples.push(record.rssi(z, j).unwrap_or(substitute[j]));
        }
    }
    samples.sort_by(f64::total_cmp);
    samples.iter().sum::<f64>() / RANKING_PERIODS as f64
}

/// S_B: the `min_keep(initial_count)` survivors with the lowest energy, ties
/// broken by (subframe, start sub-channel).
pub fn rank_select(
    set: &CandidateSet,
    record: &SensingRecord,
    n: Subframe,
    cfg: &SpsConfig,
) -> Vec<Csr> {
    let substitute = substitute_rssi(record, n);
    let mut scored: Vec<(f64, Csr)> = set
        .survivors
        .iter()
        .map(|c| {
            (
                ranking_energy(c, record, &substitute, cfg.p_step_ms as Subframe),
                *c,
            )
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(min_keep(set.initial_count));
    scored.into_iter().map(|(_, c)| c).collect()
}

/// Values read in place of slots without an S-RSSI sample, per sub-channel.
pub fn substitute_rssi(record: &SensingRecord, n: Subframe) -> Vec<f64> {
    record.mean_rssi(n)
}
