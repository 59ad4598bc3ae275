//! Delivery accounting: PER by distance, inter-packet gaps and data rate.
//!
//! A packet is counted once per receiver that is in scope when its first copy
//! goes out, and settles as decoded, lost or missed to half-duplex once its
//! last copy has been received.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result, Subframe};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub bin_width_m: f64,
    pub max_range_m: f64,
    pub ipg_bin_ms: u32,
    /// Gaps at or above this land in the overflow row of the histogram.
    pub ipg_cap_ms: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            bin_width_m: 25.0,
            max_range_m: 1000.0,
            ipg_bin_ms: 1,
            ipg_cap_ms: 1000,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_m > 0.0) || !(self.max_range_m >= self.bin_width_m) {
            return Err(Error::config(
                "metrics.bin_width_m must be positive and no larger than metrics.max_range_m",
            ));
        }
        if self.ipg_bin_ms == 0 || self.ipg_cap_ms < self.ipg_bin_ms {
            return Err(Error::config(
                "metrics.ipg_bin_ms must be positive and at most metrics.ipg_cap_ms",
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        (self.max_range_m / self.bin_width_m).ceil() as usize
    }

    pub fn in_range(&self, d: f64) -> bool {
        d < self.max_range_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Decoded,
    Lost,
    HalfDuplexMissed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub expected: u32,
    pub decoded: u32,
    pub lost: u32,
    pub half_duplex: u32,
    pub ipg_samples: u32,
    pub last_rx: Option<Subframe>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinStats {
    pub attempts: u64,
    pub failures: u64,
    pub lost: u64,
    pub half_duplex: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerBin {
    pub low_m: f64,
    pub high_m: f64,
    pub stats: BinStats,
}

impl PerBin {
    /// `None` for an empty bin.
    pub fn per(&self) -> Option<f64> {
        (self.stats.attempts > 0).then(|| self.stats.failures as f64 / self.stats.attempts as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerCurve {
    pub bins: Vec<PerBin>,
}

impl PerCurve {
    /// Pooled PER over bins overlapping `[lo, hi)`.
    pub fn per_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let (a, f) = self
            .bins
            .iter()
            .filter(|b| b.low_m < hi && b.high_m > lo)
            .fold((0u64, 0u64), |(a, f), b| {
                (a + b.stats.attempts, f + b.stats.failures)
            });
        (a > 0).then(|| f as f64 / a as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low_m,bin_high_m,attempts,failures,per,lost,half_duplex\n");
        for b in &self.bins {
            let per = b.per().map_or(String::new(), |p| p.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                b.low_m,
                b.high_m,
                b.stats.attempts,
                b.stats.failures,
                per,
                b.stats.lost,
                b.stats.half_duplex
            );
        }
        s
    }
}

/// Exact gap counts at 1 ms resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IpgHistogram {
    counts: BTreeMap<Subframe, u64>,
    total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpgSummary {
    pub count: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mode_ms: f64,
    pub above_500ms: u64,
}

impl IpgSummary {
    pub fn frac_above_500ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.above_500ms as f64 / self.count as f64
        }
    }
}

impl IpgHistogram {
    pub fn add(&mut self, gap_ms: Subframe) {
        *self.counts.entry(gap_ms).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn merge(&mut self, other: &IpgHistogram) {
        for (&g, &c) in &other.counts {
            *self.counts.entry(g).or_insert(0) += c;
        }
        self.total += other.total;
    }

    /// Nearest-rank percentile, `q` in (0, 1].
    pub fn percentile(&self, q: f64) -> Option<Subframe> {
        if self.total == 0 {
            return None;
        }
        let rank = ((q * self.total as f64).ceil() as u64).clamp(1, self.total);
        let mut seen = 0;
        for (&g, &c) in &self.counts {
            seen += c;
            if seen >= rank {
                return Some(g);
            }
        }
        None
    }

    /// Count of gaps strictly above `ms`.
    pub fn count_above(&self, ms: Subframe) -> u64 {
        self.counts.range(ms + 1..).map(|(_, c)| c).sum()
    }

    pub fn summary(&self) -> IpgSummary {
        if self.total == 0 {
            return IpgSummary {
                count: 0,
                mean_ms: f64::NAN,
                median_ms: f64::NAN,
                p95_ms: f64::NAN,
                mode_ms: f64::NAN,
                above_500ms: 0,
            };
        }
        let sum: u128 = self
            .counts
            .iter()
            .map(|(&g, &c)| g as u128 * c as u128)
            .sum();
        let mode = self
            .counts
            .iter()
            .fold(
                (0, 0),
                |best, (&g, &c)| if c > best.1 { (g, c) } else { best },
            )
            .0;
        IpgSummary {
            count: self.total,
            mean_ms: sum as f64 / self.total as f64,
            median_ms: self.percentile(0.5).unwrap_or(0) as f64,
            p95_ms: self.percentile(0.95).unwrap_or(0) as f64,
            mode_ms: mode as f64,
            above_500ms: self.count_above(500),
        }
    }

    /// Binned, normalized histogram with a final overflow row.
    pub fn to_csv(&self, bin_ms: u32, cap_ms: u32) -> String {
        let bin = bin_ms as Subframe;
        let cap = cap_ms as Subframe;
        let n_bins = ((cap + bin - 1) / bin) as usize;
        let mut counts = vec![0u64; n_bins];
        let mut overflow = 0u64;
        for (&g, &c) in &self.counts {
            if g >= cap {
                overflow += c;
            } else {
                counts[(g / bin) as usize] += c;
            }
        }
        let freq = |c: u64| {
            if self.total == 0 {
                0.0
            } else {
                c as f64 / self.total as f64
            }
        };
        let mut s = String::from("bin_low_ms,bin_high_ms,freq,count\n");
        for (i, &c) in counts.iter().enumerate() {
            let lo = i as Subframe * bin;
            let _ = writeln!(s, "{},{},{},{}", lo, (lo + bin).min(cap), freq(c), c);
        }
        let _ = writeln!(s, "{cap},inf,{},{overflow}", freq(overflow));
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RxAcc {
    in_scope: bool,
    bin: u32,
    copies: u8,
    hd_copies: u8,
    decoded_at: Option<Subframe>,
}

#[derive(Debug, Clone, Default)]
struct OpenPacket {
    open: bool,
    rx: Vec<RxAcc>,
}

/// Run-wide accumulators for `n` UEs.
#[derive(Debug, Clone)]
pub struct Metrics {
    cfg: MetricsConfig,
    n: usize,
    links: Vec<LinkStats>,
    bins: Vec<BinStats>,
    ipg: IpgHistogram,
    decoded_total: u64,
    open: Vec<OpenPacket>,
}

impl Metrics {
    pub fn new(n: usize, cfg: MetricsConfig) -> Self {
        let bins = vec![BinStats::default(); cfg.n_bins()];
        Metrics {
            cfg,
            n,
            links: vec![LinkStats::default(); n * n],
            bins,
            ipg: IpgHistogram::default(),
            decoded_total: 0,
            open: vec![OpenPacket::default(); n],
        }
    }

    pub fn config(&self) -> &MetricsConfig {
        &self.cfg
    }

    pub fn n_ue(&self) -> usize {
        self.n
    }

    pub fn link(&self, tx: usize, rx: usize) -> &LinkStats {
        &self.links[tx * self.n + rx]
    }

    pub fn links(&self) -> impl Iterator<Item = ((usize, usize), &LinkStats)> + '_ {
        self.links
            .iter()
            .enumerate()
            .map(|(i, l)| ((i / self.n, i % self.n), l))
    }

    pub fn is_open(&self, tx: usize) -> bool {
        self.open[tx].open
    }

    /// First copy of a packet from `tx`. `scope(rx)` gives the distance to
    /// each receiver that should count it, `None` for the rest. Receivers out
    /// of scope lose their gap history.
    pub fn on_transmission(&mut self, tx: usize, scope: impl Fn(usize) -> Option<f64>) {
        assert!(!self.open[tx].open, "packet from UE {tx} opened twice");
        let n = self.n;
        let width = self.cfg.bin_width_m;
        let n_bins = self.bins.len();
        let packet = &mut self.open[tx];
        packet.open = true;
        packet.rx.resize(n, RxAcc::default());
        for rx in 0..n {
            let acc = &mut packet.rx[rx];
            *acc = RxAcc::default();
            match scope(rx).filter(|&d| rx != tx && d < self.cfg.max_range_m) {
                Some(d) => {
                    acc.in_scope = true;
                    acc.bin = ((d / width) as usize).min(n_bins - 1) as u32;
                    self.links[tx * n + rx].expected += 1;
                }
                None => self.links[tx * n + rx].last_rx = None,
            }
        }
    }

    /// Whether `rx` counts the packet `tx` has open.
    pub fn counts(&self, tx: usize, rx: usize) -> bool {
        self.open[tx].open && self.open[tx].rx[rx].in_scope
    }

    /// Outcome of one copy at one receiver.
    pub fn on_reception(&mut self, tx: usize, rx: usize, t: Subframe, outcome: Outcome) {
        let acc = &mut self.open[tx].rx[rx];
        if !acc.in_scope {
            return;
        }
        acc.copies += 1;
        match outcome {
            Outcome::Decoded => {
                acc.decoded_at.get_or_insert(t);
            }
            Outcome::HalfDuplexMissed => acc.hd_copies += 1,
            Outcome::Lost => {}
        }
    }

    /// Settles the open packet of `tx` at every in-scope receiver.
    pub fn close(&mut self, tx: usize) {
        if !self.open[tx].open {
            return;
        }
        self.open[tx].open = false;
        for rx in 0..self.n {
            let acc = self.open[tx].rx[rx];
            if !acc.in_scope {
                continue;
            }
            let outcome = match acc.decoded_at {
                Some(_) => Outcome::Decoded,
                None if acc.copies > 0 && acc.hd_copies == acc.copies => Outcome::HalfDuplexMissed,
                None => Outcome::Lost,
            };
            self.settle(tx, rx, acc.bin as usize, outcome, acc.decoded_at);
        }
    }

    fn settle(&mut self, tx: usize, rx: usize, bin: usize, outcome: Outcome, at: Option<Subframe>) {
        let link = &mut self.links[tx * self.n + rx];
        let b = &mut self.bins[bin];
        b.attempts += 1;
        match outcome {
            Outcome::Decoded => {
                link.decoded += 1;
                self.decoded_total += 1;
                let t = at.expect("decoded packets carry a time");
                if let Some(prev) = link.last_rx {
                    self.ipg.add(t - prev);
                    link.ipg_samples += 1;
                }
                link.last_rx = Some(t);
            }
            Outcome::Lost => {
                link.lost += 1;
                b.failures += 1;
                b.lost += 1;
            }
            Outcome::HalfDuplexMissed => {
                link.half_duplex += 1;
                b.failures += 1;
                b.half_duplex += 1;
            }
        }
    }

    /// Settles every packet still open.
    pub fn close_all(&mut self) {
        for tx in 0..self.n {
            self.close(tx);
        }
    }

    pub fn per_curve(&self) -> PerCurve {
        let w = self.cfg.bin_width_m;
        PerCurve {
            bins: self
                .bins
                .iter()
                .enumerate()
                .map(|(i, s)| PerBin {
                    low_m: i as f64 * w,
                    high_m: ((i + 1) as f64 * w).min(self.cfg.max_range_m),
                    stats: *s,
                })
                .collect(),
        }
    }

    pub fn ipg(&self) -> &IpgHistogram {
        &self.ipg
    }

    pub fn decoded_total(&self) -> u64 {
        self.decoded_total
    }

    pub fn totals(&self) -> BinStats {
        self.bins.iter().fold(BinStats::default(), |a, b| BinStats {
            attempts: a.attempts + b.attempts,
            failures: a.failures + b.failures,
            lost: a.lost + b.lost,
            half_duplex: a.half_duplex + b.half_duplex,
        })
    }

    pub fn per_total(&self) -> Option<f64> {
        let t = self.totals();
        (t.attempts > 0).then(|| t.failures as f64 / t.attempts as f64)
    }

    /// Delivered application bits per second.
    pub fn data_rate_bps(&self, packet_bits: u32, sim_time_s: f64) -> f64 {
        self.decoded_total as f64 * packet_bits as f64 / sim_time_s
    }

    /// Folds settled counts from `other` (same UE count and binning).
    pub fn merge(&mut self, other: &Metrics) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.cfg, other.cfg);
        for (a, b) in self.links.iter_mut().zip(&other.links) {
            a.expected += b.expected;
            a.decoded += b.decoded;
            a.lost += b.lost;
            a.half_duplex += b.half_duplex;
            a.ipg_samples += b.ipg_samples;
            a.last_rx = a.last_rx.max(b.last_rx);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.attempts += b.attempts;
            a.failures += b.failures;
            a.lost += b.lost;
            a.half_duplex += b.half_duplex;
        }
        self.ipg.merge(&other.ipg);
        self.decoded_total += other.decoded_total;
    }

    /// `decoded + lost + half_duplex == expected` on every link.
    pub fn check_conservation(&self) -> Result<()> {
        for ((tx, rx), l) in self.links() {
            if l.decoded + l.lost + l.half_duplex != l.expected {
                return Err(Error::Invariant(format!(
                    "link {tx}->{rx}: {} decoded + {} lost + {} half-duplex != {} expected",
                    l.decoded, l.lost, l.half_duplex, l.expected
                )));
            }
        }
        Ok(())
    }

    pub fn write_outputs(&self, dir: &Path, summary: &Summary) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write("per_curve.csv", self.per_curve().to_csv())?;
        write(
            "ipg_hist.csv",
            self.ipg.to_csv(self.cfg.ipg_bin_ms, self.cfg.ipg_cap_ms),
        )?;
        write("summary.txt", summary.to_text())
    }
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Summary {
        Summary {
            entries: text
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn packet(m: &mut Metrics, tx: usize, rx: usize, d: f64, t: Subframe, outcome: Outcome) {
        m.on_transmission(tx, |r| (r == rx).then_some(d));
        m.on_reception(tx, rx, t, outcome);
        m.close(tx);
    }

    #[test]
    fn ipg_from_consecutive_successes() {
        let mut m = Metrics::new(2, MetricsConfig::default());
        packet(&mut m, 0, 1, 100.0, 100, Outcome::Decoded);
        packet(&mut m, 0, 1, 100.0, 200, Outcome::Decoded);
        packet(&mut m, 0, 1, 100.0, 300, Outcome::Lost);
        packet(&mut m, 0, 1, 100.0, 400, Outcome::Decoded);
        let s = m.ipg().summary();
        assert_eq!(s.count, 2);
        assert_eq!(m.ipg().percentile(0.5), Some(100));
        assert_eq!(m.ipg().percentile(1.0), Some(200));
        let l = m.link(0, 1);
        assert_eq!((l.expected, l.decoded, l.lost, l.ipg_samples), (4, 3, 1, 2));
        assert_eq!(l.ipg_samples, l.decoded - 1);
    }

    #[test]
    fn harq_copies_count_once() {
        let mut m = Metrics::new(2, MetricsConfig::default());
        for k in 0..3 {
            let t = 100 * k;
            m.on_transmission(0, |r| (r == 1).then_some(50.0));
            m.on_reception(0, 1, t, Outcome::Decoded);
            m.on_reception(0, 1, t + 5, Outcome::Decoded);
            m.close(0);
        }
        let l = m.link(0, 1);
        assert_eq!((l.expected, l.decoded, l.ipg_samples), (3, 3, 2));
        assert_eq!(m.ipg().summary().mode_ms, 100.0);
        assert_eq!(m.ipg().summary().mean_ms, 100.0);
    }

    #[test]
    fn half_duplex_needs_every_copy_blocked() {
        let mut m = Metrics::new(2, MetricsConfig::default());
        m.on_transmission(0, |r| (r == 1).then_some(50.0));
        m.on_reception(0, 1, 0, Outcome::HalfDuplexMissed);
        m.on_reception(0, 1, 3, Outcome::Lost);
        m.close(0);
        m.on_transmission(0, |r| (r == 1).then_some(50.0));
        m.on_reception(0, 1, 100, Outcome::HalfDuplexMissed);
        m.close(0);
        // never transmitted at all: plain loss
        m.on_transmission(0, |r| (r == 1).then_some(50.0));
        m.close(0);
        let l = m.link(0, 1);
        assert_eq!((l.lost, l.half_duplex), (2, 1));
        m.check_conservation().unwrap();
    }

    #[test]
    fn scope_and_bins() {
        let mut m = Metrics::new(3, MetricsConfig::default());
        // receiver 2 beyond range, receiver 0 is the sender
        m.on_transmission(0, |r| Some([0.0, 30.0, 1000.0][r]));
        assert!(m.counts(0, 1) && !m.counts(0, 2) && !m.counts(0, 0));
        m.on_reception(0, 1, 0, Outcome::Lost);
        m.on_reception(0, 2, 0, Outcome::Lost);
        m.close(0);
        let curve = m.per_curve();
        assert_eq!(curve.bins.len(), 40);
        assert_eq!(curve.bins[1].stats.attempts, 1);
        assert_eq!(curve.bins[1].per(), Some(1.0));
        assert_eq!(curve.bins[0].per(), None);
        assert_eq!(m.link(0, 2).expected, 0);
        assert_eq!(m.totals().attempts, 1);
    }

    #[test]
    fn all_decoded_or_all_lost() {
        for (outcome, want) in [(Outcome::Decoded, 0.0), (Outcome::Lost, 1.0)] {
            let mut m = Metrics::new(2, MetricsConfig::default());
            for k in 0..40 {
                packet(&mut m, 0, 1, k as f64 * 25.0 + 1.0, k * 100, outcome);
            }
            assert!(m.per_curve().bins.iter().all(|b| b.per() == Some(want)));
        }
    }

    #[test]
    fn synthetic_half_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = Metrics::new(2, MetricsConfig::default());
        for k in 0..40_000 {
            let d = rng.random_range(0.0..1000.0);
            let o = if rng.random::<bool>() {
                Outcome::Decoded
            } else {
                Outcome::Lost
            };
            packet(&mut m, 0, 1, d, k * 100, o);
        }
        for b in m.per_curve().bins {
            let n = b.stats.attempts as f64;
            let ci = 4.0 * (0.25 / n).sqrt();
            assert!((b.per().unwrap() - 0.5).abs() < ci, "{b:?}");
        }
    }

    #[test]
    fn histogram_csv_normalizes_with_overflow() {
        let mut h = IpgHistogram::default();
        for g in [100, 100, 100, 200, 1500] {
            h.add(g);
        }
        let csv = h.to_csv(1, 1000);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 1 + 1000 + 1);
        assert_eq!(rows[101], "100,101,0.6,3");
        assert_eq!(*rows.last().unwrap(), "1000,inf,0.2,1");
        let total: f64 = rows[1..]
            .iter()
            .map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        let s = h.summary();
        assert_eq!((s.median_ms, s.p95_ms, s.above_500ms), (100.0, 1500.0, 1));
    }

    #[test]
    fn data_rate() {
        let mut m = Metrics::new(2, MetricsConfig::default());
        assert_eq!(m.data_rate_bps(1520, 100.0), 0.0);
        for k in 0..10 {
            packet(&mut m, 0, 1, 10.0, k * 100, Outcome::Decoded);
        }
        assert_eq!(m.data_rate_bps(1520, 100.0), 10.0 * 1520.0 / 100.0);
    }

    #[test]
    fn merge_is_associative() {
        let mk = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Metrics::new(3, MetricsConfig::default());
            for k in 0..50 {
                let (tx, rx) = (rng.random_range(0..3), rng.random_range(0..3));
                let o = [Outcome::Decoded, Outcome::Lost, Outcome::HalfDuplexMissed]
                    [rng.random_range(0..3)];
                packet(&mut m, tx, rx, rng.random_range(0.0..999.0), k * 100, o);
            }
            m
        };
        let (a, b, c) = (mk(1), mk(2), mk(3));
        let mut left = a.clone();
        left.merge(&b);
        left.merge(&c);
        let mut bc = b.clone();
        bc.merge(&c);
        let mut right = a.clone();
        right.merge(&bc);
        assert_eq!(left.per_curve(), right.per_curve());
        assert_eq!(left.ipg(), right.ipg());
        assert_eq!(left.links, right.links);
        left.check_conservation().unwrap();
    }

    #[test]
    fn summary_round_trip() {
        let mut s = Summary::default();
        s.push("per_total", 0.25);
        s.push("seed", 7);
        let p = Summary::parse(&s.to_text());
        assert_eq!(p, s);
        assert_eq!(p.get("seed"), Some("7"));
    }
}
