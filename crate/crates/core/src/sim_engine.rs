//! Subframe loop. Each tick runs, in order: mobility, traffic arrivals, MAC
//! decisions on data through the previous tick, placement, reception and
//! sensing, then packet bookkeeping.

use std::fmt::Write as _;

use rand::Rng;

use crate::channel_model::{ChannelModel, FadingLaw};
use crate::cli_runner::RunConfig;
use crate::metrics::{Metrics, Outcome, Summary};
use crate::phy_layer::{
    db_to_linear, decode_with, rsrp_dbm, BlerCurve, Decode, RadioConfig, SciEntry, SensingRecord,
    SubframePlan, Transmission,
};
use crate::resource_grid::GridConfig;
use crate::rng::{Purpose, RngPlan, SimRng};
use crate::scenario::{self, Packet, ScenarioConfig, Vehicle};
use crate::sps_scheduler::{self, on_expiry, Expiry, Occurrence, SpsConfig, SpsState, Trigger};
use crate::{Error, Result, Subframe};

/// Header of the grant trace.
pub const TRACE_HEADER: &str = "ue,subframe,trigger,grant_subframe,start_subch,l_subch,retx_subframe,slrrc,threshold_dbm,fallback";

struct Ue {
    state: SpsState,
    record: SensingRecord,
    mac: SimRng,
    fading: SimRng,
    decode: SimRng,
    pending: Option<Packet>,
    /// Packet on the air whose blind retransmission is still due.
    retx_due: Option<u64>,
    packet_seq: u64,
    /// Whether this UE's current packet is tracked by the metrics.
    counted: bool,
}

/// Static per-pair link data; relative positions do not change because
/// every vehicle moves at the same speed.
struct Links {
    n: usize,
    dist: Vec<f64>,
    /// Mean received power in mW, `[tx * n + rx]`.
    gain_mw: Vec<f64>,
    law: Vec<u8>,
}

impl Links {
    fn new(
        vehicles: &[Vehicle],
        sc: &ScenarioConfig,
        channel: &ChannelModel,
        radio: &RadioConfig,
    ) -> Result<Self> {
        let n = vehicles.len();
        let mut dist = vec![0.0; n * n];
        let mut gain_mw = vec![0.0; n * n];
        let mut law = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let d = scenario::distance(&vehicles[a], &vehicles[b], sc);
                let loss = channel.large_scale_loss(d)?;
                dist[a * n + b] = d;
                gain_mw[a * n + b] = db_to_linear(radio.received_power(loss));
                law[a * n + b] = channel.table().bin_index(d) as u8;
            }
        }
        Ok(Links {
            n,
            dist,
            gain_mw,
            law,
        })
    }
}

/// Artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub summary: Summary,
    /// Grant trace CSV when tracing is on.
    pub trace: Option<String>,
}

pub struct Engine {
    grid: GridConfig,
    radio: RadioConfig,
    sps: SpsConfig,
    scenario: ScenarioConfig,
    curve: BlerCurve,
    laws: Vec<FadingLaw>,
    seed: u64,
    vehicles: Vec<Vehicle>,
    links: Links,
    ues: Vec<Ue>,
    in_window: Vec<bool>,
    metrics: Metrics,
    now: Subframe,
    end: Subframe,
    n_rb: u32,
    pdu_bits: u32,
    tb_capacity: u32,
    noise_rb_mw: f64,
    noise_subch_mw: f64,
    reselections: u64,
    fallbacks: u64,
    trace: Option<String>,
    // scratch
    txs: Vec<Transmission>,
    rx_mw: Vec<f64>,
    sinr: Vec<f64>,
    rssi: Vec<f64>,
}

impl Engine {
    /// Validates `cfg` and places the vehicles of its scenario.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        for w in cfg.validate()? {
            log::warn!("{w}");
        }
        let plan = RngPlan::new(cfg.seed);
        let vehicles = scenario::spawn(&cfg.scenario, &plan);
        Engine::with_vehicles(cfg, vehicles)
    }

    /// Runs `cfg` on a caller-supplied vehicle set.
    pub fn with_vehicles(cfg: &RunConfig, vehicles: Vec<Vehicle>) -> Result<Self> {
        cfg.validate()?;
        let channel = cfg.channel.build()?;
        let curve = cfg.bler()?;
        let plan = RngPlan::new(cfg.seed);
        let grid = cfg.grid.clone();
        let radio = cfg.radio.clone();
        let n = vehicles.len();
        for (i, v) in vehicles.iter().enumerate() {
            if v.id as usize != i {
                return Err(Error::config(format!("vehicle {i} carries id {}", v.id)));
            }
        }
        let links = Links::new(&vehicles, &cfg.scenario, &channel, &radio)?;
        let n_subch = grid.n_subch() as usize;
        let noise_rb_mw = db_to_linear(radio.noise_floor(1));
        let noise_subch_mw = db_to_linear(radio.noise_floor(grid.subchannel_size));
        let window = cfg.sps.sensing_window();
        let ues = (0..n as u32)
            .map(|i| Ue {
                state: SpsState::default(),
                record: SensingRecord::new(window, n_subch, noise_subch_mw)
                    .with_rsrp_floor(cfg.sps.th_sps_dbm),
                mac: plan.stream(i, Purpose::Mac),
                fading: plan.stream(i, Purpose::Fading),
                decode: plan.stream(i, Purpose::Decode),
                pending: None,
                retx_due: None,
                packet_seq: 0,
                counted: false,
            })
            .collect();
        let in_window = vehicles
            .iter()
            .map(|v| scenario::in_window(v, 0, &cfg.scenario))
            .collect();
        Ok(Engine {
            n_rb: grid.n_pssch_rb,
            tb_capacity: grid.tb_capacity_bits()?,
            pdu_bits: cfg.scenario.packet_bits(),
            grid,
            radio,
            sps: cfg.sps.clone(),
            scenario: cfg.scenario.clone(),
            curve,
            laws: channel.laws().to_vec(),
            seed: cfg.seed,
            vehicles,
            links,
            ues,
            in_window,
            metrics: Metrics::new(n, cfg.metrics.clone()),
            now: 0,
            end: cfg.scenario.total_subframes(),
            noise_rb_mw,
            noise_subch_mw,
            reselections: 0,
            fallbacks: 0,
            trace: cfg.trace.then(|| format!("{TRACE_HEADER}\n")),
            txs: Vec::new(),
            rx_mw: Vec::new(),
            sinr: Vec::new(),
            rssi: Vec::new(),
        })
    }

    pub fn now(&self) -> Subframe {
        self.now
    }

    pub fn end(&self) -> Subframe {
        self.end
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn sps_state(&self, ue: usize) -> &SpsState {
        &self.ues[ue].state
    }

    pub fn record(&self, ue: usize) -> &SensingRecord {
        &self.ues[ue].record
    }

    /// Transmissions placed in the last executed subframe.
    pub fn last_transmissions(&self) -> &[Transmission] {
        &self.txs
    }

    /// Executes one subframe.
    pub fn step(&mut self) -> Result<()> {
        let t = self.now;
        self.mobility(t);
        self.traffic(t);
        self.mac(t)?;
        self.place(t);
        self.receive(t);
        self.settle();
        self.now += 1;
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.now < self.end {
            self.step()?;
        }
        Ok(())
    }

    /// Settles packets still open and builds the summary.
    pub fn finish(mut self) -> Result<RunOutput> {
        self.metrics.close_all();
        self.metrics.check_conservation()?;
        let m = &self.metrics;
        let ipg = m.ipg().summary();
        let totals = m.totals();
        let mut s = Summary::default();
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        s.push("per_total", opt(m.per_total()));
        let has_ipg = ipg.count > 0;
        s.push("ipg_mean_ms", opt(has_ipg.then_some(ipg.mean_ms)));
        s.push("ipg_median_ms", opt(has_ipg.then_some(ipg.median_ms)));
        s.push("ipg_p95_ms", opt(has_ipg.then_some(ipg.p95_ms)));
        s.push("ipg_mode_ms", opt(has_ipg.then_some(ipg.mode_ms)));
        s.push("ipg_count", ipg.count);
        s.push("ipg_frac_above_500ms", ipg.frac_above_500ms());
        s.push(
            "data_rate_bps",
            m.data_rate_bps(self.pdu_bits, self.scenario.sim_time_s),
        );
        s.push("vehicle_count", self.vehicles.len());
        s.push("seed", self.seed);
        s.push("expected", totals.attempts);
        s.push("decoded", m.decoded_total());
        s.push("lost", totals.lost);
        s.push("half_duplex", totals.half_duplex);
        s.push("reselections", self.reselections);
        s.push("fallbacks", self.fallbacks);
        s.push("sim_time_s", self.scenario.sim_time_s);
        s.push("warmup_ms", self.scenario.warmup_ms);
        Ok(RunOutput {
            metrics: self.metrics,
            summary: s,
            trace: self.trace,
        })
    }

    fn mobility(&mut self, t: Subframe) {
        let step = self.scenario.mobility_step_ms as Subframe;
        if t == 0 || t % step != 0 {
            return;
        }
        scenario::advance(&mut self.vehicles, step as f64 / 1000.0, &self.scenario);
        for (w, v) in self.in_window.iter_mut().zip(&self.vehicles) {
            *w = scenario::in_window(v, t, &self.scenario);
        }
    }

    fn counted_from(&self, generated_at: Subframe) -> bool {
        generated_at >= self.scenario.warmup_ms as Subframe
    }

    fn open_packet(&mut self, tx: usize) {
        let n = self.links.n;
        let dist = &self.links.dist[tx * n..(tx + 1) * n];
        let in_window = &self.in_window;
        self.metrics
            .on_transmission(tx, |rx| in_window[rx].then_some(dist[rx]));
    }

    fn traffic(&mut self, t: Subframe) {
        for i in 0..self.ues.len() {
            let Some(p) = scenario::next_packet(&self.vehicles[i], t, &self.scenario) else {
                continue;
            };
            if let Some(old) = self.ues[i].pending.take() {
                // never reached the air
                self.metrics.close(i);
                if self.counted_from(old.generated_at) {
                    self.open_packet(i);
                    self.metrics.close(i);
                }
            }
            self.ues[i].pending = Some(p);
        }
    }

    fn mac(&mut self, t: Subframe) -> Result<()> {
        for i in 0..self.ues.len() {
            let arrived = self.ues[i].pending.is_some_and(|p| p.generated_at == t);
            if !arrived {
                continue;
            }
            let ue = &mut self.ues[i];
            let mut trigger = ue
                .state
                .trigger(t, self.pdu_bits, self.tb_capacity, &self.sps);
            if trigger == Some(Trigger::CounterExpired)
                && on_expiry(&self.sps, &mut ue.mac) == Expiry::Keep
            {
                ue.state.renew(&self.sps, &mut ue.mac);
                trigger = ue
                    .state
                    .trigger(t, self.pdu_bits, self.tb_capacity, &self.sps);
            }
            let Some(trigger) = trigger else {
                continue;
            };
            debug_assert_eq!(ue.record.latest(), t - 1);
            let sel = sps_scheduler::select(t, &ue.record, &self.sps, &self.grid, &mut ue.mac)?;
            ue.state.apply(sel.reservation, t, sel.final_threshold);
            self.reselections += 1;
            if sel.fallback {
                self.fallbacks += 1;
            }
            if let Some(out) = self.trace.as_mut() {
                let g = sel.reservation.grant;
                let _ = writeln!(
                    out,
                    "{i},{t},{},{},{},{},{},{},{},{}",
                    trigger.as_str(),
                    g.csr.subframe,
                    g.csr.start_subch,
                    g.csr.l_subch,
                    g.retx.map_or(String::new(), |r| r.subframe.to_string()),
                    sel.reservation.slrrc,
                    sel.final_threshold,
                    sel.fallback
                );
            }
        }
        Ok(())
    }

    fn place(&mut self, t: Subframe) {
        self.txs.clear();
        for i in 0..self.ues.len() {
            let Some(g) = self.ues[i].state.grant else {
                continue;
            };
            match g.occurs_at(t) {
                Some(Occurrence::Initial) => {
                    let Some(p) = self.ues[i].pending.take() else {
                        self.ues[i].state.on_missed();
                        continue;
                    };
                    self.metrics.close(i);
                    let counted = self.counted_from(p.generated_at);
                    if counted {
                        self.open_packet(i);
                    }
                    let ue = &mut self.ues[i];
                    ue.state.on_transmit(t);
                    ue.packet_seq += 1;
                    ue.counted = counted;
                    let packet = ((i as u64) << 32) | ue.packet_seq;
                    ue.retx_due = g.retx.map(|_| packet);
                    self.txs.push(Transmission {
                        tx: i as u32,
                        csr: g.csr.shifted(t - g.csr.subframe),
                        n_rb: self.n_rb,
                        packet,
                        retx: false,
                        period_ms: g.period as u32,
                    });
                }
                Some(Occurrence::Retx) => {
                    let Some(packet) = self.ues[i].retx_due.take() else {
                        continue;
                    };
                    let r = g.retx.expect("retx occurrence implies a retx resource");
                    self.txs.push(Transmission {
                        tx: i as u32,
                        csr: r.shifted(t - r.subframe),
                        n_rb: self.n_rb,
                        packet,
                        retx: true,
                        period_ms: g.period as u32,
                    });
                }
                None => {}
            }
        }
    }

    fn receive(&mut self, t: Subframe) {
        let n = self.links.n;
        if self.txs.is_empty() {
            let idle = vec![self.noise_subch_mw; self.grid.n_subch() as usize];
            for ue in &mut self.ues {
                ue.record.push_monitored(t, &idle);
            }
            return;
        }
        let plan = SubframePlan::new(&self.txs, &self.grid);
        let mut transmitting = vec![false; n];
        for tx in &self.txs {
            transmitting[tx.tx as usize] = true;
        }
        for rx in 0..n {
            if transmitting[rx] {
                self.ues[rx].record.push_unmonitored(t);
                for tx in &self.txs {
                    let k = tx.tx as usize;
                    if k != rx && self.metrics.counts(k, rx) {
                        self.metrics
                            .on_reception(k, rx, t, Outcome::HalfDuplexMissed);
                    }
                }
                continue;
            }
            let ue = &mut self.ues[rx];
            self.rx_mw.clear();
            for tx in &self.txs {
                let idx = tx.tx as usize * n + rx;
                let fade = self.laws[self.links.law[idx] as usize].sample(&mut ue.fading);
                self.rx_mw.push(self.links.gain_mw[idx] * fade);
            }
            plan.sinr_db(&self.rx_mw, self.noise_rb_mw, &mut self.sinr);
            plan.rssi_mw(&self.rx_mw, self.noise_subch_mw, &mut self.rssi);
            ue.record.push_monitored(t, &self.rssi);
            for (k, tx) in self.txs.iter().enumerate() {
                let from = tx.tx as usize;
                let sci_ok = self
                    .radio
                    .sci_decodable(self.rx_mw[k], tx.n_rb, self.sinr[k]);
                if sci_ok {
                    ue.record.push_sci(SciEntry {
                        tx: tx.tx,
                        csr: tx.csr,
                        rsrp_dbm: rsrp_dbm(self.rx_mw[k], tx.n_rb),
                        period_ms: tx.period_ms,
                        retx: tx.retx,
                    });
                }
                if !self.metrics.counts(from, rx) {
                    continue;
                }
                let outcome = if sci_ok {
                    let u: f64 = ue.decode.random();
                    match decode_with(self.curve.bler(self.sinr[k]), u) {
                        Decode::Decoded => Outcome::Decoded,
                        Decode::Lost => Outcome::Lost,
                    }
                } else {
                    Outcome::Lost
                };
                self.metrics.on_reception(from, rx, t, outcome);
            }
        }
    }

    /// Closes packets that have no copy left to send.
    fn settle(&mut self) {
        for tx in &self.txs {
            let i = tx.tx as usize;
            if self.ues[i].retx_due.is_none() && self.ues[i].counted {
                self.metrics.close(i);
                self.ues[i].counted = false;
            }
        }
    }
}

/// Runs `cfg` start to finish.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let mut engine = Engine::new(cfg)?;
    engine.run_to_end()?;
    engine.finish()
}
