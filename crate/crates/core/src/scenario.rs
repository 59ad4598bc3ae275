//! Highway platoon and beacon traffic.
//!
//! Vehicles sit evenly spaced on parallel lanes and share one speed, so the
//! platoon moves rigidly and all pairwise distances stay fixed. Each vehicle
//! emits a beacon every `t_gen_ms` at its own phase.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::rng::{Purpose, RngPlan};
use crate::{Error, Result, Subframe};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetMode {
    /// Every vehicle generates at phase 0.
    Synchronized,
    /// Phases drawn uniformly from `0..=max` ms.
    UniformOffset(u32),
}

impl fmt::Display for OffsetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffsetMode::Synchronized => f.write_str("synchronized"),
            OffsetMode::UniformOffset(m) => write!(f, "uniform:{m}"),
        }
    }
}

impl FromStr for OffsetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "synchronized" || s == "sync" {
            return Ok(OffsetMode::Synchronized);
        }
        let max = s
            .strip_prefix("uniform:")
            .or_else(|| s.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')));
        match max.map(|m| m.trim().parse::<u32>()) {
            Some(Ok(m)) => Ok(OffsetMode::UniformOffset(m)),
            _ => Err(Error::config(format!(
                "offset mode {s:?} must be synchronized or uniform:<max_ms>"
            ))),
        }
    }
}

/// How the ends of the road are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// Open road; the measurement window travels with the platoon.
    Open,
    /// The road closes on itself; distances wrap, the window stays put.
    Ring,
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeMode::Open => f.write_str("open"),
            EdgeMode::Ring => f.write_str("ring"),
        }
    }
}

impl FromStr for EdgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "open" => Ok(EdgeMode::Open),
            "ring" => Ok(EdgeMode::Ring),
            other => Err(Error::config(format!(
                "edge mode {other:?} must be open or ring"
            ))),
        }
    }
}

/// Named (density, speed) pairs.
pub const PRESETS: &[(&str, f64, f64)] = &[
    ("s1", 12.5, 140.0),
    ("s2", 25.0, 70.0),
    ("s3", 50.0, 60.0),
    ("s4", 100.0, 15.0),
];

pub fn preset(name: &str) -> Result<(f64, f64)> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| (p.1, p.2))
        .ok_or_else(|| Error::config(format!("unknown preset {name:?} (expected s1..s4)")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub lanes: u32,
    pub lane_spacing_m: f64,
    pub road_length_m: f64,
    /// Vehicles per km per lane.
    pub density: f64,
    pub speed_kmh: f64,
    pub t_gen_ms: u32,
    pub packet_bytes: u32,
    /// Measured time, after the warm-up.
    pub sim_time_s: f64,
    pub offset_mode: OffsetMode,
    pub edge_mode: EdgeMode,
    /// Applications start at a random period within this span; nothing is
    /// measured before it ends.
    pub warmup_ms: u32,
    pub window_lo_m: f64,
    pub window_hi_m: f64,
    pub mobility_step_ms: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lanes: 4,
            lane_spacing_m: 3.0,
            road_length_m: 2000.0,
            density: 25.0,
            speed_kmh: 70.0,
            t_gen_ms: 100,
            packet_bytes: 190,
            sim_time_s: 100.0,
            offset_mode: OffsetMode::UniformOffset(99),
            edge_mode: EdgeMode::Open,
            warmup_ms: 5000,
            window_lo_m: 500.0,
            window_hi_m: 1500.0,
            mobility_step_ms: 100,
        }
    }
}

impl ScenarioConfig {
    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        let (density, speed) = preset(name)?;
        self.density = density;
        self.speed_kmh = speed;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scenario.lane_spacing_m", self.lane_spacing_m),
            ("scenario.road_length_m", self.road_length_m),
            ("scenario.sim_time_s", self.sim_time_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} = {v} must be positive")));
            }
        }
        if self.lanes == 0
            || self.t_gen_ms == 0
            || self.packet_bytes == 0
            || self.mobility_step_ms == 0
        {
            return Err(Error::config(
                "scenario.lanes, t_gen_ms, packet_bytes and mobility_step_ms must be positive",
            ));
        }
        for (name, v) in [
            ("scenario.speed_kmh", self.speed_kmh),
            ("scenario.density", self.density),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} = {v} must be non-negative")));
            }
        }
        if let OffsetMode::UniformOffset(m) = self.offset_mode {
            if m >= self.t_gen_ms {
                return Err(Error::config(format!(
                    "scenario.offset_mode maximum {m} ms must be below t_gen_ms = {}",
                    self.t_gen_ms
                )));
            }
        }
        if !(0.0 <= self.window_lo_m
            && self.window_lo_m < self.window_hi_m
            && self.window_hi_m <= self.road_length_m)
        {
            return Err(Error::config(format!(
                "scenario window [{}, {}) must lie within the road",
                self.window_lo_m, self.window_hi_m
            )));
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        vehicle_count(self.density, self.lanes, self.road_length_m)
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_kmh / 3.6
    }

    pub fn packet_bits(&self) -> u32 {
        self.packet_bytes * 8
    }

    pub fn measured_subframes(&self) -> Subframe {
        (self.sim_time_s * 1000.0).round() as Subframe
    }

    pub fn total_subframes(&self) -> Subframe {
        self.warmup_ms as Subframe + self.measured_subframes()
    }
}

pub fn vehicle_count(density: f64, lanes: u32, road_length_m: f64) -> usize {
    (density * lanes as f64 * road_length_m / 1000.0).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub lane: u32,
    /// Position along the road.
    pub x_m: f64,
    pub speed_mps: f64,
    /// Beacon phase within `t_gen_ms`.
    pub phase_ms: u32,
    /// First beacon; later ones follow every `t_gen_ms`.
    pub first_packet_ms: Subframe,
}

impl Vehicle {
    pub fn y_m(&self, cfg: &ScenarioConfig) -> f64 {
        self.lane as f64 * cfg.lane_spacing_m
    }
}

/// Evenly spaced vehicles, lanes staggered by a fraction of the spacing.
/// Phases and start periods come from each vehicle's traffic stream.
pub fn spawn(cfg: &ScenarioConfig, plan: &RngPlan) -> Vec<Vehicle> {
    let n = cfg.vehicle_count();
    let lanes = cfg.lanes as usize;
    let start_periods = (cfg.warmup_ms / cfg.t_gen_ms).max(1);
    let mut out = Vec::with_capacity(n);
    for lane in 0..lanes {
        let count = n / lanes + usize::from(lane < n % lanes);
        if count == 0 {
            continue;
        }
        let spacing = cfg.road_length_m / count as f64;
        for k in 0..count {
            let id = out.len() as u32;
            let mut rng = plan.stream(id, Purpose::Traffic);
            let phase_ms = match cfg.offset_mode {
                OffsetMode::Synchronized => 0,
                OffsetMode::UniformOffset(m) => rng.random_range(0..=m),
            };
            let start = rng.random_range(0..start_periods);
            out.push(Vehicle {
                id,
                lane: lane as u32,
                x_m: (k as f64 + lane as f64 / lanes as f64) * spacing,
                speed_mps: cfg.speed_mps(),
                phase_ms,
                first_packet_ms: phase_ms as Subframe + (start * cfg.t_gen_ms) as Subframe,
            });
        }
    }
    out
}

/// Moves every vehicle by `speed·dt_s`, wrapping on a ring road.
pub fn advance(vehicles: &mut [Vehicle], dt_s: f64, cfg: &ScenarioConfig) {
    if dt_s <= 0.0 {
        return;
    }
    for v in vehicles {
        v.x_m += v.speed_mps * dt_s;
        if cfg.edge_mode == EdgeMode::Ring {
            v.x_m = v.x_m.rem_euclid(cfg.road_length_m);
        }
    }
}

/// Euclidean distance with lane offsets; longitudinal separation is the
/// shorter way round on a ring.
pub fn distance(a: &Vehicle, b: &Vehicle, cfg: &ScenarioConfig) -> f64 {
    let mut dx = (a.x_m - b.x_m).abs();
    if cfg.edge_mode == EdgeMode::Ring {
        dx = dx.rem_euclid(cfg.road_length_m);
        dx = dx.min(cfg.road_length_m - dx);
    }
    let dy = a.y_m(cfg) - b.y_m(cfg);
    dx.hypot(dy)
}

/// Whether `v` is inside the measurement window at time `t_ms`.
pub fn in_window(v: &Vehicle, t_ms: Subframe, cfg: &ScenarioConfig) -> bool {
    let x = match cfg.edge_mode {
        // window rides with the platoon
        EdgeMode::Open => v.x_m - cfg.speed_mps() * t_ms as f64 / 1000.0,
        EdgeMode::Ring => v.x_m,
    };
    x >= cfg.window_lo_m && x < cfg.window_hi_m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub bytes: u32,
    pub generated_at: Subframe,
}

/// Beacon due from `v` at `t`, if any.
pub fn next_packet(v: &Vehicle, t: Subframe, cfg: &ScenarioConfig) -> Option<Packet> {
    let due =
        t >= v.first_packet_ms && (t - v.phase_ms as Subframe) % cfg.t_gen_ms as Subframe == 0;
    due.then_some(Packet {
        bytes: cfg.packet_bytes,
        generated_at: t,
    })
}

/// Worst-case wait implied by a generation offset inside a report window
/// ending at `t2`.
pub fn effective_offset(t_offset_ms: u32, t2_ms: u32) -> u32 {
    t_offset_ms.max(t2_ms.saturating_sub(t_offset_ms))
}
