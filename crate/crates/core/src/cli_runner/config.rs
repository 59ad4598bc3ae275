//! Run configuration: every tunable of a simulation, loadable from and
//! printable to the sectioned text format.

use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel_model::{
    ChannelModel, PathLossBin, PathLossTable, TwoRayParams, SPEED_OF_LIGHT,
};
use crate::metrics::MetricsConfig;
use crate::phy_layer::{BlerCurve, RadioConfig};
use crate::resource_grid::GridConfig;
use crate::scenario::{self, ScenarioConfig};
use crate::sps_scheduler::SpsConfig;
use crate::{Error, Result};

use super::ini;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub carrier_mhz: f64,
    pub antenna_height_m: f64,
    pub gamma_re: f64,
    pub gamma_im: f64,
    pub bins: Vec<PathLossBin>,
    pub weibull_k: f64,
    pub fading: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let table = PathLossTable::fowlerville();
        ChannelConfig {
            carrier_mhz: 5860.0,
            antenna_height_m: 1.5,
            gamma_re: -1.0,
            gamma_im: 0.0,
            bins: table.bins,
            weibull_k: table.weibull_k,
            fading: true,
        }
    }
}

impl ChannelConfig {
    pub fn build(&self) -> Result<ChannelModel> {
        if !(self.carrier_mhz > 0.0) {
            return Err(Error::config("channel.carrier_mhz must be positive"));
        }
        let params = TwoRayParams {
            wavelength_m: SPEED_OF_LIGHT / (self.carrier_mhz * 1e6),
            gamma_re: self.gamma_re,
            gamma_im: self.gamma_im,
            antenna_height_m: self.antenna_height_m,
        };
        let table = PathLossTable {
            bins: self.bins.clone(),
            weibull_k: self.weibull_k,
        };
        ChannelModel::new(params, table, self.fading)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub trace: bool,
    /// Reject sub-channel layouts the standard cannot signal.
    pub strict: bool,
    pub grid: GridConfig,
    pub radio: RadioConfig,
    /// `None` selects the bundled curve.
    pub bler_curve: Option<PathBuf>,
    pub sps: SpsConfig,
    pub channel: ChannelConfig,
    pub preset: Option<String>,
    pub scenario: ScenarioConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            trace: false,
            strict: true,
            grid: GridConfig::default(),
            radio: RadioConfig::default(),
            bler_curve: None,
            sps: SpsConfig::default(),
            channel: ChannelConfig::default(),
            preset: None,
            scenario: ScenarioConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "run.seed",
    "run.output_dir",
    "run.trace",
    "run.strict",
    "grid.bandwidth_rbs",
    "grid.subchannel_size",
    "grid.l_subch",
    "grid.mcs_index",
    "grid.pscch_scheme",
    "grid.n_pssch_rb",
    "radio.tx_power_dbm",
    "radio.antenna_gain_dbi",
    "radio.noise_figure_db",
    "radio.rx_antennas",
    "radio.noise_density_dbm_hz",
    "radio.rb_bandwidth_hz",
    "radio.sci_sensitivity_dbm",
    "radio.sci_sinr_threshold_db",
    "radio.sci_model",
    "radio.bler_curve",
    "sps.t1",
    "sps.t2",
    "sps.p_rsvp_ms",
    "sps.p_step_ms",
    "sps.th_sps_dbm",
    "sps.p_resel",
    "sps.harq_enabled",
    "sps.max_missed",
    "sps.allowed_periods_ms",
    "channel.carrier_mhz",
    "channel.antenna_height_m",
    "channel.gamma_re",
    "channel.gamma_im",
    "channel.bins",
    "channel.weibull_k",
    "channel.fading",
    "scenario.preset",
    "scenario.lanes",
    "scenario.lane_spacing_m",
    "scenario.road_length_m",
    "scenario.density",
    "scenario.speed_kmh",
    "scenario.t_gen_ms",
    "scenario.packet_bytes",
    "scenario.sim_time_s",
    "scenario.offset_mode",
    "scenario.edge_mode",
    "scenario.warmup_ms",
    "scenario.window_lo_m",
    "scenario.window_hi_m",
    "scenario.mobility_step_ms",
    "metrics.bin_width_m",
    "metrics.max_range_m",
    "metrics.ipg_bin_ms",
    "metrics.ipg_cap_ms",
];

/// Keys a sweep may vary.
pub const SWEEPABLE: &[&str] = &[
    "sps.p_resel",
    "sps.th_sps_dbm",
    "sps.t2",
    "sps.harq_enabled",
    "sps.max_missed",
    "scenario.preset",
    "scenario.density",
    "scenario.speed_kmh",
    "scenario.offset_mode",
    "scenario.packet_bytes",
    "scenario.edge_mode",
    "grid.mcs_index",
    "radio.sci_model",
];

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(format!(
            "{key}: expected true or false, found {v:?}"
        ))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<u32>> {
    v.split(',').map(|s| parse_val(key, s.trim())).collect()
}

impl RunConfig {
    /// Sets one `section.key` from its text form.
    pub fn set(&mut self, path: &str, v: &str) -> Result<()> {
        let k = path;
        match path {
            "run.seed" => self.seed = parse_val(k, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.trace" => self.trace = parse_bool(k, v)?,
            "run.strict" => self.strict = parse_bool(k, v)?,
            "grid.bandwidth_rbs" => self.grid.bandwidth_rbs = parse_val(k, v)?,
            "grid.subchannel_size" => self.grid.subchannel_size = parse_val(k, v)?,
            "grid.l_subch" => self.grid.l_subch = parse_val(k, v)?,
            "grid.mcs_index" => self.grid.mcs_index = parse_val(k, v)?,
            "grid.pscch_scheme" => self.grid.pscch_scheme = v.parse()?,
            "grid.n_pssch_rb" => self.grid.n_pssch_rb = parse_val(k, v)?,
            "radio.tx_power_dbm" => self.radio.tx_power_dbm = parse_val(k, v)?,
            "radio.antenna_gain_dbi" => self.radio.antenna_gain_dbi = parse_val(k, v)?,
            "radio.noise_figure_db" => self.radio.noise_figure_db = parse_val(k, v)?,
            "radio.rx_antennas" => self.radio.rx_antennas = parse_val(k, v)?,
            "radio.noise_density_dbm_hz" => self.radio.noise_density_dbm_hz = parse_val(k, v)?,
            "radio.rb_bandwidth_hz" => self.radio.rb_bandwidth_hz = parse_val(k, v)?,
            "radio.sci_sensitivity_dbm" => self.radio.sci_sensitivity_dbm = parse_val(k, v)?,
            "radio.sci_sinr_threshold_db" => self.radio.sci_sinr_threshold_db = parse_val(k, v)?,
            "radio.sci_model" => self.radio.sci_model = v.parse()?,
            "radio.bler_curve" => {
                self.bler_curve = match v {
                    "" | "default" => None,
                    p => Some(PathBuf::from(p)),
                }
            }
            "sps.t1" => self.sps.t1 = parse_val(k, v)?,
            "sps.t2" => self.sps.t2 = parse_val(k, v)?,
            "sps.p_rsvp_ms" => self.sps.p_rsvp_ms = parse_val(k, v)?,
            "sps.p_step_ms" => self.sps.p_step_ms = parse_val(k, v)?,
            "sps.th_sps_dbm" => self.sps.th_sps_dbm = parse_val(k, v)?,
            "sps.p_resel" => self.sps.p_resel = parse_val(k, v)?,
            "sps.harq_enabled" => self.sps.harq_enabled = parse_bool(k, v)?,
            "sps.max_missed" => self.sps.max_missed = parse_val(k, v)?,
            "sps.allowed_periods_ms" => self.sps.allowed_periods_ms = parse_list(k, v)?,
            "channel.carrier_mhz" => self.channel.carrier_mhz = parse_val(k, v)?,
            "channel.antenna_height_m" => self.channel.antenna_height_m = parse_val(k, v)?,
            "channel.gamma_re" => self.channel.gamma_re = parse_val(k, v)?,
            "channel.gamma_im" => self.channel.gamma_im = parse_val(k, v)?,
            "channel.bins" => self.channel.bins = PathLossTable::parse_bins(v)?,
            "channel.weibull_k" => self.channel.weibull_k = parse_val(k, v)?,
            "channel.fading" => self.channel.fading = parse_bool(k, v)?,
            "scenario.preset" => {
                self.scenario = self.scenario.clone().with_preset(v)?;
                self.preset = Some(v.to_string());
            }
            "scenario.lanes" => self.scenario.lanes = parse_val(k, v)?,
            "scenario.lane_spacing_m" => self.scenario.lane_spacing_m = parse_val(k, v)?,
            "scenario.road_length_m" => self.scenario.road_length_m = parse_val(k, v)?,
            "scenario.density" => self.scenario.density = parse_val(k, v)?,
            "scenario.speed_kmh" => self.scenario.speed_kmh = parse_val(k, v)?,
            "scenario.t_gen_ms" => self.scenario.t_gen_ms = parse_val(k, v)?,
            "scenario.packet_bytes" => self.scenario.packet_bytes = parse_val(k, v)?,
            "scenario.sim_time_s" => self.scenario.sim_time_s = parse_val(k, v)?,
            "scenario.offset_mode" => self.scenario.offset_mode = v.parse()?,
            "scenario.edge_mode" => self.scenario.edge_mode = v.parse()?,
            "scenario.warmup_ms" => self.scenario.warmup_ms = parse_val(k, v)?,
            "scenario.window_lo_m" => self.scenario.window_lo_m = parse_val(k, v)?,
            "scenario.window_hi_m" => self.scenario.window_hi_m = parse_val(k, v)?,
            "scenario.mobility_step_ms" => self.scenario.mobility_step_ms = parse_val(k, v)?,
            "metrics.bin_width_m" => self.metrics.bin_width_m = parse_val(k, v)?,
            "metrics.max_range_m" => self.metrics.max_range_m = parse_val(k, v)?,
            "metrics.ipg_bin_ms" => self.metrics.ipg_bin_ms = parse_val(k, v)?,
            "metrics.ipg_cap_ms" => self.metrics.ipg_cap_ms = parse_val(k, v)?,
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Current value of `section.key` in the text form [`set`](Self::set)
    /// accepts.
    pub fn get(&self, path: &str) -> Option<String> {
        fn s(v: impl Display) -> Option<String> {
            Some(v.to_string())
        }
        let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        match path {
            "run.seed" => s(self.seed),
            "run.output_dir" => s(self.output_dir.display()),
            "run.trace" => s(self.trace),
            "run.strict" => s(self.strict),
            "grid.bandwidth_rbs" => s(self.grid.bandwidth_rbs),
            "grid.subchannel_size" => s(self.grid.subchannel_size),
            "grid.l_subch" => s(self.grid.l_subch),
            "grid.mcs_index" => s(self.grid.mcs_index),
            "grid.pscch_scheme" => s(self.grid.pscch_scheme),
            "grid.n_pssch_rb" => s(self.grid.n_pssch_rb),
            "radio.tx_power_dbm" => s(self.radio.tx_power_dbm),
            "radio.antenna_gain_dbi" => s(self.radio.antenna_gain_dbi),
            "radio.noise_figure_db" => s(self.radio.noise_figure_db),
            "radio.rx_antennas" => s(self.radio.rx_antennas),
            "radio.noise_density_dbm_hz" => s(self.radio.noise_density_dbm_hz),
            "radio.rb_bandwidth_hz" => s(self.radio.rb_bandwidth_hz),
            "radio.sci_sensitivity_dbm" => s(self.radio.sci_sensitivity_dbm),
            "radio.sci_sinr_threshold_db" => s(self.radio.sci_sinr_threshold_db),
            "radio.sci_model" => s(self.radio.sci_model),
            "radio.bler_curve" => s(self
                .bler_curve
                .as_ref()
                .map_or("default".to_string(), |p| p.display().to_string())),
            "sps.t1" => s(self.sps.t1),
            "sps.t2" => s(self.sps.t2),
            "sps.p_rsvp_ms" => s(self.sps.p_rsvp_ms),
            "sps.p_step_ms" => s(self.sps.p_step_ms),
            "sps.th_sps_dbm" => s(self.sps.th_sps_dbm),
            "sps.p_resel" => s(self.sps.p_resel),
            "sps.harq_enabled" => s(self.sps.harq_enabled),
            "sps.max_missed" => s(self.sps.max_missed),
            "sps.allowed_periods_ms" => s(list(&self.sps.allowed_periods_ms)),
            "channel.carrier_mhz" => s(self.channel.carrier_mhz),
            "channel.antenna_height_m" => s(self.channel.antenna_height_m),
            "channel.gamma_re" => s(self.channel.gamma_re),
            "channel.gamma_im" => s(self.channel.gamma_im),
            "channel.bins" => s(PathLossTable {
                bins: self.channel.bins.clone(),
                weibull_k: self.channel.weibull_k,
            }
            .format_bins()),
            "channel.weibull_k" => s(self.channel.weibull_k),
            "channel.fading" => s(self.channel.fading),
            "scenario.preset" => self.preset.clone(),
            "scenario.lanes" => s(self.scenario.lanes),
            "scenario.lane_spacing_m" => s(self.scenario.lane_spacing_m),
            "scenario.road_length_m" => s(self.scenario.road_length_m),
            "scenario.density" => s(self.scenario.density),
            "scenario.speed_kmh" => s(self.scenario.speed_kmh),
            "scenario.t_gen_ms" => s(self.scenario.t_gen_ms),
            "scenario.packet_bytes" => s(self.scenario.packet_bytes),
            "scenario.sim_time_s" => s(self.scenario.sim_time_s),
            "scenario.offset_mode" => s(self.scenario.offset_mode),
            "scenario.edge_mode" => s(self.scenario.edge_mode),
            "scenario.warmup_ms" => s(self.scenario.warmup_ms),
            "scenario.window_lo_m" => s(self.scenario.window_lo_m),
            "scenario.window_hi_m" => s(self.scenario.window_hi_m),
            "scenario.mobility_step_ms" => s(self.scenario.mobility_step_ms),
            "metrics.bin_width_m" => s(self.metrics.bin_width_m),
            "metrics.max_range_m" => s(self.metrics.max_range_m),
            "metrics.ipg_bin_ms" => s(self.metrics.ipg_bin_ms),
            "metrics.ipg_cap_ms" => s(self.metrics.ipg_cap_ms),
            _ => None,
        }
    }

    /// Reads a config text on top of the defaults. A preset is applied
    /// before explicit scenario keys so those can refine it.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut entries = ini::parse(text, file)?;
        entries.sort_by_key(|e| !(e.section == "scenario" && e.key == "preset"));
        let mut cfg = RunConfig::default();
        for e in entries {
            let path = format!("{}.{}", e.section, e.key);
            cfg.set(&path, &e.value).map_err(|err| Error::Parse {
                file: file.to_string(),
                line: e.line,
                msg: match err {
                    Error::InvalidConfig(m) => m,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// The fully resolved config in the file format.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let (sec, name) = key.split_once('.').expect("keys are section.name");
            let Some(value) = self.get(key) else {
                continue;
            };
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let _ = writeln!(out, "{name} = {value}");
        }
        out
    }

    /// Checks every section and their cross-constraints; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.grid.validate(self.strict)?;
        self.radio.validate()?;
        self.sps.validate()?;
        self.channel.build()?;
        self.scenario.validate()?;
        self.metrics.validate()?;
        let capacity = self.grid.tb_capacity_bits()?;
        let pdu = self.scenario.packet_bits();
        if capacity < pdu {
            return Err(Error::config(format!(
                "grid.n_pssch_rb = {} at grid.mcs_index = {} carries {capacity} bits, \
                 too few for scenario.packet_bytes = {} ({pdu} bits)",
                self.grid.n_pssch_rb, self.grid.mcs_index, self.scenario.packet_bytes
            )));
        }
        if self.sps.p_rsvp_ms != self.scenario.t_gen_ms {
            log::debug!(
                "reservation interval {} ms differs from generation interval {} ms",
                self.sps.p_rsvp_ms,
                self.scenario.t_gen_ms
            );
        }
        let mut warnings = self.sps.warnings();
        if let Some(p) = &self.preset {
            if scenario::preset(p).is_err() {
                warnings.push(format!("unknown preset {p}"));
            }
        }
        Ok(warnings)
    }

    pub fn bler(&self) -> Result<BlerCurve> {
        match &self.bler_curve {
            None => Ok(BlerCurve::default()),
            Some(p) => BlerCurve::load(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("", "empty.ini").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.radio.tx_power_dbm, 23.0);
        assert_eq!(c.grid.mcs_index, 5);
        assert_eq!(c.scenario.packet_bytes, 190);
        assert_eq!(c.scenario.t_gen_ms, 100);
        assert_eq!((c.sps.t1, c.sps.t2, c.sps.p_rsvp_ms), (1, 100, 100));
        assert!(c.validate().unwrap().is_empty());
    }

    #[test]
    fn every_key_round_trips() {
        let mut c = RunConfig::default();
        c.set("scenario.preset", "s3").unwrap();
        c.set("sps.p_resel", "0.4").unwrap();
        c.set("radio.bler_curve", "/tmp/curve.txt").unwrap();
        c.set("scenario.offset_mode", "synchronized").unwrap();
        let text = c.emit();
        let back = RunConfig::parse(&text, "emitted").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.emit(), text);
        for key in KEYS {
            if *key != "scenario.preset" {
                assert!(c.get(key).is_some(), "{key}");
            }
        }
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::parse("[sps]\np_reselect = 0.2\n", "typo.ini").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("sps.p_reselect"));
    }

    #[test]
    fn p_resel_off_the_grid_warns() {
        let c = RunConfig::parse("[sps]\np_resel = 0.5\n", "w.ini").unwrap();
        assert_eq!(c.validate().unwrap().len(), 1);
    }

    #[test]
    fn long_report_window_rejected() {
        let c = RunConfig::parse("[sps]\nt2 = 150\n", "t2.ini").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn explicit_keys_refine_preset() {
        let c = RunConfig::parse("[scenario]\nspeed_kmh = 33\npreset = s4\n", "p.ini").unwrap();
        assert_eq!(c.scenario.density, 100.0);
        assert_eq!(c.scenario.speed_kmh, 33.0);
    }

    #[test]
    fn inconsistent_grid_names_both_fields() {
        let c = RunConfig::parse("[grid]\nn_pssch_rb = 12\n", "g.ini").unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(
            msg.contains("grid.n_pssch_rb") && msg.contains("scenario.packet_bytes"),
            "{msg}"
        );
        let c = RunConfig::parse("[grid]\nn_pssch_rb = 30\n", "g.ini").unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(
            msg.contains("grid.n_pssch_rb") && msg.contains("grid.l_subch"),
            "{msg}"
        );
    }

    #[test]
    fn strict_flag_gates_odd_layouts() {
        let mut c = RunConfig::default();
        c.grid.subchannel_size = 12;
        c.grid.l_subch = 2;
        assert!(c.validate().is_err());
        c.strict = false;
        assert!(c.validate().is_ok());
    }
}
