//! Config loading, parameter sweeps and the command-line entry point.

use std::path::PathBuf;

use clap::Parser;

use crate::{Error, Result};

pub mod config;
mod ini;
pub mod sweep;

pub use config::{ChannelConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "spssim",
    version,
    about = "Sidelink SB-SPS broadcast simulator"
)]
pub struct Cli {
    /// Sectioned key = value config file; omitted keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scenario preset s1..s4.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory. SPSSIM_OUT takes precedence.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sweep one key, e.g. `p_resel=0.0,0.4,0.8`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Number of consecutive seeds per sweep value.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Write the grant trace.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub strict: Option<bool>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl Cli {
    /// Builds the run config: file, then flags, then the environment.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.preset {
            cfg.set("scenario.preset", p)?;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(o) = std::env::var_os("SPSSIM_OUT").filter(|o| !o.is_empty()) {
            cfg.output_dir = PathBuf::from(o);
        }
        if self.trace {
            cfg.trace = true;
        }
        if let Some(s) = self.strict {
            cfg.strict = s;
        }
        Ok(cfg)
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    for w in cfg.validate()? {
        log::warn!("{w}");
    }
    if cli.print_config {
        print!("{}", cfg.emit());
        return Ok(());
    }
    if cli.seeds == 0 {
        return Err(Error::config("--seeds must be at least 1"));
    }
    let axis = cli.sweep.as_deref().map(sweep::Axis::parse).transpose()?;
    let jobs = sweep::plan(&cfg, axis.as_ref(), cli.seeds)?;
    let done = sweep::execute(&jobs)?;
    if jobs.len() > 1 {
        sweep::write_combined(&cfg.output_dir, axis.as_ref(), &done)?;
    }
    for f in &done {
        let get = |k| f.summary.get(k).unwrap_or("");
        println!(
            "seed={} {}per_total={} ipg_mean_ms={} ipg_p95_ms={}",
            f.seed,
            f.value
                .as_ref()
                .map_or(String::new(), |v| format!("value={v} ")),
            get("per_total"),
            get("ipg_mean_ms"),
            get("ipg_p95_ms")
        );
    }
    Ok(())
}

/// Parses `args`, runs, and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
