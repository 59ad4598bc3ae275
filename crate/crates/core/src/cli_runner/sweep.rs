//! Batches of runs over one config axis and a range of seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::metrics::Summary;
use crate::sim_engine::{self, RunOutput};
use crate::{Error, Result};

use super::config::{RunConfig, SWEEPABLE};

/// One axis of a sweep: a resolved `section.key` and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

/// Resolves a sweep axis name: a full `section.key`, a bare key, or a
/// unique prefix of a bare key (`th_sps` for `sps.th_sps_dbm`).
pub fn resolve_key(name: &str) -> Result<&'static str> {
    if let Some(k) = SWEEPABLE.iter().find(|k| **k == name) {
        return Ok(k);
    }
    fn bare(k: &&'static str) -> &'static str {
        k.split_once('.').map_or(*k, |(_, b)| b)
    }
    let exact: Vec<&'static str> = SWEEPABLE
        .iter()
        .filter(|k| bare(k) == name)
        .copied()
        .collect();
    let hits = if exact.is_empty() {
        SWEEPABLE
            .iter()
            .filter(|k| bare(k).starts_with(name) && !name.is_empty())
            .copied()
            .collect()
    } else {
        exact
    };
    match hits.as_slice() {
        [k] => Ok(k),
        _ => Err(Error::config(format!(
            "{name:?} is not a sweepable key; choose one of: {}",
            SWEEPABLE.join(", ")
        ))),
    }
}

impl Axis {
    /// Parses `KEY=V1,V2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("sweep {spec:?} must look like KEY=V1,V2")))?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::config(format!("sweep {spec:?} lists no values")));
        }
        Ok(Axis {
            key: resolve_key(key.trim())?.to_string(),
            values,
        })
    }
}

/// A single run inside a batch.
#[derive(Debug, Clone)]
pub struct Job {
    pub value: Option<String>,
    pub seed: u64,
    pub config: RunConfig,
    pub dir: PathBuf,
}

/// Expands `base` into one job per (value, seed), values outermost.
pub fn plan(base: &RunConfig, axis: Option<&Axis>, seeds: u64) -> Result<Vec<Job>> {
    let values: Vec<Option<&String>> = match axis {
        Some(a) => a.values.iter().map(Some).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for value in values {
        for s in 0..seeds.max(1) {
            let mut config = base.clone();
            let seed = base.seed + s;
            config.seed = seed;
            let mut dir = base.output_dir.clone();
            if let (Some(a), Some(v)) = (axis, value) {
                config.set(&a.key, v)?;
                dir.push(format!("{}={}", a.key, v.replace(['/', ':'], "_")));
            }
            if seeds > 1 || axis.is_some() {
                dir.push(format!("seed_{seed}"));
            }
            config.output_dir = dir.clone();
            config.validate()?;
            jobs.push(Job {
                value: value.cloned(),
                seed,
                config,
                dir,
            });
        }
    }
    Ok(jobs)
}

/// Writes a run's CSVs, summary, resolved config and optional trace.
pub fn write_run(dir: &Path, config: &RunConfig, out: &RunOutput) -> Result<()> {
    out.metrics.write_outputs(dir, &out.summary)?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("config.ini", &config.emit())?;
    if let Some(trace) = &out.trace {
        write("trace.csv", trace)?;
    }
    Ok(())
}

/// Results of one finished job, kept for the combined tables.
#[derive(Debug, Clone)]
pub struct Finished {
    pub value: Option<String>,
    pub seed: u64,
    pub per_csv: String,
    pub ipg_csv: String,
    pub summary: Summary,
}

/// Runs every job (concurrently) and writes each run's outputs to its own
/// directory. Results come back in job order.
pub fn execute(jobs: &[Job]) -> Result<Vec<Finished>> {
    jobs.par_iter()
        .map(|job| {
            log::info!("run {} (seed {})", job.dir.display(), job.seed);
            let out = sim_engine::run(&job.config)?;
            write_run(&job.dir, &job.config, &out)?;
            let m = &out.metrics.config();
            Ok(Finished {
                value: job.value.clone(),
                seed: job.seed,
                per_csv: out.metrics.per_curve().to_csv(),
                ipg_csv: out.metrics.ipg().to_csv(m.ipg_bin_ms, m.ipg_cap_ms),
                summary: out.summary,
            })
        })
        .collect()
}

fn prefix_rows(out: &mut String, axis: &str, f: &Finished, csv: &str) {
    let value = f.value.as_deref().unwrap_or("");
    for line in csv.lines().skip(1) {
        let _ = writeln!(out, "{axis},{value},{},{line}", f.seed);
    }
}

/// Long-format tables over all runs: `per_curve_all.csv`,
/// `ipg_hist_all.csv` and `summary_all.csv`, rows in (value, seed) order.
pub fn write_combined(dir: &Path, axis: Option<&Axis>, done: &[Finished]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let axis_name = axis.map_or("", |a| a.key.as_str());
    let header = |csv: &str| csv.lines().next().unwrap_or("").to_string();
    let mut per = String::new();
    let mut ipg = String::new();
    let mut summary = String::from("axis,value,seed,key,result\n");
    if let Some(first) = done.first() {
        let _ = writeln!(per, "axis,value,seed,{}", header(&first.per_csv));
        let _ = writeln!(ipg, "axis,value,seed,{}", header(&first.ipg_csv));
    }
    for f in done {
        prefix_rows(&mut per, axis_name, f, &f.per_csv);
        prefix_rows(&mut ipg, axis_name, f, &f.ipg_csv);
        for (k, v) in &f.summary.entries {
            let _ = writeln!(
                summary,
                "{axis_name},{},{},{k},{v}",
                f.value.as_deref().unwrap_or(""),
                f.seed
            );
        }
    }
    for (name, body) in [
        ("per_curve_all.csv", per),
        ("ipg_hist_all.csv", ipg),
        ("summary_all.csv", summary),
    ] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_resolve() {
        assert_eq!(resolve_key("p_resel").unwrap(), "sps.p_resel");
        assert_eq!(resolve_key("th_sps").unwrap(), "sps.th_sps_dbm");
        assert_eq!(
            resolve_key("scenario.offset_mode").unwrap(),
            "scenario.offset_mode"
        );
        let err = resolve_key("tx_power_dbm").unwrap_err().to_string();
        assert!(err.contains("sps.p_resel"), "{err}");
    }

    #[test]
    fn cartesian_plan() {
        let axis = Axis::parse("p_resel=0.0,0.4,0.8").unwrap();
        let jobs = plan(&RunConfig::default(), Some(&axis), 5).unwrap();
        assert_eq!(jobs.len(), 15);
        assert_eq!(jobs[7].config.sps.p_resel, 0.4);
        assert_eq!(jobs[7].seed, 3);
        assert!(jobs[7].dir.ends_with("sps.p_resel=0.4/seed_3"));
    }

    #[test]
    fn offset_values_parse() {
        let axis = Axis::parse("offset_mode=synchronized,uniform:49,uniform:99").unwrap();
        let jobs = plan(&RunConfig::default(), Some(&axis), 1).unwrap();
        assert_eq!(jobs.len(), 3);
        assert!(jobs[1]
            .dir
            .ends_with("scenario.offset_mode=uniform_49/seed_1"));
    }

    #[test]
    fn bad_values_fail_before_running() {
        let axis = Axis::parse("t2=50,150").unwrap();
        assert!(plan(&RunConfig::default(), Some(&axis), 1).is_err());
        assert!(Axis::parse("p_resel").is_err());
    }
}
