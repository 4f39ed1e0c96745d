//! Run reports and the files written for them.
//!
//! `iterations.csv` has the header
//! `t,eta,ne_gap_total,ne_gap_0,...,ne_gap_{n-1},welfare,potential,q_err_max`.
//! Numbers are written with 17 significant digits so they parse back to the
//! same `f64`; quantities that were not computed are written as `NaN`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::save_policy;
use crate::policy::JointPolicy;
use crate::runner::config::{ExperimentConfig, ExperimentKind};
use crate::spi::IterationLog;

/// Columns before the per-agent gaps.
pub const CSV_FIXED_COLUMNS: [&str; 3] = ["t", "eta", "ne_gap_total"];

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTable {
    pub num_agents: usize,
    pub logs: Vec<IterationLog>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub version: String,
    /// Fully resolved configuration.
    pub config: ExperimentConfig,
    pub summary: Value,
    pub iterations: Option<IterationTable>,
    pub policy: Option<JointPolicy>,
    /// Human-readable summary lines.
    pub text: Vec<String>,
}

impl RunReport {
    pub fn summary_only(experiment: ExperimentKind, config: ExperimentConfig, summary: Value, text: Vec<String>) -> Self {
        Self {
            experiment,
            seed: config.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            summary,
            iterations: None,
            policy: None,
            text,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = json!({
            "experiment": self.experiment.name(),
            "seed": self.seed,
            "version": self.version,
            "config": self.config.to_toml()?,
            "summary": self.summary,
            "text": self.text,
        });
        serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| Error::Parse(e.to_string()))
    }
}

fn num(out: &mut String, x: Option<f64>) {
    match x {
        Some(v) if !v.is_nan() => {
            let _ = write!(out, ",{v:.16e}");
        }
        _ => out.push_str(",NaN"),
    }
}

pub fn csv_header(num_agents: usize) -> String {
    let mut cols: Vec<String> = CSV_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..num_agents).map(|i| format!("ne_gap_{i}")));
    cols.extend(["welfare", "potential", "q_err_max"].map(String::from));
    cols.join(",")
}

pub fn iterations_csv(table: &IterationTable) -> String {
    let mut out = csv_header(table.num_agents);
    out.push('\n');
    for log in &table.logs {
        let _ = write!(out, "{}", log.t);
        num(&mut out, Some(log.eta));
        num(&mut out, log.ne_gap_total);
        for i in 0..table.num_agents {
            num(&mut out, log.ne_gap.as_ref().map(|g| g[i]));
        }
        num(&mut out, log.welfare);
        num(&mut out, log.potential);
        num(&mut out, log.q_err.as_ref().map(|q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `config.resolved.toml` and, when present,
/// `iterations.csv`, `policy.json` and `plot.svg` into `dir`.
pub fn write_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("report.json", &report.to_json()?)?;
    put("config.resolved.toml", &report.config.to_toml()?)?;
    if let Some(table) = &report.iterations {
        let csv = iterations_csv(table);
        put("iterations.csv", &csv)?;
        if report.config.output.plot == Some(true) {
            put("plot.svg", &crate::runner::plot::svg_from_csv(&csv)?)?;
        }
    }
    if let Some(pi) = &report.policy {
        let p = dir.join("policy.json");
        save_policy(&p, pi)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(t: usize, gap: Option<f64>) -> IterationLog {
        IterationLog {
            t,
            eta: 0.1 + t as f64 / 3.0,
            q_err: Some(vec![1e-3, 2e-3]),
            ne_gap: gap.map(|g| vec![g / 3.0, g * 2.0 / 3.0]),
            ne_gap_total: gap,
            welfare: gap.map(|g| 1.0 - g),
            potential: None,
            advantage_sum: None,
            min_visitation: None,
            unvisited_transitions: 0,
            unvisited_reward_states: 0,
            wall_time_secs: 12.5,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = iterations_csv(&IterationTable {
            num_agents: 3,
            logs: vec![],
        });
        assert_eq!(csv, "t,eta,ne_gap_total,ne_gap_0,ne_gap_1,ne_gap_2,welfare,potential,q_err_max\n");
    }

    #[test]
    fn numbers_round_trip_bitwise() {
        let logs = vec![log(1, Some(0.1 + 0.2)), log(2, None)];
        let csv = iterations_csv(&IterationTable { num_agents: 2, logs: logs.clone() });
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0][1].parse::<f64>().unwrap().to_bits(), logs[0].eta.to_bits());
        assert_eq!(rows[0][2].parse::<f64>().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(rows[0][4].parse::<f64>().unwrap(), logs[0].ne_gap.as_ref().unwrap()[1]);
        assert_eq!(rows[1][2], "NaN");
        assert_eq!(rows[0][7].parse::<f64>().unwrap(), 2e-3);
        assert!(!csv.contains("12.5"));
    }
}
