//! Report envelopes, CSV tables and file plumbing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fareopt_core::optimize::OptimizeError;
use fareopt_core::{NetworkConfig, SolutionReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a result came from; embedded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population_sha256: Option<String>,
}

impl Provenance {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self { tool: "fareopt", version: TOOL_VERSION, command, seed, config_sha256: None, population_sha256: None }
    }

    /// One-line `key=value` form for CSV comment headers.
    pub fn comment(&self) -> String {
        let mut s = format!("# tool={} version={} command={}", self.tool, self.version, self.command);
        if let Some(seed) = self.seed {
            s += &format!(" seed={seed}");
        }
        if let Some(h) = &self.config_sha256 {
            s += &format!(" config_sha256={h}");
        }
        if let Some(h) = &self.population_sha256 {
            s += &format!(" population_sha256={h}");
        }
        s
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    v: u32,
    #[serde(flatten)]
    provenance: &'a Provenance,
    result: &'a T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of several files, in order.
pub fn sha256_files(contents: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    for c in contents {
        h.update(Sha256::digest(c));
    }
    hex::encode(h.finalize())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn json_envelope<T: Serialize>(provenance: &Provenance, result: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { v: 1, provenance, result }).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `text` to `out`, or to standard output.
pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
            }
            fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Config(format!("cannot write output: {e}")))
        }
    }
}

/// Human-readable summary; on standard error when the report itself goes to
/// standard output.
pub fn note(to_stdout: bool, text: &str) {
    if to_stdout {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

/// Column names of the solution table: `gamma,L,R,objective,fare_i...,
/// flow_car_i...,flow_taxi_i...,flow_rail,flow_walk,status`.
pub fn solution_header(n_roads: usize) -> Vec<String> {
    let mut h: Vec<String> = ["gamma", "L", "R", "objective"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n_roads).map(|i| format!("fare_{i}")));
    h.extend((1..=n_roads).map(|i| format!("flow_car_{i}")));
    h.extend((1..=n_roads).map(|i| format!("flow_taxi_{i}")));
    h.extend(["flow_rail", "flow_walk", "status"].iter().map(|s| s.to_string()));
    h
}

/// One table row; a failed point keeps its gamma and error, other cells empty.
pub fn solution_row(n_roads: usize, gamma: f64, result: &Result<SolutionReport, OptimizeError>) -> Vec<String> {
    match result {
        Ok(r) => {
            let mut row = vec![gamma.to_string(), r.latency.to_string(), r.risk.to_string(), r.objective.to_string()];
            row.extend(r.fares.0.iter().map(|x| x.to_string()));
            row.extend(r.flows.car_flows.iter().map(|x| x.to_string()));
            row.extend(r.flows.taxi_flows.iter().map(|x| x.to_string()));
            row.push(r.flows.rail_flow.to_string());
            row.push(r.flows.walk_flow.to_string());
            row.push("ok".into());
            row
        }
        Err(e) => {
            let mut row = vec![gamma.to_string()];
            row.extend(std::iter::repeat_n(String::new(), 3 + 3 * n_roads + 2));
            row.push(format!("error: {e}"));
            row
        }
    }
}

pub fn csv_table(provenance: &Provenance, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Config(e.to_string()))?).expect("csv is utf-8");
    Ok(format!("{}\n{body}", provenance.comment()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(format!("csv: {e}"))
}

/// Fixed-width table of one solution.
pub fn solution_summary(config: &NetworkConfig, r: &SolutionReport) -> String {
    let d = &r.diagnostics;
    let failed = d.starts.iter().filter(|s| s.objective.is_none()).count();
    let mut s = format!(
        "gamma {:.3}   objective {:.2}   latency L {:.2}   risk R {:.2}   penalty {:.3}\n",
        r.gamma, r.objective, r.latency, r.risk, r.penalty
    );
    s += &format!("{:<6}{:>10}{:>12}{:>12}{:>12}\n", "road", "fare", "car flow", "taxi flow", "latency");
    for i in 0..config.n_roads() {
        let latency = config.road_latency(i, &r.flows);
        s += &format!("{:<6}{:>10.3}{:>12.2}{:>12.2}{:>12.2}\n", i + 1, r.fares.0[i], r.flows.car_flows[i], r.flows.taxi_flows[i], latency);
    }
    s += &format!("rail flow {:.2}   walk flow {:.2}\n", r.flows.rail_flow, r.flows.walk_flow);
    s += &format!(
        "best start {} of {} ({} failed), equilibrium {} iterations, residual {:.3e}\n",
        d.best_start,
        d.starts.len(),
        failed,
        d.equilibrium_iterations,
        d.equilibrium_residual
    );
    s
}
