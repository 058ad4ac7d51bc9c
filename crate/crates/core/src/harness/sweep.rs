use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SweepConfig, WORKERS_ENV};
use super::HarnessError;
use crate::ac::{tighten_and_resolve, MilpStatus, TighteningResult, TighteningStep};
use crate::linpf::{Limits, ThermalPolygon};
use crate::milp::{preset_by_name, Contract, Schedule, SolveOptions};
use crate::net::Network;
use crate::synth::{generate_scenario, Scenario};

pub const JOURNAL: &str = "cells.jsonl";
pub const CONFIG_COPY: &str = "config.toml";

/// Outcome class of one feeder and modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    /// A schedule passed the AC check at some tightening.
    Feasible,
    /// The grid ended without an AC-feasible schedule.
    Exhausted,
    /// No schedule exists at zero tightening.
    MilpInfeasible,
    Timeout,
    Error,
}

/// Deterministic metrics of one feeder and modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub feeder: String,
    pub modality: String,
    pub config_hash: String,
    pub users: usize,
    pub status: CellStatus,
    /// A schedule exists at zero tightening.
    pub milp_feasible: bool,
    pub ac_feasible: bool,
    pub delta_star: Option<f64>,
    /// Smallest tightening at which no schedule exists.
    pub infeasible_from: Option<f64>,
    /// Active user-timesteps of the AC-feasible schedule, else of the
    /// zero-tightening schedule.
    pub objective: Option<u64>,
    pub participants: Option<usize>,
    pub participant_fraction: Option<f64>,
    pub reduction_minutes_per_participant: Option<f64>,
    pub nodes: usize,
    pub error: Option<String>,
}

/// Wall time of one cell; kept apart from the metrics, which must not
/// depend on the machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub feeder: String,
    pub modality: String,
    pub config_hash: String,
    pub seconds: f64,
}

/// One journal line: a finished cell with its tightening trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub row: MetricsRow,
    pub seconds: f64,
    pub trace: Vec<TighteningStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub config_hash: String,
    pub step_minutes: u32,
    pub delta_grid: Vec<f64>,
    /// Modalities in report order.
    pub modalities: Vec<String>,
    pub rows: Vec<MetricsRow>,
    pub timings: Vec<Timing>,
}

impl MetricsTable {
    pub fn from_records(cfg: &SweepConfig, mut records: Vec<CellRecord>) -> Self {
        let order = |r: &CellRecord| {
            let m = cfg
                .modalities
                .iter()
                .position(|m| *m == r.row.modality)
                .unwrap_or(usize::MAX);
            (r.row.feeder.clone(), m)
        };
        records.sort_by_key(order);
        MetricsTable {
            config_hash: cfg.hash(),
            step_minutes: cfg.scenario.step_minutes,
            delta_grid: cfg.delta_grid.clone(),
            modalities: cfg.modalities.clone(),
            timings: records
                .iter()
                .map(|r| Timing {
                    feeder: r.row.feeder.clone(),
                    modality: r.row.modality.clone(),
                    config_hash: r.row.config_hash.clone(),
                    seconds: r.seconds,
                })
                .collect(),
            rows: records.into_iter().map(|r| r.row).collect(),
        }
    }
}

/// Worker count from the environment, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Participation metrics of `s`: participants, their fraction of all users
/// and reduction minutes per participant.
pub fn participation(s: &Schedule, step_minutes: u32) -> (usize, f64, Option<f64>) {
    let users = s.s.len();
    let participants = s.s.iter().filter(|row| row.contains(&1)).count();
    let fraction = if users == 0 {
        0.0
    } else {
        participants as f64 / users as f64
    };
    let minutes = (participants > 0).then(|| step_minutes as f64 * s.objective as f64 / participants as f64);
    (participants, fraction, minutes)
}

fn base_row(hash: &str, feeder: &str, modality: &str, users: usize) -> MetricsRow {
    MetricsRow {
        feeder: feeder.into(),
        modality: modality.into(),
        config_hash: hash.into(),
        users,
        status: CellStatus::Error,
        milp_feasible: false,
        ac_feasible: false,
        delta_star: None,
        infeasible_from: None,
        objective: None,
        participants: None,
        participant_fraction: None,
        reduction_minutes_per_participant: None,
        nodes: 0,
        error: None,
    }
}

/// Metrics row of a finished tightening loop.
pub fn row_from_result(mut row: MetricsRow, result: &TighteningResult, step_minutes: u32) -> MetricsRow {
    let first = result.trace.first();
    row.milp_feasible = first.is_some_and(|s| s.milp == MilpStatus::Optimal);
    row.nodes = result.trace.iter().map(|s| s.nodes).sum();
    row.infeasible_from = result
        .trace
        .iter()
        .find(|s| s.milp == MilpStatus::Infeasible)
        .map(|s| s.delta);
    row.delta_star = result.delta_star;
    row.ac_feasible = result.delta_star.is_some();
    row.status = if row.ac_feasible {
        CellStatus::Feasible
    } else if result.trace.iter().any(|s| s.milp == MilpStatus::Timeout) {
        CellStatus::Timeout
    } else if !row.milp_feasible {
        CellStatus::MilpInfeasible
    } else {
        CellStatus::Exhausted
    };
    match &result.schedule {
        Some(s) => {
            let (p, f, m) = participation(s, step_minutes);
            row.objective = Some(s.objective);
            row.participants = Some(p);
            row.participant_fraction = Some(f);
            row.reduction_minutes_per_participant = m;
        }
        None => row.objective = first.and_then(|s| s.objective),
    }
    row
}

fn run_cell(
    cfg: &SweepConfig,
    hash: &str,
    i: usize,
    scenario: &Result<Scenario, String>,
    modality: &str,
) -> CellRecord {
    let start = Instant::now();
    let feeder = SweepConfig::feeder_id(i);
    let feeder = feeder.as_str();
    let (row, trace) = match scenario {
        Err(e) => {
            let mut row = base_row(hash, feeder, modality, cfg.users_of(i));
            row.error = Some(e.clone());
            (row, Vec::new())
        }
        Ok(sc) => {
            let row = base_row(hash, feeder, modality, sc.feeder.users.len());
            match solve_cell(cfg, sc, modality) {
                Ok(result) => (row_from_result(row, &result, cfg.scenario.step_minutes), result.trace),
                Err(e) => (MetricsRow { error: Some(e), ..row }, Vec::new()),
            }
        }
    };
    CellRecord {
        row,
        seconds: start.elapsed().as_secs_f64(),
        trace,
    }
}

fn solve_cell(cfg: &SweepConfig, sc: &Scenario, modality: &str) -> Result<TighteningResult, String> {
    let net = Network::new(sc.feeder.clone()).map_err(|e| e.to_string())?;
    let demand = sc.profiles.to_demand(&net).map_err(|e| e.to_string())?;
    let limits = Limits::from_network(&net, demand.horizon());
    let preset = preset_by_name(modality, sc.params.step_minutes).map_err(|e| e.to_string())?;
    let contracts: Vec<Contract> = net
        .feeder
        .users
        .iter()
        .map(|u| Contract::new(&u.user_id, sc.params.p_gtd_kw, &preset))
        .collect();
    let polygon = ThermalPolygon::new(cfg.polygon_sides).map_err(|e| e.to_string())?;
    let opts = SolveOptions {
        time_limit: Some(Duration::from_secs_f64(cfg.time_limit_s)),
        node_limit: cfg.node_limit,
        ..Default::default()
    };
    tighten_and_resolve(&net, &demand, &contracts, &limits, &cfg.delta_grid, polygon, &opts).map_err(|e| e.to_string())
}

/// Journal records of `dir` that belong to the config with hash `hash`.
pub fn read_journal(dir: &Path, hash: &str) -> Result<Vec<CellRecord>, HarnessError> {
    let path = dir.join(JOURNAL);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut seen = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn last line from an interrupted run is dropped
        let Ok(rec) = serde_json::from_str::<CellRecord>(&line) else {
            log_skip(&path, i);
            continue;
        };
        if rec.row.config_hash == hash {
            seen.entry((rec.row.feeder.clone(), rec.row.modality.clone()))
                .or_insert(rec);
        }
    }
    Ok(seen.into_values().collect())
}

fn log_skip(path: &Path, line: usize) {
    eprintln!("warning: skipping unreadable line {} of {}", line + 1, path.display());
}

/// Runs every feeder and modality of `cfg` not yet in the journal of
/// `out_dir` on `workers` threads, appending each finished cell to it, and
/// returns the full table. Results do not depend on the worker count.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path, workers: usize) -> Result<MetricsTable, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;
    let cfg_text = toml::to_string(cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(out_dir.join(CONFIG_COPY), cfg_text).map_err(|e| HarnessError::Io(e.to_string()))?;
    let hash = cfg.hash();
    let mut records = read_journal(out_dir, &hash)?;
    let done: std::collections::HashSet<(String, String)> = records
        .iter()
        .map(|r| (r.row.feeder.clone(), r.row.modality.clone()))
        .collect();
    let todo: Vec<(usize, String)> = (0..cfg.feeders)
        .flat_map(|i| cfg.modalities.iter().map(move |m| (i, m.clone())))
        .filter(|(i, m)| !done.contains(&(SweepConfig::feeder_id(*i), m.clone())))
        .collect();

    let journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join(JOURNAL))
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    let journal = Mutex::new(journal);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let fresh: Result<Vec<CellRecord>, HarnessError> = pool.install(|| {
        let mut feeders: Vec<usize> = todo.iter().map(|t| t.0).collect();
        feeders.dedup();
        let scenarios: HashMap<usize, Result<Scenario, String>> = feeders
            .par_iter()
            .map(|&i| (i, generate_scenario(&cfg.scenario_of(i)).map_err(|e| e.to_string())))
            .collect();
        todo.par_iter()
            .map(|(i, m)| {
                let rec = run_cell(cfg, &hash, *i, &scenarios[i], m);
                let line = serde_json::to_string(&rec).map_err(|e| HarnessError::Io(e.to_string()))?;
                let mut f = journal.lock().expect("journal lock");
                writeln!(f, "{line}")
                    .and_then(|_| f.flush())
                    .map_err(|e| HarnessError::Io(e.to_string()))?;
                Ok(rec)
            })
            .collect()
    });
    records.extend(fresh?);
    Ok(MetricsTable::from_records(cfg, records))
}
