use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use super::config::SweepConfig;
use super::sweep::{read_journal, CellStatus, MetricsRow, MetricsTable, Timing, CONFIG_COPY};
use super::HarnessError;

pub const METRICS_CSV: &str = "metrics.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CURVE_CSV: &str = "tightening_curve.csv";

/// First, second and third quartile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    /// Quartiles of `values`; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut d = Data::new(values.to_vec());
        Some(Quartiles {
            q1: d.lower_quartile(),
            median: d.median(),
            q3: d.upper_quartile(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalitySummary {
    pub modality: String,
    pub feeders: usize,
    /// Share of feeders with a schedule at zero tightening, percent.
    pub milp_feasible_pct: f64,
    /// Share of feeders with an AC-feasible schedule on the grid, percent.
    pub ac_feasible_pct: f64,
    pub timeouts: usize,
    pub errors: usize,
    pub reduction_minutes_per_participant: Option<Quartiles>,
    pub participant_fraction: Option<Quartiles>,
    pub participant_fraction_mean: Option<f64>,
    /// Wall time per feeder, seconds; from `timings.csv`.
    pub solve_seconds: Option<Quartiles>,
    pub solve_seconds_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub step_minutes: u32,
    pub modalities: Vec<ModalitySummary>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Per-modality aggregates. Everything except the wall-time fields is a
/// function of the metrics rows alone.
pub fn summarize(table: &MetricsTable) -> Summary {
    let modalities = table
        .modalities
        .iter()
        .map(|m| {
            let rows: Vec<&MetricsRow> = table.rows.iter().filter(|r| &r.modality == m).collect();
            let n = rows.len();
            let count = |f: &dyn Fn(&MetricsRow) -> bool| rows.iter().filter(|r| f(r)).count();
            let minutes: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.reduction_minutes_per_participant)
                .collect();
            let fractions: Vec<f64> = rows.iter().filter_map(|r| r.participant_fraction).collect();
            let seconds: Vec<f64> = table
                .timings
                .iter()
                .filter(|t| &t.modality == m)
                .map(|t| t.seconds)
                .collect();
            ModalitySummary {
                modality: m.clone(),
                feeders: n,
                milp_feasible_pct: pct(count(&|r| r.milp_feasible), n),
                ac_feasible_pct: pct(count(&|r| r.ac_feasible), n),
                timeouts: count(&|r| r.status == CellStatus::Timeout),
                errors: count(&|r| r.status == CellStatus::Error),
                reduction_minutes_per_participant: Quartiles::of(&minutes),
                participant_fraction: Quartiles::of(&fractions),
                participant_fraction_mean: (!fractions.is_empty())
                    .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
                solve_seconds: Quartiles::of(&seconds),
                solve_seconds_max: seconds.iter().copied().reduce(f64::max),
            }
        })
        .collect();
    Summary {
        config_hash: table.config_hash.clone(),
        step_minutes: table.step_minutes,
        modalities,
    }
}

/// Cumulative share of feeders (per modality) whose schedule is
/// AC-feasible at a tightening of at most `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub modality: String,
    pub delta: f64,
    pub feasible_pct: f64,
}

pub fn tightening_curve(table: &MetricsTable) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for m in &table.modalities {
        let rows: Vec<&MetricsRow> = table.rows.iter().filter(|r| &r.modality == m).collect();
        for &delta in &table.delta_grid {
            let ok = rows.iter().filter(|r| r.delta_star.is_some_and(|d| d <= delta)).count();
            out.push(CurvePoint {
                modality: m.clone(),
                delta,
                feasible_pct: pct(ok, rows.len()),
            });
        }
    }
    out
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Writes `metrics.csv`, `timings.csv`, `summary.json` and
/// `tightening_curve.csv` into `dir`.
pub fn emit_report(table: &MetricsTable, dir: &Path) -> Result<(), HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::Config("metrics table is empty".into()));
    }
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_csv(&dir.join(METRICS_CSV), &table.rows)?;
    write_csv(&dir.join(TIMINGS_CSV), &table.timings)?;
    write_csv(&dir.join(CURVE_CSV), &tightening_curve(table))?;
    let summary = serde_json::to_string_pretty(&summarize(table)).map_err(|e| HarnessError::Io(e.to_string()))?;
    let path = dir.join(SUMMARY_JSON);
    fs::write(&path, summary + "\n").map_err(|e| io(&path, e))
}

/// Table of a sweep directory, from its config copy and journal.
pub fn load_table(dir: &Path) -> Result<MetricsTable, HarnessError> {
    let cfg = SweepConfig::load(dir.join(CONFIG_COPY))?;
    let records = read_journal(dir, &cfg.hash())?;
    if records.is_empty() {
        return Err(HarnessError::Io(format!("{}: no finished cells", dir.display())));
    }
    Ok(MetricsTable::from_records(&cfg, records))
}

/// Metrics rows of a `metrics.csv` file.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io(path, e))).collect()
}

/// Timing rows of a `timings.csv` file.
pub fn read_timings_csv(path: &Path) -> Result<Vec<Timing>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io(path, e))).collect()
}
