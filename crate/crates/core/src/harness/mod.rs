//! Cohort sweeps over generated feeders and modalities, and the report
//! files derived from them.

mod config;
mod report;
mod sweep;

use thiserror::Error;

pub use config::{SweepConfig, WORKERS_ENV};
pub use report::{
    emit_report, load_table, read_metrics_csv, read_timings_csv, summarize, tightening_curve, CurvePoint,
    ModalitySummary, Quartiles, Summary, CURVE_CSV, METRICS_CSV, SUMMARY_JSON, TIMINGS_CSV,
};
pub use sweep::{
    participation, read_journal, row_from_result, run_sweep, worker_count, CellRecord, CellStatus, MetricsRow,
    MetricsTable, Timing, CONFIG_COPY, JOURNAL,
};

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}
