use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lvflex::ac::{default_delta_grid, detect_congestion, solve_ac_pf, tighten_and_resolve, AcOptions, MilpStatus};
use lvflex::harness::{emit_report, load_table, run_sweep, worker_count, SweepConfig, WORKERS_ENV};
use lvflex::linpf::{Limits, ThermalPolygon, Tightening, DEFAULT_POLYGON_SIDES};
use lvflex::milp::{
    build_milp, export_lp, preset_by_name, solve_milp, verify_schedule, Contract, MilpOutcome, ModelSpec, Schedule,
    SolveOptions,
};
use lvflex::net::{load_feeder, save_feeder, Network};
use lvflex::synth::{generate_scenario, load_profiles, ScenarioParams};
use serde_json::json;

const FEEDER_FILE: &str = "feeder.json";
const PROFILES_FILE: &str = "profiles.csv";
const SCENARIO_FILE: &str = "scenario.json";

/// Demand reduction scheduling for unbalanced low-voltage feeders.
#[derive(Parser)]
#[command(name = "lvflex", version, after_help = worker_help())]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn worker_help() -> String {
    format!("Sweep workers: set {WORKERS_ENV} (default: available cores).")
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a congested feeder and its forecast profiles.
    Gen {
        /// Output directory for feeder.json, profiles.csv and scenario.json.
        #[arg(long)]
        out: PathBuf,
        /// Scenario parameters (TOML); flags below override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        severity: Option<f64>,
    },
    /// Schedule one feeder for one modality.
    Solve {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        /// simple, single, double, double_delta or triple_delta.
        #[arg(long)]
        modality: String,
        /// Solve at this fixed tightening only, instead of the tightening loop.
        #[arg(long)]
        delta: Option<f64>,
        /// Write the model in LP format, at --delta or at zero tightening.
        #[arg(long)]
        export_lp: Option<PathBuf>,
        /// Write the schedule as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 15)]
        step_minutes: u32,
        #[arg(long, default_value_t = ScenarioParams::default().p_gtd_kw)]
        p_gtd_kw: f64,
        /// Seconds for the whole solve.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        #[arg(long, default_value_t = DEFAULT_POLYGON_SIDES)]
        polygon_sides: usize,
    },
    /// AC and comfort check of a schedule file; exits 2 on any violation.
    Verify {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        /// Also check the comfort rows of this modality.
        #[arg(long)]
        modality: Option<String>,
        #[arg(long, default_value_t = 15)]
        step_minutes: u32,
        #[arg(long, default_value_t = ScenarioParams::default().p_gtd_kw)]
        p_gtd_kw: f64,
    },
    /// Run a cohort sweep and write its report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides out_dir of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite the report of a sweep directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Gen {
            out,
            params,
            users,
            seed,
            severity,
        } => gen(&out, params.as_deref(), users, seed, severity),
        Cmd::Solve {
            feeder,
            profiles,
            modality,
            delta,
            export_lp: lp_path,
            out,
            step_minutes,
            p_gtd_kw,
            time_limit,
            polygon_sides,
        } => {
            let net = Network::new(load_feeder(&feeder)?)?;
            let demand = load_profiles(&profiles, step_minutes)?.to_demand(&net)?;
            let limits = Limits::from_network(&net, demand.horizon());
            let contracts = contracts(&net, &modality, step_minutes, p_gtd_kw)?;
            let polygon = ThermalPolygon::new(polygon_sides)?;
            let opts = SolveOptions {
                time_limit: Some(Duration::from_secs_f64(time_limit)),
                ..Default::default()
            };
            if let Some(path) = &lp_path {
                let d = delta.unwrap_or(0.0);
                let spec = ModelSpec {
                    tightening: Tightening { voltage: d, thermal: d },
                    polygon,
                };
                let model = build_milp(&net, &demand, &contracts, &limits, spec)?;
                write(path, &export_lp(&model))?;
            }
            let (schedule, report, ok) = match delta {
                Some(d) => {
                    let spec = ModelSpec {
                        tightening: Tightening { voltage: d, thermal: d },
                        polygon,
                    };
                    let model = build_milp(&net, &demand, &contracts, &limits, spec)?;
                    let res = solve_milp(&model, &opts)?;
                    match res.outcome {
                        MilpOutcome::Optimal(s) => {
                            let sol = solve_ac_pf(&net, &s.demand, AcOptions::default())?;
                            let cong = detect_congestion(&net, &sol, &limits)?;
                            let ok = cong.is_empty();
                            let report = json!({
                                "delta": d, "milp": "optimal", "objective": s.objective,
                                "nodes": res.stats.nodes, "ac_feasible": ok, "congestion": cong,
                            });
                            (Some(s), report, ok)
                        }
                        MilpOutcome::Infeasible(inf) => (
                            None,
                            json!({"delta": d, "milp": "infeasible", "certificate": inf}),
                            false,
                        ),
                        MilpOutcome::Timeout { .. } => (None, json!({"delta": d, "milp": "timeout"}), false),
                    }
                }
                None => {
                    let grid = default_delta_grid();
                    let res = tighten_and_resolve(&net, &demand, &contracts, &limits, &grid, polygon, &opts)?;
                    let ok = res.delta_star.is_some();
                    let milp = res.trace.first().map_or(MilpStatus::Skipped, |s| s.milp);
                    let report = json!({
                        "delta_star": res.delta_star,
                        "milp_at_zero": milp,
                        "objective": res.schedule.as_ref().map(|s| s.objective),
                        "voltage_tightened": res.voltage_tightened,
                        "thermal_tightened": res.thermal_tightened,
                        "trace": res.trace,
                    });
                    (res.schedule, report, ok)
                }
            };
            if let (Some(path), Some(s)) = (&out, &schedule) {
                write(path, &serde_json::to_string(s)?)?;
            }
            emit(&serde_json::to_string_pretty(&report)?);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Verify {
            feeder,
            schedule,
            modality,
            step_minutes,
            p_gtd_kw,
        } => {
            let net = Network::new(load_feeder(&feeder)?)?;
            let text = fs::read_to_string(&schedule).with_context(|| schedule.display().to_string())?;
            let s: Schedule = serde_json::from_str(&text).with_context(|| schedule.display().to_string())?;
            let horizon = s.demand.horizon();
            let comfort = match &modality {
                Some(m) => verify_schedule(&s, &contracts(&net, m, step_minutes, p_gtd_kw)?, horizon),
                None => Vec::new(),
            };
            let limits = Limits::from_network(&net, horizon);
            let sol = solve_ac_pf(&net, &s.demand, AcOptions::default())?;
            let cong = detect_congestion(&net, &sol, &limits)?;
            let ok = cong.is_empty() && comfort.is_empty();
            emit(&serde_json::to_string_pretty(
                &json!({"congestion": cong, "comfort_violations": comfort}),
            )?);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Sweep { config, out } => {
            let mut cfg = SweepConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o.to_string_lossy().into_owned();
            }
            let dir = PathBuf::from(&cfg.out_dir);
            let workers = worker_count();
            eprintln!("sweep {} into {} on {workers} workers", cfg.hash(), dir.display());
            let table = run_sweep(&cfg, &dir, workers)?;
            emit_report(&table, &dir)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Report { input, out } => {
            emit_report(&load_table(&input)?, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn gen(
    out: &Path,
    params: Option<&Path>,
    users: Option<usize>,
    seed: Option<u64>,
    severity: Option<f64>,
) -> Result<ExitCode> {
    let mut p = match params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
            toml::from_str(&text).with_context(|| path.display().to_string())?
        }
        None => ScenarioParams::default(),
    };
    p.n_users = users.unwrap_or(p.n_users);
    p.seed = seed.unwrap_or(p.seed);
    p.congestion_severity = severity.unwrap_or(p.congestion_severity);
    let sc = generate_scenario(&p)?;
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    save_feeder(&sc.feeder, out.join(FEEDER_FILE))?;
    sc.profiles.save(out.join(PROFILES_FILE))?;
    let meta = json!({"params": sc.params, "scale": sc.scale});
    write(&out.join(SCENARIO_FILE), &serde_json::to_string_pretty(&meta)?)?;
    emit(&out.display().to_string());
    Ok(ExitCode::SUCCESS)
}

fn contracts(net: &Network, modality: &str, step_minutes: u32, p_gtd_kw: f64) -> Result<Vec<Contract>> {
    let preset = preset_by_name(modality, step_minutes)?;
    if !(p_gtd_kw > 0.0) {
        bail!("guaranteed power must be positive");
    }
    Ok(net
        .feeder
        .users
        .iter()
        .map(|u| Contract::new(&u.user_id, p_gtd_kw, &preset))
        .collect())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| path.display().to_string())
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
