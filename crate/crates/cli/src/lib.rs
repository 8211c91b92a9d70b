//! Batch front end: reads a run configuration, executes the convergence study
//! and writes plot-ready CSV plus a JSON mirror with solver diagnostics.
//!
//! Exit codes: 0 on success, 1 when a solve or a property check fails, 2 for
//! configuration and I/O problems.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use fhd_core::verify::{run_convergence_study, run_property_battery, BatteryOptions, StudySettings};
use fhd_core::{ManufacturedCase, StudyReport};

pub use config::{parse_config, ConfigError, RunConfig};
pub use report::{format_sig, study_csv, study_json, CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fhd", version, about = "Mixed FEM solver and verification harness for stationary ferrohydrodynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the convergence study described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Solve the levels concurrently (results are identical).
        #[arg(long)]
        parallel_levels: bool,
    },
    /// Run the property battery.
    Check {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the study and print the CSV table to stdout.
    Table {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Reads and parses a config file; the error message is ready for stderr.
pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn case_for(cfg: &RunConfig) -> ManufacturedCase {
    let base = match cfg.study.as_deref() {
        Some("2d-l0") => ManufacturedCase::case_2d_l0(),
        Some("2d-l1") => ManufacturedCase::case_2d_l1(),
        _ => ManufacturedCase::for_pair(cfg.pair),
    };
    base.with_params(cfg.params)
}

pub fn execute_study(cfg: &RunConfig, parallel: bool) -> fhd_core::error::Result<StudyReport> {
    let settings = StudySettings {
        picard_iters: cfg.picard_iters,
        oseen_iters: cfg.oseen_iters,
        quad_bump: cfg.quad_bump,
        parallel,
    };
    run_convergence_study(&case_for(cfg), cfg.pair, &cfg.levels, &settings)
}

fn create(path: &Path) -> Result<File, String> {
    File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_run(cfg: RunConfig, parallel: bool) -> i32 {
    // open the outputs first so an unwritable path fails before the solve
    let csv_file = match cfg.out_csv.as_deref().map(create).transpose() {
        Ok(f) => f,
        Err(e) => return config_error(&e),
    };
    let json_file = match cfg.out_json.as_deref().map(create).transpose() {
        Ok(f) => f,
        Err(e) => return config_error(&e),
    };
    let report = match execute_study(&cfg, parallel) {
        Ok(r) => r,
        Err(e) => return config_error(&e.to_string()),
    };
    let csv = study_csv(&report);
    let written = match csv_file {
        Some(mut f) => f.write_all(csv.as_bytes()),
        None => std::io::stdout().write_all(csv.as_bytes()),
    };
    let written = written.and_then(|_| match json_file {
        Some(mut f) => f.write_all(study_json(&cfg, &report).as_bytes()),
        None => Ok(()),
    });
    if let Err(e) = written {
        return config_error(&format!("writing report: {e}"));
    }
    if let Some((n, msg)) = &report.failed {
        eprintln!("solve failed at N={n}: {msg}");
        return EXIT_FAILURE;
    }
    EXIT_OK
}

fn cmd_check(seed: u64) -> i32 {
    let results = match run_property_battery(&BatteryOptions::new(seed)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("property battery aborted: {e}");
            return EXIT_FAILURE;
        }
    };
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    match results.iter().find(|r| !r.passed) {
        Some(r) => {
            eprintln!("first failing property: {}", r.name);
            EXIT_FAILURE
        }
        None => EXIT_OK,
    }
}

fn config_error(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run {
            config,
            out_csv,
            out_json,
            parallel_levels,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            cfg.out_csv = out_csv.or(cfg.out_csv);
            cfg.out_json = out_json.or(cfg.out_json);
            cmd_run(cfg, parallel_levels)
        }
        Command::Check { seed } => cmd_check(seed),
        Command::Table { config } => match load_config(&config) {
            Ok(mut cfg) => {
                cfg.out_csv = None;
                cfg.out_json = None;
                cmd_run(cfg, false)
            }
            Err(e) => config_error(&e),
        },
    }
}
