// Copyright (c) 2026 The fluidcc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! `fluidcc` command-line interface.
//!
//! Exit codes: 0 success, 1 failed sweep points or I/O trouble, 2 bad
//! configuration or parameters, 3 numerical abort.

mod grid;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluidcc::analysis::{analyze, AnalysisKind};
use fluidcc::config::load_scenario;
use fluidcc::metrics::MetricsReport;
use fluidcc::sim::scenario_hash;
use fluidcc::trace::format_number;
use fluidcc::{simulate, ConfigError, Error, Scenario, SolverError};
use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{parse_grid, GridPoint, AXIS_COLUMNS};

#[derive(Parser)]
#[command(
    name = "fluidcc",
    version,
    about = "Fluid-model simulator for BBR, Reno and CUBIC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the solver settings of a scenario file.
#[derive(clap::Args, Clone, Copy)]
struct SolverFlags {
    /// Integration step in seconds.
    #[arg(long)]
    step: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Length of the metric window at the end of the run, in seconds.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, metrics.json and scenario-echo.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Run every point of a grid and write summary.csv.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of points simulated concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Equilibrium and stability of a reduced model, printed as JSON.
    Analyze {
        /// bbr1-deep, bbr1-shallow or bbr2.
        #[arg(long)]
        cca: String,
        #[arg(long, short = 'n')]
        n: usize,
        /// Bottleneck capacity (any consistent unit).
        #[arg(long, short = 'c')]
        capacity: f64,
        /// Round-trip propagation delay.
        #[arg(long, short = 'd', default_value_t = 1.0)]
        delay: f64,
    },
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = std::env::var("FLUIDCC_SEED").ok();
    if let Some(s) = &seed {
        eprintln!("FLUIDCC_SEED={s} (the engine is deterministic; the seed is not used)");
    }
    let code = match cli.command {
        Command::Simulate {
            scenario,
            out,
            solver,
        } => cmd_simulate(&scenario, &out, solver, seed),
        Command::Sweep {
            grid,
            out,
            parallel,
            solver,
        } => cmd_sweep(&grid, &out, parallel, solver),
        Command::Analyze {
            cca,
            n,
            capacity,
            delay,
        } => cmd_analyze(&cca, n, capacity, delay),
    };
    ExitCode::from(code)
}

fn apply(flags: SolverFlags, s: &mut Scenario) -> Result<(), ConfigError> {
    if let Some(h) = flags.step {
        s.solver.step = h;
    }
    if let Some(d) = flags.duration {
        if flags.window.is_none() {
            s.solver.window = s.solver.window.min(d);
        }
        s.solver.duration = d;
        s.solver.warmup = d - s.solver.window;
    }
    if let Some(w) = flags.window {
        s.solver.window = w;
        s.solver.warmup = s.solver.duration - w;
    }
    s.validate()
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Solver(SolverError::StepTooLarge { .. }) => EXIT_CONFIG,
        Error::Solver(SolverError::Settings(_)) => EXIT_CONFIG,
        Error::Solver(_) => EXIT_NUMERIC,
        Error::Metrics(_) => EXIT_FAILED,
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    scenario_hash: String,
    seed: Option<String>,
    scenario: &'a Scenario,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), u8> {
    fs::write(path, bytes).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_FAILED
    })
}

fn cmd_simulate(path: &Path, out: &Path, flags: SolverFlags, seed: Option<String>) -> u8 {
    let mut scenario = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = apply(flags, &mut scenario) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let result = simulate(&scenario).and_then(|trace| {
        let m = MetricsReport::for_scenario(&trace, &scenario)?;
        Ok((trace, m))
    });
    let (trace, metrics) = match result {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILED;
    }
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).expect("writing to memory");
    let echo = Echo {
        scenario_hash: scenario_hash(&scenario),
        seed,
        scenario: &scenario,
    };
    let files = [
        ("trace.csv", csv),
        ("metrics.json", json(&metrics)),
        ("scenario-echo.json", json(&echo)),
    ];
    for (name, bytes) in files {
        if let Err(code) = write_file(&out.join(name), &bytes) {
            return code;
        }
    }
    0
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn summary_row(point: &GridPoint) -> (String, bool) {
    let axes = format!(
        "{},{},{},{},{}",
        format_number(point.buffer_bdp),
        format_number(point.delay_ms),
        point.senders,
        point.mix,
        match point.discipline {
            fluidcc::Discipline::DropTail => "droptail",
            fluidcc::Discipline::Red => "red",
        }
    );
    let result = match &point.scenario {
        Ok(s) => simulate(s).and_then(|t| Ok(MetricsReport::for_scenario(&t, s)?)),
        Err(e) => Err(Error::Config(e.clone())),
    };
    match result {
        Ok(m) => (
            format!(
                "{axes},ok,{},{},{},{},{}",
                format_number(m.jain_fairness),
                format_number(m.loss_rate),
                format_number(m.mean_queue_share),
                format_number(m.utilization),
                format_number(m.jitter)
            ),
            true,
        ),
        Err(e) => {
            // keep the row on one CSV field
            let msg = e.to_string().replace([',', '\n', '"'], " ");
            (format!("{axes},error: {msg},,,,,"), false)
        }
    }
}

fn cmd_sweep(path: &Path, out: &Path, parallel: usize, flags: SolverFlags) -> u8 {
    let source = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let points = match parse_grid(&source).and_then(|g| g.points()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let points: Vec<GridPoint> = points
        .into_iter()
        .map(|mut p| {
            if let Ok(s) = &mut p.scenario {
                if let Err(e) = apply(flags, s) {
                    p.scenario = Err(e);
                }
            }
            p
        })
        .collect();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILED;
        }
    };
    // collect keeps grid order whatever the scheduling
    let rows: Vec<(String, bool)> = pool.install(|| points.par_iter().map(summary_row).collect());

    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILED;
    }
    let mut csv = Vec::new();
    writeln!(
        csv,
        "{},status,jain_fairness,loss_rate,mean_queue_share,utilization,jitter",
        AXIS_COLUMNS.join(",")
    )
    .expect("writing to memory");
    for (row, _) in &rows {
        writeln!(csv, "{row}").expect("writing to memory");
    }
    if let Err(code) = write_file(&out.join("summary.csv"), &csv) {
        return code;
    }
    let failed = rows.iter().filter(|(_, ok)| !ok).count();
    if failed > 0 {
        eprintln!("{failed} of {} points failed", rows.len());
        return EXIT_FAILED;
    }
    0
}

fn cmd_analyze(cca: &str, n: usize, capacity: f64, delay: f64) -> u8 {
    let report = cca
        .parse::<AnalysisKind>()
        .and_then(|kind| analyze(kind, n, capacity, delay));
    match report {
        Ok(r) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(&json(&r));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
