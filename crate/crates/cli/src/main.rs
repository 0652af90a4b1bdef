mod grid_io;
mod report;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use briot::problem::{load_problem, Task};
use clap::{Args, Parser, Subcommand};

use crate::grid_io::{parse_grid, GridSpec};
use crate::report::RunReport;
use crate::tasks::{ensure_dir, exit_code, run_task, Opts};

/// Solve, verify and classify singular first-order PDEs t u_t = F(t, x, u, u_x).
#[derive(Parser, Debug)]
#[command(name = "briot", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Base solution u₀ on the output grid
    Solve(Common),
    /// u₀ + U(ψ) for the ψ given by --psi or the file's family task
    Family(Common),
    /// Growth class of a candidate, a grid file, or u₀
    Classify(Common),
    /// Residual of a candidate against --tol
    Verify(Common),
    /// Every task listed in the problem file, in order
    Run(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// problem file (TOML)
    problem: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// output grid, NTxNX
    #[arg(long, default_value = "16x16", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 1e-3)]
    tmin: f64,
    #[arg(long, default_value_t = 0.2)]
    tmax: f64,
    /// circle radii of the output grid
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2")]
    radii: Vec<f64>,
    /// Taylor coefficients of ψ, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    psi: Option<Vec<f64>>,
    /// candidate solution, an expression in t and x
    #[arg(long, allow_hyphen_values = true)]
    candidate: Option<String>,
    /// classify a solution grid written by solve or family
    #[arg(long)]
    grid_file: Option<PathBuf>,
    /// classify candidates without requiring them to solve the equation
    #[arg(long)]
    verify_only: bool,
    /// seed for the randomly placed residual checks
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.cmd {
        Cmd::Solve(c) => (Some("solve"), c),
        Cmd::Family(c) => (Some("family"), c),
        Cmd::Classify(c) => (Some("classify"), c),
        Cmd::Verify(c) => (Some("verify"), c),
        Cmd::Run(c) => (None, c),
    };
    ExitCode::from(run(kind, c) as u8)
}

fn run(kind: Option<&str>, c: Common) -> i32 {
    let start = Instant::now();
    if !(c.tmin > 0.0 && c.tmin < c.tmax) || c.radii.iter().any(|r| !(*r > 0.0)) {
        eprintln!("error: need 0 < tmin < tmax and positive radii");
        return 2;
    }
    let problem = match load_problem(&c.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    // tasks keep their position in the file, which names their outputs
    let tasks: Vec<(usize, Task)> = match kind {
        None => problem.tasks.iter().cloned().enumerate().collect(),
        Some(k) => {
            let found = problem.tasks.iter().cloned().enumerate().find(|(_, t)| t.kind() == k);
            match (k, found) {
                (_, Some(t)) => vec![t],
                ("solve", None) => vec![(0, Task::Solve { id: None })],
                ("family", None) => vec![(0, Task::Family { id: None, psi: Vec::new() })],
                ("classify", None) => vec![(0, Task::Classify { id: None, candidate: None })],
                (_, None) => match &c.candidate {
                    Some(cand) => vec![(0, Task::Verify { id: None, candidate: cand.clone() })],
                    None => {
                        eprintln!("error: verify needs --candidate or a verify task");
                        return 2;
                    }
                },
            }
        }
    };
    if let Err(e) = ensure_dir(&c.out_dir) {
        eprintln!("error: {e}");
        return 2;
    }
    let opts = Opts {
        tol: c.tol,
        grid: GridSpec { n_t: c.grid.0, n_x: c.grid.1, t_min: c.tmin, t_max: c.tmax, radii: c.radii.clone() },
        psi: c.psi.clone(),
        verify_only: c.verify_only,
        seed: c.seed,
        out_dir: c.out_dir.clone(),
        candidate: c.candidate.clone(),
        grid_file: c.grid_file.clone(),
    };
    let mut reports = Vec::new();
    for (i, t) in &tasks {
        let r = run_task(&problem, t, *i, &opts);
        let files = r.files.iter().map(|f| opts.out_dir.join(f).display().to_string()).collect::<Vec<_>>().join(" ");
        println!("{} {} {} {}", r.id, r.kind, r.status, files);
        if let Some(e) = &r.error {
            eprintln!("{}: {e}", r.id);
        }
        reports.push(r);
    }
    let code = reports.iter().map(|r| r.exit_code).find(|&c| c != 0).unwrap_or(0);
    let report = RunReport {
        problem: c.problem.display().to_string(),
        spec_summary: problem.summary.clone(),
        lambda00: problem.lambda00().map(|l| [l.re, l.im]),
        conditions: Some(problem.conditions.clone()),
        tasks: reports,
        elapsed_ms: start.elapsed().as_millis(),
    };
    let path = c.out_dir.join("report.json");
    match serde_json::to_string_pretty(&report) {
        Ok(s) => {
            if let Err(e) = std::fs::write(&path, s) {
                eprintln!("error: {}: {e}", path.display());
                return 2;
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    code
}
