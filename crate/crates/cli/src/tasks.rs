use std::path::{Path, PathBuf};
use std::time::Instant;

use briot::classifier::{classify_with, ClassifyConfig};
use briot::field::{residual, ResidualGrid};
use briot::nonlinear::{certify, recover_psi, solve_full, solve_u0};
use briot::problem::{parse_candidate, psi_germ, Problem, Task};
use briot::solution::{Exponent, SolutionHandle};
use briot::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid_io::{read_grid, write_grid, write_pairs, GridSpec};
use crate::report::TaskReport;

#[derive(Debug, Clone)]
pub struct Opts {
    pub tol: f64,
    pub grid: GridSpec,
    pub psi: Option<Vec<f64>>,
    pub verify_only: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub candidate: Option<String>,
    pub grid_file: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Problem(_)
        | Error::SpecInvalid { .. }
        | Error::Syntax { .. }
        | Error::UnknownIdentifier { .. }
        | Error::NonLiteralExponent { .. }
        | Error::Config(_)
        | Error::Domain(_)
        | Error::NonIntegrableWeight(_)
        | Error::Truncation(_) => 2,
        Error::NonMember(_) => 3,
        _ => 4,
    }
}

fn file(opts: &Opts, name: String, rep: &mut TaskReport) -> PathBuf {
    rep.files.push(name.clone());
    opts.out_dir.join(name)
}

/// The output grid, pulled inside the handle's domain if needed.
fn fitted_grid(g: &GridSpec, u: &SolutionHandle, notes: &mut Vec<String>) -> GridSpec {
    let mut g = g.clone();
    if g.t_max > u.t_max {
        notes.push(format!("grid t_max lowered from {} to the solution's {}", g.t_max, u.t_max));
        g.t_max = u.t_max;
        g.t_min = g.t_min.min(0.5 * g.t_max);
    }
    let r_max = 0.9 * u.x_radius;
    for r in g.radii.iter_mut().filter(|r| **r > r_max) {
        notes.push(format!("radius {r} lowered to {r_max}"));
        *r = r_max;
    }
    g
}

pub fn run_task(p: &Problem, task: &Task, index: usize, opts: &Opts) -> TaskReport {
    let start = Instant::now();
    let mut rep = TaskReport { id: task.id(index), kind: task.kind().to_string(), ..Default::default() };
    let out = match task {
        Task::Solve { .. } => solve(p, opts, &mut rep),
        Task::Family { psi, .. } => family(p, opts.psi.as_deref().unwrap_or(psi), opts, &mut rep),
        Task::Classify { candidate, .. } => classify(p, opts.candidate.as_ref().or(candidate.as_ref()), opts, &mut rep),
        Task::Verify { candidate, .. } => verify(p, opts.candidate.as_ref().unwrap_or(candidate), opts, &mut rep),
    };
    match out {
        Ok(code) => {
            rep.exit_code = code;
            rep.status = if code == 0 { "ok" } else { "failed" }.into();
        }
        Err(e) => {
            rep.exit_code = exit_code(&e);
            rep.status = "error".into();
            rep.error = Some(e.to_string());
        }
    }
    rep.elapsed_ms = start.elapsed().as_millis();
    rep
}

fn certified(rep: &mut TaskReport, res: f64, tol: f64) -> i32 {
    rep.residual_sup = Some(res);
    rep.tolerance = Some(tol);
    rep.passed = Some(res <= tol);
    if res <= tol {
        0
    } else {
        3
    }
}

fn solve(p: &Problem, opts: &Opts, rep: &mut TaskReport) -> Result<i32> {
    let u0 = solve_u0(&p.spec, &p.picard)?;
    let mut diag = u0.u.diagnostics.clone();
    let g = fitted_grid(&opts.grid, &u0.u, &mut diag.notes);
    write_grid(&file(opts, format!("{}.csv", rep.id), rep), &g, &u0.u)?;
    let res = certify(&p.spec, &u0.u)?.residual_sup;
    rep.diagnostics = Some(diag);
    Ok(certified(rep, res, u0.u.tolerance.max(1e-12)))
}

fn family(p: &Problem, psi: &[f64], opts: &Opts, rep: &mut TaskReport) -> Result<i32> {
    let germ = psi_germ(psi);
    let full = solve_full(&p.spec, &germ, &p.picard)?;
    let mut diag = full.u.diagnostics.clone();
    let g = fitted_grid(&opts.grid, &full.u, &mut diag.notes);
    write_grid(&file(opts, format!("{}.csv", rep.id), rep), &g, &full.u)?;
    let curve = &full.member.limit_error_curve;
    write_pairs(&file(opts, format!("{}-limit.csv", rep.id), rep), ["t_k", "sup error"], curve)?;
    rep.limit_error_final = curve.last().map(|c| c.1);
    rep.psi = Some(psi.to_vec());
    if germ.is_zero() {
        rep.recovered_psi = Some(Vec::new());
        rep.psi_round_trip_error = Some(0.0);
    } else {
        let rec = recover_psi(&full.spec0, &full.member.u)?;
        let n = rec.germ.coeffs.len().max(psi.len()).min(16);
        let err = (0..n).map(|k| (rec.germ.coeff(k) - germ.coeff(k)).norm()).fold(0.0, f64::max);
        rep.recovered_psi = Some((0..n).map(|k| [rec.germ.coeff(k).re, rec.germ.coeff(k).im]).collect());
        rep.psi_round_trip_error = Some(err);
        diag.notes.extend(rec.diagnostics.notes);
    }
    let res = certify(&p.spec, &full.u)?.residual_sup;
    rep.diagnostics = Some(diag);
    Ok(certified(rep, res, full.u.tolerance.max(1e-12)))
}

/// Residual of a candidate on the output grid plus `n` seeded random nodes.
fn candidate_residual(p: &Problem, u: &SolutionHandle, opts: &Opts, n: usize) -> Result<f64> {
    let g = &opts.grid;
    let grid = ResidualGrid {
        ts: g.ts(),
        xs: g.radii.iter().flat_map(|&r| briot::germ::circle_nodes(g.n_x, r, C64::new(0.0, 0.0))).collect(),
    };
    let mut sup = residual(&p.spec, u, &grid)?.residual_sup;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r_max = g.radii.iter().cloned().fold(0.0, f64::max);
    for _ in 0..n {
        let t = (g.t_min.ln() + rng.gen::<f64>() * (g.t_max.ln() - g.t_min.ln())).exp();
        let x = C64::from_polar(r_max * rng.gen::<f64>().sqrt(), std::f64::consts::TAU * rng.gen::<f64>());
        sup = sup.max(residual(&p.spec, u, &ResidualGrid { ts: vec![t], xs: vec![x] })?.residual_sup);
    }
    Ok(sup)
}

fn verify(p: &Problem, candidate: &str, opts: &Opts, rep: &mut TaskReport) -> Result<i32> {
    let f = parse_candidate(candidate, &p.spec)?;
    let u = SolutionHandle::from_field(&f, Exponent::Exact(0.0));
    let res = candidate_residual(p, &u, opts, 64)?;
    Ok(certified(rep, res, opts.tol))
}

fn classify(p: &Problem, candidate: Option<&String>, opts: &Opts, rep: &mut TaskReport) -> Result<i32> {
    let mut cfg = ClassifyConfig::default();
    let u = match (&opts.grid_file, candidate) {
        (Some(path), _) => {
            let (u, t_lo) = read_grid(path)?;
            cfg.t_lo = t_lo;
            u
        }
        (None, Some(c)) => {
            let f = parse_candidate(c, &p.spec)?;
            let u = SolutionHandle::from_field(&f, Exponent::Exact(0.0));
            let res = candidate_residual(p, &u, opts, 64)?;
            rep.residual_sup = Some(res);
            rep.tolerance = Some(opts.tol);
            rep.passed = Some(res <= opts.tol);
            if res > opts.tol && !opts.verify_only {
                rep.error = Some(format!("candidate is not a solution: residual {res:e} > tol {:e}", opts.tol));
                return Ok(3);
            }
            u
        }
        (None, None) => solve_u0(&p.spec, &p.picard)?.u,
    };
    let growth = classify_with(&u, &cfg);
    let path = file(opts, format!("{}.json", rep.id), rep);
    std::fs::write(&path, serde_json::to_string_pretty(&growth).map_err(|e| Error::Problem(e.to_string()))?)
        .map_err(|e| Error::Problem(format!("{}: {e}", path.display())))?;
    rep.growth = Some(growth);
    Ok(0)
}

pub fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Problem(format!("{}: {e}", p.display())))
}
