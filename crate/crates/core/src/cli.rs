//! Command-line front end: `solve`, `oracle`, `verify` and `study`.
//!
//! Exit codes: 0 success, 1 invalid input, 2 non-convergence, 3 failed
//! thresholds.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::experiments::{self, StudyError, StudySpec};
use crate::grid::{CellField, Grid, GridFunction};
use crate::io;
use crate::lagrange::{self, ContactTolerances, Thresholds};
use crate::oracle::{self, AdmmOptions, OracleError};
use crate::penalty::{self, PenaltyParams};
use crate::problem::{self, Problem, SampledProblem};
use crate::solver::{self, ContinuationResult, PenalizedSolution, SolveError, SolveOptions};

pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gradvi", version, about = "Penalty and ADMM solvers for variational inequalities with gradient and obstacle constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Penalized continuation solve.
    Solve(SolveArgs),
    /// ADMM solve of the variational inequality.
    Oracle(OracleArgs),
    /// Complementarity checks on a fresh or stored solve.
    Verify(VerifyArgs),
    /// Run a study described by a JSON file.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Problem description (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Points per axis (default 2001 in 1D, 65 in 2D).
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PenaltyArgs {
    /// Comma-separated decreasing eps values.
    #[arg(long, value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    /// Growth exponent of k_eps (default 4).
    #[arg(long)]
    pub r: Option<f64>,
    /// Residual tolerance of Newton.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Newton iteration cap per eps.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Accept eps below h^2.
    #[arg(long)]
    pub allow_unresolved_eps: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Primal and dual residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// ADMM iteration cap.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial ADMM penalty.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Read u_eps.csv, khat.csv and summary.json of an earlier solve
    /// instead of solving afresh.
    #[arg(long, conflicts_with_all = ["eps_schedule", "r", "tol", "max_iters", "n"])]
    pub from: Option<PathBuf>,
    /// Lower bound on lambda (default 1 - 1e-12).
    #[arg(long)]
    pub min_lambda: Option<f64>,
    /// Bound on the L1 norm of (lambda - 1)(|grad u| - g) (default 1e-2).
    #[arg(long)]
    pub comp_grad: Option<f64>,
    /// Bound on the obstacle complementarity product (default 1e-3).
    #[arg(long)]
    pub comp_obs: Option<f64>,
    /// Bound on the L2 residual of the multiplier equation (default 5e-2).
    #[arg(long)]
    pub eq_residual: Option<f64>,
    /// Bound on the contact-set identity for -lap u - f (default 0.1).
    #[arg(long)]
    pub sign_identity: Option<f64>,
    /// Scale lambda by this factor before checking (debugging aid).
    #[arg(long, hide = true)]
    pub corrupt_lambda: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyArgs {
    /// Study description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated grid resolutions.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Overrides the spec schedule.
    #[arg(long, value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    /// Overrides the spec exponent.
    #[arg(long)]
    pub r: Option<f64>,
    /// Overrides the Newton residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Threads for independent rows.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed of the VI check trials.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn invalid(e: impl Display) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: e.to_string(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    io::write_text(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    io::write_json(path, value).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn manifest(out: &Path, command: &str, config: serde_json::Value, outputs: &[&str]) -> Result<(), Failure> {
    let m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": outputs,
    });
    write_json(&out.join("manifest.json"), &m)
}

struct Loaded {
    problem: Problem,
    grid: Grid,
    data: SampledProblem,
    n: usize,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let problem = Problem::from_json(&read(&common.problem)?).map_err(invalid)?;
    let n = common.n.unwrap_or(if problem.domain.dim() == 1 { 2001 } else { 65 });
    let rep = problem::validate_data(&problem, n.min(401)).map_err(invalid)?;
    let failure = rep.failures().next().map(|c| {
        format!(
            "hypothesis {} fails (worst {:e} at {:?})",
            c.hypothesis.describe(),
            c.worst,
            c.witness
        )
    });
    if let Some(msg) = failure {
        return Err(invalid(msg));
    }
    let grid = Grid::uniform(problem.domain.clone(), n).map_err(invalid)?;
    let data = problem.sample(&grid).map_err(invalid)?;
    Ok(Loaded { problem, grid, data, n })
}

fn solve_options(p: &PenaltyArgs) -> SolveOptions {
    let mut o = SolveOptions {
        allow_unresolved_eps: p.allow_unresolved_eps,
        ..SolveOptions::default()
    };
    if let Some(t) = p.tol {
        o.residual_tol = t;
    }
    if let Some(m) = p.max_iters {
        o.max_newton_iters = m;
    }
    o
}

fn schedule(p: &PenaltyArgs) -> Vec<f64> {
    p.eps_schedule.clone().unwrap_or_else(solver::default_schedule)
}

fn continuation(l: &Loaded, p: &PenaltyArgs) -> Result<ContinuationResult, Failure> {
    let r = p.r.unwrap_or(penalty::DEFAULT_R);
    let opts = SolveOptions {
        skip_nonconverged: true,
        ..solve_options(p)
    };
    solver::continuation_solve(&l.grid, &l.data, &schedule(p), r, &opts).map_err(|e| match e {
        SolveError::NonConvergence(_) => Failure {
            code: EXIT_NONCONVERGED,
            message: e.to_string(),
        },
        other => invalid(other),
    })
}

fn finest(cr: &ContinuationResult) -> &PenalizedSolution {
    cr.entries
        .iter()
        .filter(|e| e.converged)
        .min_by(|a, b| a.eps.total_cmp(&b.eps))
        .unwrap_or_else(|| cr.entries.last().expect("non-empty schedule"))
}

fn write_solution(out: &Path, grid: &Grid, sol: &PenalizedSolution) -> Result<(), Failure> {
    write(&out.join("u_eps.csv"), &io::node_csv(grid, &[("u", &sol.u.0)]))?;
    write(&out.join("khat.csv"), &io::cell_csv(grid, &[("khat", &sol.khat.0)]))?;
    write(&out.join("theta.csv"), &io::node_csv(grid, &[("theta", &sol.theta.0)]))
}

fn tolerances(l: &Loaded, eps: f64) -> ContactTolerances {
    let gmax = l.data.g_cells.as_ref().map_or(1.0, |g| g.max());
    ContactTolerances::for_eps(eps, gmax)
}

pub fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let l = load(&a.common)?;
    let out = &a.common.out;
    let cr = continuation(&l, &a.penalty)?;
    let sol = finest(&cr);
    write_solution(out, &l.grid, sol)?;
    write(&out.join("monitors.csv"), &cr.monitors_csv())?;
    let lf = lagrange::fields_from(&l.grid, &l.data, sol, tolerances(&l, sol.eps));
    let comp = lagrange::complementarity_report(&l.grid, &l.data, &lf);
    let all = cr.entries.iter().all(|e| e.converged);
    let summary = json!({
        "eps": sol.eps,
        "r": cr.r,
        "n": l.n,
        "converged": all,
        "newton_iters": cr.entries.iter().map(|e| e.newton_iters).collect::<Vec<_>>(),
        "residual_norm": sol.residual_norm,
        "complementarity": comp,
        "warnings": cr.warnings,
    });
    write_json(&out.join("summary.json"), &summary)?;
    manifest(
        out,
        "solve",
        json!({"args": a, "n": l.n, "eps_schedule": schedule(&a.penalty), "solve_options": solve_options(&a.penalty), "problem": l.problem}),
        &["u_eps.csv", "khat.csv", "theta.csv", "monitors.csv", "summary.json"],
    )?;
    if !all {
        let bad: Vec<String> = cr.entries.iter().filter(|e| !e.converged).map(|e| format!("{:e}", e.eps)).collect();
        return Err(Failure {
            code: EXIT_NONCONVERGED,
            message: format!("Newton did not converge at eps = {}", bad.join(", ")),
        });
    }
    Ok(())
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<(), Failure> {
    let l = load(&a.common)?;
    let out = &a.common.out;
    let mut opts = AdmmOptions::default();
    if let Some(t) = a.tol {
        opts.primal_tol = t;
        opts.dual_tol = t;
    }
    if let Some(m) = a.max_iters {
        opts.max_iters = m;
    }
    if let Some(r) = a.rho {
        opts.rho = r;
    }
    let (sol, converged) = match oracle::solve_vi_admm(&l.grid, &l.data, &opts) {
        Ok(s) => (s, true),
        Err(OracleError::MaxItersExceeded(s)) => (*s, false),
        Err(e) => return Err(invalid(e)),
    };
    write(&out.join("u_oracle.csv"), &io::node_csv(&l.grid, &[("u", &sol.u.0)]))?;
    write(&out.join("admm_history.csv"), &sol.history_csv())?;
    let summary = json!({
        "n": l.n,
        "converged": converged,
        "iterations": sol.iterations,
        "energy": sol.energy,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "grad_violation": sol.grad_violation,
        "obstacle_violation": sol.obstacle_violation,
    });
    write_json(&out.join("summary.json"), &summary)?;
    manifest(
        out,
        "oracle",
        json!({"args": a, "n": l.n, "admm_options": opts, "problem": l.problem}),
        &["u_oracle.csv", "admm_history.csv", "summary.json"],
    )?;
    if !converged {
        return Err(Failure {
            code: EXIT_NONCONVERGED,
            message: format!("ADMM not converged after {} iterations", sol.iterations),
        });
    }
    Ok(())
}

fn csv_column(path: &Path, name: &str) -> Result<Vec<f64>, Failure> {
    let (header, rows) = io::parse_csv(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    io::column(&header, &rows, name).ok_or_else(|| invalid(format!("{}: no column `{name}`", path.display())))
}

/// Rebuilds the finest solution of an earlier `solve` run.
fn load_solution(dir: &Path, l: &Loaded) -> Result<PenalizedSolution, Failure> {
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.join("summary.json"))?).map_err(|e| invalid(format!("summary.json: {e}")))?;
    let eps = summary["eps"].as_f64().ok_or_else(|| invalid("summary.json: missing eps"))?;
    let r = summary["r"].as_f64().unwrap_or(penalty::DEFAULT_R);
    let u = GridFunction(csv_column(&dir.join("u_eps.csv"), "u")?);
    let khat = CellField(csv_column(&dir.join("khat.csv"), "khat")?);
    if u.len() != l.grid.node_count() || khat.len() != l.grid.cell_count() {
        return Err(invalid("stored fields do not match the grid (pass the same --n)"));
    }
    let p = PenaltyParams::for_dim(eps, r, l.grid.dim()).map_err(invalid)?;
    let theta = penalty::theta_field(&l.grid, &l.data, &u, &p);
    let grad = crate::grid::cell_gradient(&l.grid, &u);
    let res = penalty::residual(&l.grid, &l.data, &u, &p);
    let residual_norm = crate::grid::norm_lp(&l.grid, &res, 2.0);
    let monitors = solver::monitors(&l.grid, &l.data, &u, &khat, &grad, &p, 4.0);
    Ok(PenalizedSolution {
        eps,
        r,
        u,
        khat,
        theta,
        grad,
        residual_norm,
        newton_iters: 0,
        converged: true,
        monitors,
    })
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let mut common = a.common.clone();
    if let Some(dir) = &a.from {
        let m: serde_json::Value =
            serde_json::from_str(&read(&dir.join("manifest.json"))?).map_err(|e| invalid(format!("manifest.json: {e}")))?;
        common.n = m["config"]["n"].as_u64().map(|v| v as usize);
    }
    let l = load(&common)?;
    let out = &common.out;
    let (sol, identity) = match &a.from {
        Some(dir) => (load_solution(dir, &l)?, None),
        None => {
            let cr = continuation(&l, &a.penalty)?;
            let identity = lagrange::lambda_flux_identity_check(&l.grid, &l.data, &cr).ok();
            (finest(&cr).clone(), identity)
        }
    };
    let mut lf = lagrange::fields_from(&l.grid, &l.data, &sol, tolerances(&l, sol.eps));
    if let Some(s) = a.corrupt_lambda {
        lf.lambda = CellField(lf.lambda.0.iter().map(|v| v * s).collect());
        lf.flux = lf.grad.scaled(&lf.lambda.0);
    }
    let rep = lagrange::complementarity_report(&l.grid, &l.data, &lf);
    let d = Thresholds::default();
    let t = Thresholds {
        min_lambda: a.min_lambda.unwrap_or(d.min_lambda),
        comp_grad: a.comp_grad.unwrap_or(d.comp_grad),
        comp_obs: a.comp_obs.unwrap_or(d.comp_obs),
        eq_residual: a.eq_residual.unwrap_or(d.eq_residual),
        sign_identity: a.sign_identity.unwrap_or(d.sign_identity),
    };
    let failures = rep.failures(&t);
    write(&out.join("lagrange_nodes.csv"), &lf.node_csv(&l.grid))?;
    write(&out.join("lagrange_cells.csv"), &lf.cell_csv(&l.grid))?;
    write_json(
        &out.join("complementarity.json"),
        &json!({
            "eps": sol.eps,
            "report": rep,
            "thresholds": t,
            "tolerances": lf.tolerances,
            "flux_identity": identity,
            "failures": failures,
            "passed": failures.is_empty(),
        }),
    )?;
    manifest(
        out,
        "verify",
        json!({"args": a, "n": l.n, "problem": l.problem}),
        &["complementarity.json", "lagrange_nodes.csv", "lagrange_cells.csv"],
    )?;
    if !failures.is_empty() {
        return Err(Failure {
            code: EXIT_THRESHOLD,
            message: format!("failed: {}", failures.join("; ")),
        });
    }
    Ok(())
}

fn study_failure(e: StudyError) -> Failure {
    let code = match &e {
        StudyError::Solve(SolveError::NonConvergence(_)) | StudyError::Oracle(OracleError::MaxItersExceeded(_)) => {
            EXIT_NONCONVERGED
        }
        _ => EXIT_INVALID,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

pub fn cmd_study(a: &StudyArgs) -> Result<(), Failure> {
    let mut spec = StudySpec::from_json(&read(&a.spec)?).map_err(invalid)?;
    if let Some(n) = &a.n {
        spec.n = n.clone();
    }
    if let Some(s) = &a.eps_schedule {
        spec.eps_schedule = s.clone();
    }
    if let Some(r) = a.r {
        spec.r = r;
    }
    if let Some(t) = a.tol {
        spec.solve.residual_tol = t;
    }
    if let Some(w) = a.workers {
        spec.workers = w;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let report = experiments::run_study(&spec).map_err(study_failure)?;
    write(&a.out.join("study.csv"), &report.csv())?;
    write_json(&a.out.join("study.json"), &report)?;
    manifest(&a.out, "study", json!({"args": a, "spec": spec}), &["study.csv", "study.json"])?;
    if !report.passed() {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Failure {
            code: EXIT_THRESHOLD,
            message: format!("failed checks: {}", names.join(", ")),
        });
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let res = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Study(a) => cmd_study(a),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
