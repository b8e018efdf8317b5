//! Scripted studies: convergence in `eps`, continuous dependence of
//! `(u, lambda)` on the data, and the two embeddings (a gradient-constrained
//! problem is an obstacle problem with a low enough obstacle, and an obstacle
//! problem is gradient constrained with a large enough bound).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::grid::{self, CellField, Grid, GridFunction};
use crate::io;
use crate::lagrange::{self, ContactTolerances, LagrangeError};
use crate::oracle::{self, AdmmOptions, OracleError, OracleSolution};
use crate::problem::{self, Hypothesis, Problem, ProblemError, SampledProblem};
use crate::solver::{self, ContinuationResult, PenalizedSolution, SolveError, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    EpsConvergence,
    Stability,
    RemarkGradientEmbeds,
    RemarkObstacleEmbeds,
}

/// Data sequence `(f_n, g_n, psi_n)` of a stability study. Expressions may
/// use `x`, `y` and the index `n`; missing entries repeat the base data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSequence {
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub g: Option<String>,
    #[serde(default)]
    pub psi: Option<String>,
    #[serde(default)]
    pub laplacian_psi: Option<String>,
    pub indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyThresholds {
    /// Final `|u_eps - u_oracle|_inf` of an eps study, and the agreement
    /// required between the embedding runs and the oracle.
    pub final_u_err: f64,
    /// Allowed growth factor between consecutive eps rows.
    pub plateau_slack: f64,
    /// Bound on the ratio of consecutive `max(|grad u| - g)^+`.
    pub decay_ratio: f64,
    /// Bound on `max/min` of each monitor norm along the schedule.
    pub monitor_factor: f64,
    /// Solver floor for `u` errors; stability studies end below twice this.
    pub floor_u: f64,
    /// Solver floor for gradient errors.
    pub floor_grad: f64,
    /// Errors at or below this count as zero in monotonicity checks.
    pub noise: f64,
    /// Agreement between the two runs of an embedding study.
    pub embed_match: f64,
}

impl Default for StudyThresholds {
    fn default() -> Self {
        StudyThresholds {
            final_u_err: 5e-3,
            plateau_slack: 1.5,
            decay_ratio: 0.7,
            monitor_factor: 10.0,
            floor_u: 5e-3,
            floor_grad: 5e-2,
            noise: 1e-12,
            embed_match: 1e-6,
        }
    }
}

fn default_schedule() -> Vec<f64> {
    solver::default_schedule()
}

fn default_r() -> f64 {
    crate::penalty::DEFAULT_R
}

fn default_margin() -> f64 {
    0.5
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub problem: Problem,
    /// Points per axis; studies other than eps convergence use the first.
    pub n: Vec<usize>,
    #[serde(default = "default_schedule")]
    pub eps_schedule: Vec<f64>,
    /// Second schedule for the eps convergence study; the finest multipliers
    /// of the two runs are compared but not required to agree.
    #[serde(default)]
    pub alt_eps_schedule: Option<Vec<f64>>,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub sequence: Option<DataSequence>,
    /// Random trials of the VI check at the finest eps (0 skips it).
    #[serde(default)]
    pub vi_trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Added to the measured gradient maximum in the obstacle embedding.
    #[serde(default = "default_margin")]
    pub gradient_margin: f64,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub admm: AdmmOptions,
    #[serde(default)]
    pub thresholds: StudyThresholds,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl StudySpec {
    pub fn from_json(text: &str) -> Result<StudySpec, StudyError> {
        serde_json::from_str(text).map_err(|e| StudyError::Spec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error("invalid study: {0}")]
    Spec(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("data `{index}` violates {} (worst {worst:e})", .hypothesis.describe())]
    Hypothesis {
        index: String,
        hypothesis: Hypothesis,
        worst: f64,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Lagrange(#[from] LagrangeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCheck {
    pub name: String,
    pub passed: bool,
    /// Informational checks do not affect [`StudyReport::passed`].
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub checks: Vec<StudyCheck>,
    pub notes: Vec<String>,
    pub spec: StudySpec,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StudyCheck> {
        self.checks.iter().filter(|c| c.required && !c.passed)
    }

    pub fn csv(&self) -> String {
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        io::csv_table(&header, &self.rows)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        io::column(&self.header, &self.rows, name)
    }

    pub fn check(&self, name: &str) -> Option<&StudyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(StudyCheck {
            name: name.into(),
            passed,
            required: true,
            detail: detail.into(),
        });
    }

    fn inform(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(StudyCheck {
            name: name.into(),
            passed,
            required: false,
            detail: detail.into(),
        });
    }
}

pub fn run_study(spec: &StudySpec) -> Result<StudyReport, StudyError> {
    match spec.kind {
        StudyKind::EpsConvergence => run_eps_convergence(spec),
        StudyKind::Stability => run_stability(spec),
        StudyKind::RemarkGradientEmbeds | StudyKind::RemarkObstacleEmbeds => run_remark_embeddings(spec),
    }
}

fn check_spec(spec: &StudySpec, kind: &[StudyKind]) -> Result<(), StudyError> {
    if !kind.contains(&spec.kind) {
        return Err(StudyError::Spec(format!("study kind {:?} not handled here", spec.kind)));
    }
    if spec.n.is_empty() {
        return Err(StudyError::Spec("no grid resolution given".into()));
    }
    if spec.workers == 0 {
        return Err(StudyError::Spec("workers must be positive".into()));
    }
    solver::check_schedule(&spec.eps_schedule)?;
    if let Some(alt) = &spec.alt_eps_schedule {
        solver::check_schedule(alt)?;
    }
    Ok(())
}

fn pool<T: Send>(workers: usize, jobs: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| jobs.into_par_iter().map(|job| job()).collect())
}

fn validate(problem: &Problem, n: usize, index: &str) -> Result<(), StudyError> {
    let report = problem::validate_data(problem, n.min(401))?;
    if let Some(c) = report.failures().next() {
        return Err(StudyError::Hypothesis {
            index: index.to_string(),
            hypothesis: c.hypothesis,
            worst: c.worst,
        });
    }
    Ok(())
}

/// A problem solved by continuation on one grid.
struct Case {
    grid: Grid,
    data: SampledProblem,
    cr: ContinuationResult,
}

impl Case {
    fn finest(&self) -> Result<&PenalizedSolution, StudyError> {
        self.cr
            .converged()
            .min_by(|a, b| a.eps.total_cmp(&b.eps))
            .ok_or(StudyError::Lagrange(LagrangeError::NoConvergedEntries(0)))
    }
}

fn solve_case(problem: &Problem, n: usize, spec: &StudySpec) -> Result<Case, StudyError> {
    solve_case_with(problem, n, spec, &spec.eps_schedule)
}

fn solve_case_with(problem: &Problem, n: usize, spec: &StudySpec, schedule: &[f64]) -> Result<Case, StudyError> {
    let grid = Grid::uniform(problem.domain.clone(), n).map_err(ProblemError::from)?;
    let data = problem.sample(&grid)?;
    let opts = SolveOptions {
        skip_nonconverged: true,
        ..spec.solve.clone()
    };
    let cr = solver::continuation_solve(&grid, &data, schedule, spec.r, &opts)?;
    Ok(Case { grid, data, cr })
}

fn oracle_solve(grid: &Grid, data: &SampledProblem, opts: &AdmmOptions) -> Result<OracleSolution, StudyError> {
    match oracle::solve_vi_admm(grid, data, opts) {
        Ok(s) => Ok(s),
        Err(OracleError::MaxItersExceeded(s)) => Ok(*s),
        Err(e) => Err(e.into()),
    }
}

fn grad_diff_inf(grid: &Grid, a: &GridFunction, b: &GridFunction) -> f64 {
    let ga = grid::cell_gradient(grid, a);
    let gb = grid::cell_gradient(grid, b);
    ga.data().iter().zip(gb.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn weakly_decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= slack * w[0])
}

fn strictly_decreasing(values: &[f64], noise: f64) -> bool {
    values.windows(2).all(|w| w[1] < w[0] || w[1] <= noise)
}

fn fmt_list(values: &[f64]) -> String {
    io::join_floats(values)
}

pub const EPS_HEADER: [&str; 16] = [
    "n",
    "eps",
    "u_err_inf",
    "grad_err_inf",
    "grad_excess_pos",
    "min_obstacle_gap",
    "comp_grad",
    "comp_obs",
    "L1_khat",
    "Lp_khat",
    "L2r_grad",
    "L2_flux",
    "measAeps",
    "newton_iters",
    "residual_norm",
    "converged",
];

/// Solves along the schedule for each resolution and compares every entry
/// with the ADMM solution.
pub fn run_eps_convergence(spec: &StudySpec) -> Result<StudyReport, StudyError> {
    check_spec(spec, &[StudyKind::EpsConvergence])?;
    for &n in &spec.n {
        validate(&spec.problem, n, &format!("n={n}"))?;
    }
    type Job<'a> = Box<dyn FnOnce() -> Result<(Case, OracleSolution, Option<Case>), StudyError> + Send + 'a>;
    let jobs: Vec<Job> = spec
        .n
        .iter()
        .map(|&n| {
            Box::new(move || {
                let case = solve_case(&spec.problem, n, spec)?;
                let o = oracle_solve(&case.grid, &case.data, &spec.admm)?;
                let alt = match &spec.alt_eps_schedule {
                    Some(sched) => Some(solve_case_with(&spec.problem, n, spec, sched)?),
                    None => None,
                };
                Ok((case, o, alt))
            }) as Job
        })
        .collect();
    let results = pool(spec.workers, jobs);

    let mut report = StudyReport {
        kind: spec.kind,
        header: EPS_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        checks: Vec::new(),
        notes: spec.n.iter().map(|&n| format!("n={n}: schedule {}", fmt_list(&spec.eps_schedule))).collect(),
        spec: spec.clone(),
    };
    let t = &spec.thresholds;
    for (&n, res) in spec.n.iter().zip(results) {
        let (case, o, alt) = res?;
        let (grid, data) = (&case.grid, &case.data);
        if !o.converged {
            report.notes.push(format!("n={n}: ADMM stopped after {} iterations", o.iterations));
        }
        report.push(format!("oracle_converged[n={n}]"), o.converged, format!("{} iterations", o.iterations));
        report.notes.extend(case.cr.warnings.iter().map(|w| format!("n={n}: {w}")));
        let gmax = data.g_cells.as_ref().map_or(1.0, |g| g.max());
        let h2 = grid.min_spacing().powi(2);
        let mut u_err = Vec::new();
        let mut excess = Vec::new();
        let mut penetration_ok = true;
        for e in &case.cr.entries {
            let m = &e.monitors;
            let lf = lagrange::fields_from(grid, data, e, ContactTolerances::for_eps(e.eps, gmax));
            let comp = lagrange::complementarity_report(grid, data, &lf);
            let err = e.u.max_abs_diff(&o.u);
            let gx = m.max_grad_excess.max(0.0);
            if data.psi.is_some() && m.min_obstacle_gap < -e.eps - 10.0 * h2 {
                penetration_ok = false;
            }
            if e.converged {
                u_err.push(err);
                excess.push(gx);
            }
            report.rows.push(vec![
                n as f64,
                e.eps,
                err,
                grad_diff_inf(grid, &e.u, &o.u),
                gx,
                m.min_obstacle_gap,
                comp.comp_grad,
                comp.comp_obs,
                m.l1_khat,
                m.lp_khat,
                m.l2r_grad,
                m.l2_flux,
                m.meas_a_eps,
                e.newton_iters as f64,
                e.residual_norm,
                e.converged as u8 as f64,
            ]);
        }
        report.push(
            format!("all_converged[n={n}]"),
            case.cr.converged().count() == case.cr.entries.len(),
            format!("{} of {}", case.cr.converged().count(), case.cr.entries.len()),
        );
        report.push(
            format!("u_err_weakly_decreasing[n={n}]"),
            weakly_decreasing(&u_err, t.plateau_slack),
            fmt_list(&u_err),
        );
        let last = u_err.last().copied().unwrap_or(f64::INFINITY);
        report.push(
            format!("u_err_final[n={n}]"),
            last <= t.final_u_err,
            format!("{last:e} <= {:e}", t.final_u_err),
        );
        if data.psi.is_some() {
            report.push(format!("obstacle_penetration[n={n}]"), penetration_ok, "min(u - psi) >= -eps - 10 h^2");
        }
        let ratios: Vec<f64> = excess
            .windows(2)
            .filter(|w| w[0] > t.noise)
            .map(|w| w[1] / w[0])
            .collect();
        report.push(
            format!("grad_excess_decay[n={n}]"),
            ratios.iter().all(|&r| r <= t.decay_ratio),
            format!("ratios {}", fmt_list(&ratios)),
        );
        let conv: Vec<&PenalizedSolution> = case.cr.converged().collect();
        if let (Some(a), Some(b)) = (conv.first(), conv.last()) {
            let pairs = [
                ("L1_khat", a.monitors.l1_khat, b.monitors.l1_khat),
                ("Lp_khat", a.monitors.lp_khat, b.monitors.lp_khat),
                ("L2r_grad", a.monitors.l2r_grad, b.monitors.l2r_grad),
                ("L2_flux", a.monitors.l2_flux, b.monitors.l2_flux),
            ];
            for (name, x, y) in pairs {
                let ratio = if x.min(y) > 0.0 { x.max(y) / x.min(y) } else if x == y { 1.0 } else { f64::INFINITY };
                report.push(
                    format!("monitor_bounded_{name}[n={n}]"),
                    ratio <= t.monitor_factor,
                    format!("{x:e} -> {y:e}"),
                );
            }
        }
        if spec.vi_trials > 0 {
            let fin = case.finest()?;
            let lf = lagrange::fields_from(grid, data, fin, ContactTolerances::for_eps(fin.eps, gmax));
            let opts = lagrange::penalized_vi_options(fin.eps, spec.vi_trials, spec.seed);
            let s2 = lagrange::step2_vi_check(grid, data, &lf, &o, &opts)?;
            report.push(
                format!("vi_check[n={n}]"),
                s2.vi.passed,
                format!("worst margin {:e}, tolerance {:e}", s2.vi.worst_margin, s2.vi.tolerance),
            );
        }
        if let (Some(alt), Some(sched)) = (alt, &spec.alt_eps_schedule) {
            let (a, b) = (case.finest()?, alt.finest()?);
            let lf = lagrange::fields_from(grid, data, a, ContactTolerances::for_eps(a.eps, gmax));
            let (l1, contact) = lambda_gap_on_contact(grid, &lf.grad_contact, &a.khat, &b.khat);
            let du = a.u.max_abs_diff(&b.u);
            report.notes.push(format!("n={n}: alternate schedule {}", fmt_list(sched)));
            report.inform(
                format!("schedule_agreement[n={n}]"),
                du <= t.final_u_err && l1 <= 0.05 * contact.max(t.noise),
                format!(
                    "eps {:e} vs {:e}: |u_a - u_b| = {du:e}, int |lambda_a - lambda_b| on grad contact = {l1:e} (int lambda_a there = {contact:e})",
                    a.eps, b.eps
                ),
            );
        }
    }
    Ok(report)
}

/// `(int |a - b|, int a)` over the cells flagged in `mask`.
fn lambda_gap_on_contact(grid: &Grid, mask: &[bool], a: &CellField, b: &CellField) -> (f64, f64) {
    let vol = grid.cell_volume();
    let mut gap = 0.0;
    let mut mass = 0.0;
    for (t, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        gap += (a.0[t] - b.0[t]).abs() * vol;
        mass += a.0[t].abs() * vol;
    }
    (gap, mass)
}

/// Number of fields in the weak-convergence battery.
pub const TEST_FIELDS: usize = 10;

/// Nonnegative test field `k`: a polynomial in the first coordinate times a
/// Gaussian bump, in coordinates rescaled to `[-1, 1]^d`.
pub fn test_field(k: usize, xi: &[f64]) -> f64 {
    let c = -0.9 + 0.2 * k as f64;
    let mut v = (1.0 + xi[0]).powi((k % 3) as i32) * (-(xi[0] - c).powi(2) / 0.5).exp();
    if let Some(eta) = xi.get(1) {
        v *= (-(eta + c).powi(2) / 0.5).exp();
    }
    v
}

/// `int lambda phi_k` for every field of the battery.
pub fn weak_moments(grid: &Grid, lambda: &CellField) -> Vec<f64> {
    let bounds = grid.domain().bounds();
    (0..TEST_FIELDS)
        .map(|k| {
            grid.cell_volume()
                * grid
                    .cells()
                    .iter()
                    .zip(&lambda.0)
                    .map(|(c, l)| {
                        let xi: Vec<f64> = (0..grid.dim())
                            .map(|a| {
                                let [lo, hi] = bounds[a];
                                2.0 * (c.centroid[a] - lo) / (hi - lo) - 1.0
                            })
                            .collect();
                        l * test_field(k, &xi)
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// `max |d(x) - d(y)| / |x - y|^alpha` over pairs of sample points (1D).
pub fn holder_seminorm(points: &[f64], values: &[f64], alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let q = (values[i] - values[j]).abs() / (points[i] - points[j]).abs().powf(alpha);
            best = best.max(q);
        }
    }
    best
}

fn sequence_problem(base: &Problem, seq: &DataSequence, n: u32) -> Result<Problem, StudyError> {
    let pick = |text: &Option<String>, current: Option<&Expr>| -> Result<Option<Expr>, StudyError> {
        match text {
            Some(t) => Ok(Some(Expr::parse_with_params(t, &["n"])?.bind("n", n as f64))),
            None => Ok(current.cloned()),
        }
    };
    let f = pick(&seq.f, Some(&base.f))?.expect("f present");
    Ok(Problem::from_parts(
        base.domain.clone(),
        f,
        pick(&seq.g, base.g.as_ref())?,
        pick(&seq.psi, base.psi.as_ref())?,
        pick(&seq.laplacian_psi, base.laplacian_psi.as_ref())?,
    )?)
}

/// Solves the sequence problems and the limit problem at the smallest eps
/// and measures how `(u_n, lambda_n)` approach `(u, lambda)`.
pub fn run_stability(spec: &StudySpec) -> Result<StudyReport, StudyError> {
    check_spec(spec, &[StudyKind::Stability])?;
    let seq = spec
        .sequence
        .as_ref()
        .ok_or_else(|| StudyError::Spec("stability study needs a data sequence".into()))?;
    if seq.indices.is_empty() || seq.indices.windows(2).any(|w| w[1] <= w[0]) || seq.indices[0] == 0 {
        return Err(StudyError::Spec("sequence indices must be positive and increasing".into()));
    }
    let n = spec.n[0];
    validate(&spec.problem, n, "limit")?;
    let mut problems = Vec::new();
    for &i in &seq.indices {
        let p = sequence_problem(&spec.problem, seq, i)?;
        validate(&p, n, &format!("n={i}"))?;
        problems.push(p);
    }
    problems.push(spec.problem.clone());

    let jobs: Vec<Box<dyn FnOnce() -> Result<Case, StudyError> + Send>> = problems
        .iter()
        .map(|p| Box::new(move || solve_case(p, n, spec)) as Box<dyn FnOnce() -> _ + Send>)
        .collect();
    let cases: Vec<Case> = pool(spec.workers, jobs).into_iter().collect::<Result<_, _>>()?;
    let (limit_case, seq_cases) = cases.split_last().expect("limit case");
    let limit = limit_case.finest()?;
    let grid = &limit_case.grid;
    let limit_moments = weak_moments(grid, &limit.khat);
    let one_d = grid.dim() == 1;
    let alpha = 1.0 - grid.dim() as f64 / (2.0 * spec.r);
    let nodes: Vec<f64> = (0..grid.node_count()).map(|k| grid.coords(k)[0]).collect();
    let centroids: Vec<f64> = grid.cells().iter().map(|c| c.centroid[0]).collect();

    let mut header: Vec<String> = ["index", "eps", "u_err_inf", "grad_err_inf", "holder_u", "holder_grad"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..TEST_FIELDS).map(|k| format!("weak_gap_{k}")));
    let mut report = StudyReport {
        kind: spec.kind,
        header,
        rows: Vec::new(),
        checks: Vec::new(),
        notes: vec![format!(
            "n={n}, schedule {}, Holder exponent {alpha}",
            fmt_list(&spec.eps_schedule)
        )],
        spec: spec.clone(),
    };
    let mut u_err = Vec::new();
    let mut g_err = Vec::new();
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); TEST_FIELDS];
    for (&i, case) in seq.indices.iter().zip(seq_cases) {
        let sol = case.finest()?;
        if sol.eps != limit.eps {
            report.notes.push(format!("n={i}: finest converged eps {:e} differs from the limit run", sol.eps));
        }
        let du = sol.u.zip_map(&limit.u, |a, b| a - b);
        let eu = du.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eg = grad_diff_inf(grid, &sol.u, &limit.u);
        let (hu, hg) = if one_d {
            let gd = grid::cell_gradient(grid, &du).component(0);
            (holder_seminorm(&nodes, &du.0, alpha), holder_seminorm(&centroids, &gd, alpha))
        } else {
            (f64::NAN, f64::NAN)
        };
        let moments = weak_moments(grid, &sol.khat);
        let mut row = vec![i as f64, sol.eps, eu, eg, hu, hg];
        for k in 0..TEST_FIELDS {
            let gap = (moments[k] - limit_moments[k]).abs();
            gaps[k].push(gap);
            row.push(gap);
        }
        u_err.push(eu);
        g_err.push(eg);
        report.rows.push(row);
    }
    let t = &spec.thresholds;
    report.push("u_err_decreasing", strictly_decreasing(&u_err, t.noise), fmt_list(&u_err));
    report.push("grad_err_decreasing", strictly_decreasing(&g_err, t.noise), fmt_list(&g_err));
    let (lu, lg) = (*u_err.last().unwrap(), *g_err.last().unwrap());
    report.push("u_err_final", lu <= 2.0 * t.floor_u, format!("{lu:e} <= {:e}", 2.0 * t.floor_u));
    report.push("grad_err_final", lg <= 2.0 * t.floor_grad, format!("{lg:e} <= {:e}", 2.0 * t.floor_grad));
    for (k, g) in gaps.iter().enumerate() {
        report.push(format!("weak_gap_decreasing_{k}"), strictly_decreasing(g, t.noise), fmt_list(g));
    }
    // rate fit u_err <= K / n with K from the first index
    let k_fit = u_err[0] * seq.indices[0] as f64;
    let fits = u_err
        .iter()
        .zip(&seq.indices)
        .all(|(e, &i)| *e <= t.plateau_slack * k_fit / i as f64 || *e <= t.noise);
    report.inform("u_err_rate_1_over_n", fits, format!("K = {k_fit:e}"));
    Ok(report)
}

fn constant(value: f64) -> Option<Expr> {
    Some(Expr::constant(value))
}

/// Runs one of the two embedding experiments.
pub fn run_remark_embeddings(spec: &StudySpec) -> Result<StudyReport, StudyError> {
    check_spec(
        spec,
        &[StudyKind::RemarkGradientEmbeds, StudyKind::RemarkObstacleEmbeds],
    )?;
    let n = spec.n[0];
    let base = &spec.problem;
    let t = spec.thresholds.clone();
    let header = [
        "variant",
        "max_abs_u",
        "min_obstacle_gap",
        "obstacle_contact_nodes",
        "grad_contact_cells",
        "max_grad",
        "diff_vs_reference",
        "diff_vs_oracle",
    ];
    let mut report = StudyReport {
        kind: spec.kind,
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        checks: Vec::new(),
        notes: Vec::new(),
        spec: spec.clone(),
    };

    // reference problem and the problem it is embedded into
    let (reference, embedded) = match spec.kind {
        StudyKind::RemarkGradientEmbeds => {
            if base.g.is_none() {
                return Err(StudyError::Spec("gradient embedding needs a gradient bound".into()));
            }
            let grid = Grid::uniform(base.domain.clone(), n).map_err(ProblemError::from)?;
            let g_star = base.g_max(&grid)?;
            let level = -g_star * base.domain.diameter();
            report.notes.push(format!("g* = {g_star:e}, obstacle level {level:e}"));
            let pure = Problem::from_parts(base.domain.clone(), base.f.clone(), base.g.clone(), None, None)?;
            let emb = Problem::from_parts(base.domain.clone(), base.f.clone(), base.g.clone(), constant(level), constant(0.0))?;
            (pure, emb)
        }
        _ => {
            if base.psi.is_none() {
                return Err(StudyError::Spec("obstacle embedding needs an obstacle".into()));
            }
            let pure = Problem::from_parts(base.domain.clone(), base.f.clone(), None, base.psi.clone(), base.laplacian_psi.clone())?;
            (pure, base.clone())
        }
    };
    validate(&reference, n, "reference")?;
    let ref_case = solve_case(&reference, n, spec)?;
    let ref_sol = ref_case.finest()?;
    let embedded = match spec.kind {
        StudyKind::RemarkObstacleEmbeds => {
            let g_star = ref_sol.grad.magnitudes().into_iter().fold(0.0, f64::max);
            let bound = g_star + spec.gradient_margin;
            report.notes.push(format!("measured max |grad u| = {g_star:e}, bound {bound:e}"));
            Problem::from_parts(
                base.domain.clone(),
                base.f.clone(),
                constant(bound),
                base.psi.clone(),
                base.laplacian_psi.clone(),
            )?
        }
        _ => embedded,
    };
    validate(&embedded, n, "embedded")?;
    let emb_case = solve_case(&embedded, n, spec)?;
    let emb_sol = emb_case.finest()?;
    let o = oracle_solve(&ref_case.grid, &ref_case.data, &spec.admm)?;

    let row = |case: &Case, sol: &PenalizedSolution, variant: f64| -> (Vec<f64>, lagrange::ComplementarityReport) {
        let gmax = case.data.g_cells.as_ref().map_or(1.0, |g| g.max());
        let lf = lagrange::fields_from(&case.grid, &case.data, sol, ContactTolerances::for_eps(sol.eps, gmax));
        let rep = lagrange::complementarity_report(&case.grid, &case.data, &lf);
        let r = vec![
            variant,
            sol.u.0.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            rep.min_obstacle_gap,
            rep.obstacle_contact_nodes as f64,
            rep.grad_contact_cells as f64,
            sol.grad.magnitudes().into_iter().fold(0.0, f64::max),
            sol.u.max_abs_diff(&ref_sol.u),
            sol.u.max_abs_diff(&o.u),
        ];
        (r, rep)
    };
    let (r0, _) = row(&ref_case, ref_sol, 0.0);
    let (r1, emb_rep) = row(&emb_case, emb_sol, 1.0);
    let diff = r1[6];
    let oracle_diff = r1[7];
    report.rows.push(r0);
    report.rows.push(r1);
    report.push("oracle_converged", o.converged, format!("{} iterations", o.iterations));
    match spec.kind {
        StudyKind::RemarkGradientEmbeds => report.push(
            "obstacle_never_binds",
            emb_rep.obstacle_contact_nodes == 0 && emb_rep.min_obstacle_gap > 0.0,
            format!(
                "{} contact nodes, min gap {:e}",
                emb_rep.obstacle_contact_nodes, emb_rep.min_obstacle_gap
            ),
        ),
        _ => report.push(
            "gradient_never_binds",
            emb_rep.grad_contact_cells == 0,
            format!("{} contact cells", emb_rep.grad_contact_cells),
        ),
    }
    report.push("embedded_matches_reference", diff <= t.embed_match, format!("{diff:e} <= {:e}", t.embed_match));
    report.push(
        "embedded_matches_oracle",
        oracle_diff <= t.final_u_err,
        format!("{oracle_diff:e} <= {:e}", t.final_u_err),
    );
    Ok(report)
}
