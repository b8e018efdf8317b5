//! Damped Newton for the penalized problem at fixed `eps` and the
//! continuation loop over a decreasing `eps` schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, CellField, Grid, GridFunction, VectorField};
use crate::penalty::{self, PenaltyError, PenaltyParams};
use crate::problem::SampledProblem;
use crate::sparse::{self, BandedCholesky, LinearSolveError, SparseOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_newton_iters: usize,
    /// Absolute tolerance on the discrete L2 norm of the residual.
    pub residual_tol: f64,
    /// Also stop once the Newton increment falls below this multiple of
    /// `max(1, |u|_inf)`: the residual has then reached its round-off floor.
    pub increment_tol: f64,
    /// Line search stops once the directional derivative of the energy has
    /// shrunk by this factor.
    pub line_search_tol: f64,
    pub picard_fallback: bool,
    pub linear_solver: LinearSolver,
    /// Accept `eps < h^2`.
    pub allow_unresolved_eps: bool,
    /// Keep going after a non-converged `eps` in a continuation.
    pub skip_nonconverged: bool,
    /// Exponent of the `L^p` monitor of `khat`.
    pub monitor_p: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_newton_iters: 100,
            residual_tol: 1e-9,
            increment_tol: 1e-13,
            line_search_tol: 0.1,
            picard_fallback: true,
            linear_solver: LinearSolver::Direct,
            allow_unresolved_eps: false,
            skip_nonconverged: false,
            monitor_p: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("initial guess is nonzero on the boundary (node {node})")]
    InitBoundary { node: usize },
    #[error("eps = {eps:e} is below h^2 = {h2:e}; the grid cannot resolve the penalty layer")]
    UnresolvedEps { eps: f64, h2: f64 },
    #[error("eps schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("linear solve failed: {0}")]
    LinearSolve(#[from] LinearSolveError),
    #[error("Newton did not converge for eps = {eps:e}: residual {residual:e} after {iters} iterations", eps = .0.eps, residual = .0.residual_norm, iters = .0.newton_iters)]
    NonConvergence(Box<PenalizedSolution>),
}

/// Norms tracked along the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    pub eps: f64,
    #[serde(rename = "L1_khat")]
    pub l1_khat: f64,
    #[serde(rename = "Lp_khat")]
    pub lp_khat: f64,
    #[serde(rename = "L2r_grad")]
    pub l2r_grad: f64,
    #[serde(rename = "L2_flux")]
    pub l2_flux: f64,
    #[serde(rename = "measAeps")]
    pub meas_a_eps: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
    /// `max(|grad u| - g)` over cells.
    pub max_grad_excess: f64,
    /// `max(|grad u|^2 - g^2)` over cells touching the boundary.
    pub boundary_grad_excess: f64,
    /// `min(u - psi)` over nodes.
    pub min_obstacle_gap: f64,
}

impl Monitors {
    pub const CSV_HEADER: [&'static str; 8] = [
        "eps",
        "L1_khat",
        "Lp_khat",
        "L2r_grad",
        "L2_flux",
        "measAeps",
        "newton_iters",
        "residual_norm",
    ];

    pub fn csv_row(&self) -> Vec<f64> {
        vec![
            self.eps,
            self.l1_khat,
            self.lp_khat,
            self.l2r_grad,
            self.l2_flux,
            self.meas_a_eps,
            self.newton_iters as f64,
            self.residual_norm,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedSolution {
    pub eps: f64,
    pub r: f64,
    pub u: GridFunction,
    /// Per cell.
    pub khat: CellField,
    /// Per node.
    pub theta: GridFunction,
    /// Cell gradients of `u`.
    pub grad: VectorField,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub converged: bool,
    pub monitors: Monitors,
}

impl PenalizedSolution {
    pub fn params(&self) -> PenaltyParams {
        PenaltyParams {
            eps: self.eps,
            r: self.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    pub r: f64,
    pub entries: Vec<PenalizedSolution>,
    pub warnings: Vec<String>,
}

impl ContinuationResult {
    pub fn monitors(&self) -> Vec<&Monitors> {
        self.entries.iter().map(|e| &e.monitors).collect()
    }

    pub fn converged(&self) -> impl Iterator<Item = &PenalizedSolution> {
        self.entries.iter().filter(|e| e.converged)
    }

    /// Smallest-`eps` converged entry.
    pub fn finest(&self) -> Option<&PenalizedSolution> {
        self.converged().last()
    }

    pub fn monitors_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self.entries.iter().map(|e| e.monitors.csv_row()).collect();
        crate::io::csv_table(&Monitors::CSV_HEADER, &rows)
    }
}

/// Computes the monitor norms of a solution.
pub fn monitors(
    grid: &Grid,
    data: &SampledProblem,
    u: &GridFunction,
    khat: &CellField,
    grad: &VectorField,
    p: &PenaltyParams,
    monitor_p: f64,
) -> Monitors {
    let vol = grid.cell_volume();
    let mags = grad.magnitudes();
    let slack = penalty::constraint_slack(grid, data, grad);
    let sum = |f: &dyn Fn(usize) -> f64| (0..grid.cell_count()).map(f).sum::<f64>() * vol;
    let l1_khat = sum(&|t| khat.0[t]);
    let lp_khat = sum(&|t| khat.0[t].powf(monitor_p)).powf(1.0 / monitor_p);
    let l2r_grad = sum(&|t| mags[t].powf(2.0 * p.r)).powf(1.0 / (2.0 * p.r));
    let l2_flux = sum(&|t| (khat.0[t] * mags[t]).powi(2)).sqrt();
    let root = p.eps.sqrt();
    let meas_a_eps = sum(&|t| if slack[t] >= root { 1.0 } else { 0.0 });
    let (max_grad_excess, boundary_grad_excess) = match &data.g_cells {
        Some(g) => {
            let m = (0..grid.cell_count())
                .map(|t| mags[t] - g.0[t])
                .fold(f64::NEG_INFINITY, f64::max);
            let b = grid
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, c)| grid.cell_touches_boundary(c))
                .map(|(t, _)| slack[t])
                .fold(f64::NEG_INFINITY, f64::max);
            (m, b)
        }
        None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
    };
    let min_obstacle_gap = match &data.psi {
        Some(psi) => u.zip_map(psi, |a, b| a - b).min(),
        None => f64::INFINITY,
    };
    Monitors {
        eps: p.eps,
        l1_khat,
        lp_khat,
        l2r_grad,
        l2_flux,
        meas_a_eps,
        newton_iters: 0,
        residual_norm: 0.0,
        max_grad_excess,
        boundary_grad_excess,
        min_obstacle_gap,
    }
}

fn check_options(opts: &SolveOptions) -> Result<(), SolveError> {
    if !(opts.residual_tol > 0.0) {
        return Err(SolveError::Options("residual_tol must be positive".into()));
    }
    if !(opts.increment_tol >= 0.0) {
        return Err(SolveError::Options("increment_tol must be nonnegative".into()));
    }
    if !(opts.line_search_tol > 0.0 && opts.line_search_tol < 1.0) {
        return Err(SolveError::Options("line_search_tol must lie in (0, 1)".into()));
    }
    if !(opts.monitor_p >= 1.0) {
        return Err(SolveError::Options("monitor_p must be >= 1".into()));
    }
    Ok(())
}

fn check_resolution(grid: &Grid, eps: f64, opts: &SolveOptions) -> Result<Option<String>, SolveError> {
    let h2 = grid.min_spacing().powi(2);
    if eps < h2 {
        if opts.allow_unresolved_eps {
            return Ok(Some(format!("eps = {eps:e} is below h^2 = {h2:e}")));
        }
        return Err(SolveError::UnresolvedEps { eps, h2 });
    }
    Ok(None)
}

fn linear_solve(a: &SparseOperator, rhs: &[f64], opts: &SolveOptions) -> Result<Vec<f64>, LinearSolveError> {
    match opts.linear_solver {
        LinearSolver::Direct => BandedCholesky::factor(a)?.solve(rhs),
        LinearSolver::Cg => {
            let iters = 20 * a.size() + 100;
            sparse::conjugate_gradient(a, rhs, None, 1e-2 * opts.residual_tol, iters)
        }
    }
}

fn axpy(u: &GridFunction, t: f64, d: &[f64]) -> GridFunction {
    GridFunction(u.0.iter().zip(d).map(|(a, b)| a + t * b).collect())
}

/// Step along a descent direction of a convex function given its directional
/// derivative `slope(t)` (`slope0 = slope(0) < 0`): the unit step when the
/// function still decreases there, otherwise a point with
/// `|slope(t)| <= tol |slope0|` found by safeguarded regula falsi.
fn energy_line_search(slope: impl Fn(f64) -> f64, slope0: f64, tol: f64) -> Option<f64> {
    if !(slope0 < 0.0) {
        return None;
    }
    let s1 = slope(1.0);
    if s1 <= 0.0 {
        return Some(1.0);
    }
    let (mut lo, mut hi) = ((0.0, slope0), (1.0, s1));
    for _ in 0..60 {
        let secant = lo.0 - lo.1 * (hi.0 - lo.0) / (hi.1 - lo.1);
        // keep the trial away from the bracket ends
        let w = hi.0 - lo.0;
        let t = secant.clamp(lo.0 + 0.01 * w, hi.0 - 0.01 * w);
        let st = slope(t);
        if st.abs() <= tol * slope0.abs() {
            return Some(t);
        }
        if st < 0.0 {
            lo = (t, st);
        } else {
            hi = (t, st);
        }
    }
    (lo.0 > 0.0).then_some(lo.0)
}

/// Solves the penalized problem at fixed `eps` starting from `init`.
pub fn solve_penalized(
    grid: &Grid,
    data: &SampledProblem,
    p: &PenaltyParams,
    init: &GridFunction,
    opts: &SolveOptions,
) -> Result<PenalizedSolution, SolveError> {
    check_options(opts)?;
    PenaltyParams::for_dim(p.eps, p.r, grid.dim())?;
    check_resolution(grid, p.eps, opts)?;
    if let Some(node) = (0..grid.node_count()).find(|&k| grid.is_boundary(k) && init.0[k] != 0.0) {
        return Err(SolveError::InitBoundary { node });
    }

    let norm = |r: &GridFunction| grid::norm_lp(grid, r, 2.0);
    let mut u = init.clone();
    let mut sys = penalty::assemble(grid, data, &u, p);
    let mut rn = norm(&sys.residual);
    let mut best = (rn, u.clone());
    let mut iters = 0;
    let converged = loop {
        iters += 1;
        if rn <= opts.residual_tol {
            break true;
        }
        if iters > opts.max_newton_iters {
            iters -= 1;
            break false;
        }
        let rhs: Vec<f64> = sys.residual.0.iter().map(|r| -r).collect();
        let delta = linear_solve(&sys.jacobian, &rhs, opts)?;
        let size = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if size <= opts.increment_tol * u.0.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
            break true;
        }

        // the residual is the scaled gradient of a convex energy, so the
        // directional derivative along delta is nondecreasing in t
        let slope = |t: f64| sparse::dot(&penalty::residual(grid, data, &axpy(&u, t, &delta), p).0, &delta);
        let step = energy_line_search(slope, sparse::dot(&sys.residual.0, &delta), opts.line_search_tol);
        let next = match step {
            Some(t) => Some(axpy(&u, t, &delta)),
            None if opts.picard_fallback => {
                // frozen coefficients: -div(khat grad v) = F_eps(u)
                let a = penalty::stiffness(grid, &sys.khat);
                let mut rhs = penalty::f_eps(grid, data, &u, p);
                for k in 0..grid.node_count() {
                    if grid.is_boundary(k) {
                        rhs.0[k] = 0.0;
                    }
                }
                Some(GridFunction(linear_solve(&a, &rhs.0, opts)?))
            }
            None => None,
        };
        let Some(cand) = next else { break false };
        let cs = penalty::assemble(grid, data, &cand, p);
        let cn = norm(&cs.residual);
        if step.is_none() && !(cn < rn) {
            break false;
        }
        u = cand;
        sys = cs;
        rn = cn;
        if rn < best.0 {
            best = (rn, u.clone());
        }
    };

    if !converged {
        u = best.1;
        sys = penalty::assemble(grid, data, &u, p);
        rn = best.0;
    }
    let mut mon = monitors(grid, data, &u, &sys.khat, &sys.grad, p, opts.monitor_p);
    mon.newton_iters = iters;
    mon.residual_norm = rn;
    let sol = PenalizedSolution {
        eps: p.eps,
        r: p.r,
        u,
        khat: sys.khat,
        theta: sys.theta,
        grad: sys.grad,
        residual_norm: rn,
        newton_iters: iters,
        converged,
        monitors: mon,
    };
    if converged {
        Ok(sol)
    } else {
        Err(SolveError::NonConvergence(Box::new(sol)))
    }
}

/// Geometric schedule `start, start*ratio, ...` with `count` entries.
pub fn geometric_schedule(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Default schedule `1e-1, 1e-2, 1e-3, 1e-4`.
pub fn default_schedule() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

pub fn check_schedule(schedule: &[f64]) -> Result<(), SolveError> {
    if schedule.is_empty() {
        return Err(SolveError::Schedule("empty".into()));
    }
    for (k, &e) in schedule.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(SolveError::Schedule(format!("entry {k} = {e} is outside (0, 1)")));
        }
        if k > 0 && !(e < schedule[k - 1]) {
            return Err(SolveError::Schedule(format!("entry {k} = {e} does not decrease")));
        }
    }
    Ok(())
}

/// Solves along `schedule`, warm-starting each `eps` from the previous one.
pub fn continuation_solve(
    grid: &Grid,
    data: &SampledProblem,
    schedule: &[f64],
    r: f64,
    opts: &SolveOptions,
) -> Result<ContinuationResult, SolveError> {
    check_schedule(schedule)?;
    let mut warnings = Vec::new();
    for &eps in schedule {
        PenaltyParams::for_dim(eps, r, grid.dim())?;
        if let Some(w) = check_resolution(grid, eps, opts)? {
            warnings.push(w);
        }
    }
    let mut entries = Vec::with_capacity(schedule.len());
    let mut init = GridFunction::zeros(grid);
    for &eps in schedule {
        let p = PenaltyParams { eps, r };
        let sol = match solve_penalized(grid, data, &p, &init, opts) {
            Ok(s) => s,
            Err(SolveError::NonConvergence(s)) if opts.skip_nonconverged => {
                warnings.push(format!("eps = {eps:e} did not converge (residual {:e})", s.residual_norm));
                *s
            }
            Err(e) => return Err(e),
        };
        init = sol.u.clone();
        entries.push(sol);
    }
    Ok(ContinuationResult { r, entries, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::problem::Problem;

    fn line_problem(f: &str, g: &str, psi: &str, n: usize) -> (Grid, SampledProblem) {
        let prob = Problem::new(Domain::interval(-1.0, 1.0).unwrap(), f, Some(g), Some(psi)).unwrap();
        let grid = Grid::uniform(prob.domain.clone(), n).unwrap();
        let data = prob.sample(&grid).unwrap();
        (grid, data)
    }

    #[test]
    fn trivial_problem_takes_one_iteration() {
        let (grid, data) = line_problem("0", "1", "-1", 21);
        let p = PenaltyParams::new(0.1, 4.0).unwrap();
        let s = solve_penalized(&grid, &data, &p, &GridFunction::zeros(&grid), &SolveOptions::default()).unwrap();
        assert_eq!(s.newton_iters, 1);
        assert!(s.u.0.iter().all(|&v| v == 0.0));
        assert!(s.converged);
    }

    #[test]
    fn inactive_constraint_gives_poisson_solution() {
        let (grid, data) = line_problem("0.5", "1", "-10", 101);
        for eps in [0.5, 0.01] {
            let p = PenaltyParams::new(eps, 4.0).unwrap();
            let s = solve_penalized(&grid, &data, &p, &GridFunction::zeros(&grid), &SolveOptions::default()).unwrap();
            for k in 0..grid.node_count() {
                let x = grid.coords(k)[0];
                assert!((s.u.0[k] - 0.25 * (1.0 - x * x)).abs() <= 1e-8);
            }
            assert!(s.khat.0.iter().all(|&k| k == 1.0));
        }
    }

    #[test]
    fn cg_and_direct_agree() {
        let (grid, data) = line_problem("2", "1", "-0.2", 201);
        let p = PenaltyParams::new(0.05, 4.0).unwrap();
        let zero = GridFunction::zeros(&grid);
        let a = solve_penalized(&grid, &data, &p, &zero, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            linear_solver: LinearSolver::Cg,
            ..SolveOptions::default()
        };
        let b = solve_penalized(&grid, &data, &p, &zero, &opts).unwrap();
        assert!(a.u.max_abs_diff(&b.u) < 1e-8);
    }

    #[test]
    fn unresolved_eps_is_refused() {
        let (grid, data) = line_problem("2", "1", "-10", 21);
        let p = PenaltyParams::new(1e-3, 4.0).unwrap();
        let zero = GridFunction::zeros(&grid);
        let err = solve_penalized(&grid, &data, &p, &zero, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::UnresolvedEps { .. }));
        let opts = SolveOptions {
            allow_unresolved_eps: true,
            ..SolveOptions::default()
        };
        let res = continuation_solve(&grid, &data, &[0.1, 1e-3], 4.0, &opts).unwrap();
        assert_eq!(res.warnings.len(), 1);
    }

    #[test]
    fn schedules_are_validated() {
        assert!(check_schedule(&[]).is_err());
        assert!(check_schedule(&[0.1, 0.1]).is_err());
        assert!(check_schedule(&[1.0, 0.1]).is_err());
        assert!(check_schedule(&[0.1, 0.01]).is_ok());
        assert_eq!(geometric_schedule(0.1, 0.1, 3).len(), 3);
    }

    #[test]
    fn nonzero_boundary_init_is_rejected() {
        let (grid, data) = line_problem("2", "1", "-10", 21);
        let mut init = GridFunction::zeros(&grid);
        init.0[0] = 1.0;
        let p = PenaltyParams::new(0.1, 4.0).unwrap();
        assert!(matches!(
            solve_penalized(&grid, &data, &p, &init, &SolveOptions::default()),
            Err(SolveError::InitBoundary { node: 0 })
        ));
    }

    #[test]
    fn iteration_cap_returns_flagged_best_iterate() {
        let (grid, data) = line_problem("2", "1", "-10", 101);
        let p = PenaltyParams::new(0.01, 4.0).unwrap();
        let opts = SolveOptions {
            max_newton_iters: 1,
            ..SolveOptions::default()
        };
        match solve_penalized(&grid, &data, &p, &GridFunction::zeros(&grid), &opts) {
            Err(SolveError::NonConvergence(s)) => {
                assert!(!s.converged);
                assert!(s.residual_norm > opts.residual_tol);
                assert_eq!(s.newton_iters, 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
