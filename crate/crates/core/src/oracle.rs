//! Independent solver for the discrete variational inequality
//!
//! ```text
//! minimise J(v) = 1/2 sum_T |T| |grad_T v|^2 - sum_i vol f_i v_i
//! over K = { v = 0 on the boundary, |grad_T v| <= g_T, v_i >= psi_i }
//! ```
//!
//! by ADMM with the split `z = grad v` (projected onto balls), plus the Euclidean projection onto `K` and
//! a randomized check of the variational inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, CellField, Grid, GridFunction, VectorField};
use crate::penalty;
use crate::problem::SampledProblem;
use crate::sparse::{BandedCholesky, LinearSolveError, SparseOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmOptions {
    /// Initial penalty parameter.
    pub rho: f64,
    pub max_iters: usize,
    /// Weighted L2 tolerance on the split residuals `grad v - z`, `v - w`.
    pub primal_tol: f64,
    /// Weighted L2 tolerance on `rho (z_k - z_{k-1}, w_k - w_{k-1})`.
    pub dual_tol: f64,
    /// Tolerance on `max (|grad u| - g)^+` relative to `max g`.
    pub feasibility_tol: f64,
    /// Over-relaxation factor in `[1, 2)`.
    pub relaxation: f64,
    /// Rebalance `rho` when the residual ratio exceeds this.
    pub balance_ratio: f64,
    /// Stop adapting `rho` after this many iterations.
    pub adapt_until: usize,
    /// Iterations between convergence checks (and history rows).
    pub check_every: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            max_iters: 200_000,
            primal_tol: 1e-10,
            dual_tol: 1e-10,
            feasibility_tol: 1e-7,
            relaxation: 1.6,
            balance_ratio: 10.0,
            adapt_until: 20_000,
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid ADMM options: {0}")]
    Options(String),
    #[error("constraint set looks empty: {0}")]
    IllPosedData(String),
    #[error(transparent)]
    LinearSolve(#[from] LinearSolveError),
    #[error("ADMM stopped after {} iterations (primal {:e}, dual {:e})", .0.iterations, .0.primal_residual, .0.dual_residual)]
    MaxItersExceeded(Box<OracleSolution>),
    #[error("input violates the constraints by {0:e}")]
    Infeasible(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub energy: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `max(v, psi)` for the final iterate `v`.
    pub u: GridFunction,
    pub energy: f64,
    pub history: Vec<HistoryRow>,
    /// `max (|grad u| - g)^+` over cells.
    pub grad_violation: f64,
    /// `max (psi - u)^+` over nodes.
    pub obstacle_violation: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl OracleSolution {
    pub const HISTORY_HEADER: [&'static str; 5] = ["iter", "primal_res", "dual_res", "energy", "rho"];

    pub fn history_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .history
            .iter()
            .map(|h| vec![h.iter as f64, h.primal_res, h.dual_res, h.energy, h.rho])
            .collect();
        crate::io::csv_table(&Self::HISTORY_HEADER, &rows)
    }
}

/// `J(v) = 1/2 sum |T| |grad v|^2 - sum vol f v` over interior nodes.
pub fn energy(grid: &Grid, data: &SampledProblem, v: &GridFunction) -> f64 {
    dirichlet_part(grid, v) - load_part(grid, data, v)
}

pub fn dirichlet_part(grid: &Grid, v: &GridFunction) -> f64 {
    let grad = grid::cell_gradient(grid, v);
    0.5 * grid::cell_inner(grid, &grad, &grad)
}

pub fn load_part(grid: &Grid, data: &SampledProblem, v: &GridFunction) -> f64 {
    grid.interior_volume() * grid.interior_nodes().iter().map(|&k| data.f.0[k] * v.0[k]).sum::<f64>()
}

/// Projection onto the closed ball of radius `radius >= 0`.
pub fn project_ball(z: &[f64], radius: f64) -> Vec<f64> {
    let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= radius {
        z.to_vec()
    } else {
        z.iter().map(|x| x * radius / norm).collect()
    }
}

/// Nodal `max(v, psi)`.
pub fn project_obstacle(v: &GridFunction, psi: &GridFunction) -> GridFunction {
    v.zip_map(psi, f64::max)
}

/// `max (|grad v| - g)^+` over cells (zero without a gradient bound).
pub fn grad_violation(grid: &Grid, data: &SampledProblem, v: &GridFunction) -> f64 {
    match &data.g_cells {
        Some(g) => grid::cell_gradient(grid, v)
            .magnitudes()
            .iter()
            .zip(&g.0)
            .map(|(m, gc)| m - gc)
            .fold(0.0, f64::max),
        None => 0.0,
    }
}

/// `max (psi - v)^+` over nodes (zero without an obstacle).
pub fn obstacle_violation(data: &SampledProblem, v: &GridFunction) -> f64 {
    match &data.psi {
        Some(psi) => psi.0.iter().zip(&v.0).map(|(p, x)| p - x).fold(0.0, f64::max),
        None => 0.0,
    }
}

fn check_options(opts: &AdmmOptions) -> Result<(), OracleError> {
    let bad = |m: &str| Err(OracleError::Options(m.to_string()));
    if !(opts.rho > 0.0) {
        return bad("rho must be positive");
    }
    if !(opts.primal_tol > 0.0 && opts.dual_tol > 0.0 && opts.feasibility_tol > 0.0) {
        return bad("tolerances must be positive");
    }
    if !(1.0..2.0).contains(&opts.relaxation) {
        return bad("relaxation must lie in [1, 2)");
    }
    if !(opts.balance_ratio > 1.0) {
        return bad("balance ratio must exceed 1");
    }
    if opts.check_every == 0 {
        return bad("check_every must be positive");
    }
    Ok(())
}

/// ADMM for `min a/2 |grad v|^2 + b/2 |v|^2 - <base, v>` (cell / node
/// weighted) over `K`, with `base` given per node (divided by the control
/// volume). Only the gradient bound is split off; the obstacle stays in the
/// `v`-update, which is a bound-constrained quadratic solved by a
/// primal-dual active set iteration.
struct Splitting<'a> {
    grid: &'a Grid,
    data: &'a SampledProblem,
    a: f64,
    b: f64,
    base: Vec<f64>,
    laplace: SparseOperator,
}

struct Iterate {
    v: GridFunction,
    z: VectorField,
    y: VectorField,
}

/// Factorization of the `v`-update matrix with the active nodes pinned.
struct Factor {
    rho: f64,
    active: Vec<bool>,
    chol: BandedCholesky,
}

const ACTIVE_SET_MAX_ITERS: usize = 200;

impl<'a> Splitting<'a> {
    fn new(grid: &'a Grid, data: &'a SampledProblem, a: f64, b: f64, base: Vec<f64>) -> Self {
        let ones = CellField(vec![1.0; grid.cell_count()]);
        Splitting {
            grid,
            data,
            a,
            b,
            base,
            laplace: penalty::stiffness(grid, &ones),
        }
    }

    fn pinned(&self, r: usize, active: &[bool]) -> bool {
        self.grid.is_boundary(r) || active[r]
    }

    fn factor(&self, rho: f64, active: Vec<bool>) -> Result<Factor, LinearSolveError> {
        let n = self.grid.node_count();
        let mut triplets = Vec::with_capacity(self.laplace.nnz() + n);
        for r in 0..n {
            if self.pinned(r, &active) {
                triplets.push((r, r, 1.0));
                continue;
            }
            for (c, v) in self.laplace.row(r) {
                if !self.pinned(c, &active) {
                    triplets.push((r, c, (self.a + rho) * v));
                }
            }
            triplets.push((r, r, self.b));
        }
        let chol = BandedCholesky::factor(&SparseOperator::from_triplets(n, triplets))?;
        Ok(Factor { rho, active, chol })
    }

    /// `((a + rho) S + b I) v` on interior rows.
    fn apply(&self, rho: f64, v: &[f64]) -> Vec<f64> {
        let sv = self.laplace.mul_vec(v);
        let mut out = vec![0.0; v.len()];
        for &k in self.grid.interior_nodes() {
            out[k] = (self.a + rho) * sv[k] + self.b * v[k];
        }
        out
    }

    /// Minimises the `v`-update quadratic over `v >= psi`.
    fn solve_v(&self, rhs: &[f64], rho: f64, cache: &mut Option<Factor>) -> Result<Vec<f64>, LinearSolveError> {
        let n = self.grid.node_count();
        let Some(psi) = &self.data.psi else {
            if cache.as_ref().is_none_or(|f| f.rho != rho) {
                *cache = Some(self.factor(rho, vec![false; n])?);
            }
            return cache.as_ref().unwrap().chol.solve(rhs);
        };
        let mut active = match cache {
            Some(f) => f.active.clone(),
            None => vec![false; n],
        };
        let diag: Vec<f64> = self.laplace.diagonal().iter().map(|d| (self.a + rho) * d + self.b).collect();
        let mut v = Vec::new();
        for _ in 0..ACTIVE_SET_MAX_ITERS {
            if cache.as_ref().is_none_or(|f| f.rho != rho || f.active != active) {
                *cache = Some(self.factor(rho, active.clone())?);
            }
            let f = cache.as_ref().unwrap();
            // move pinned values to the right-hand side
            let mut pinned = vec![0.0; n];
            for &k in self.grid.interior_nodes() {
                if active[k] {
                    pinned[k] = psi.0[k];
                }
            }
            let coupling = self.apply(rho, &pinned);
            let mut b = vec![0.0; n];
            for &k in self.grid.interior_nodes() {
                b[k] = if active[k] { psi.0[k] } else { rhs[k] - coupling[k] };
            }
            v = f.chol.solve(&b)?;
            let av = self.apply(rho, &v);
            let mut next = vec![false; n];
            for &k in self.grid.interior_nodes() {
                let mu = if active[k] { av[k] - rhs[k] } else { 0.0 };
                next[k] = mu + diag[k] * (psi.0[k] - v[k]) > 0.0;
            }
            if next == active {
                return Ok(v);
            }
            active = next;
        }
        Ok(v)
    }

    fn start(&self, v0: &GridFunction) -> Iterate {
        Iterate {
            v: v0.clone(),
            z: grid::cell_gradient(self.grid, v0),
            y: VectorField::zeros(self.grid.dim(), self.grid.cell_count()),
        }
    }

    fn objective(&self, v: &GridFunction) -> f64 {
        let grid = self.grid;
        let quad = self.a * dirichlet_part(grid, v)
            + 0.5 * self.b * grid.interior_volume() * grid.interior_nodes().iter().map(|&k| v.0[k] * v.0[k]).sum::<f64>();
        quad - grid.interior_volume() * grid.interior_nodes().iter().map(|&k| self.base[k] * v.0[k]).sum::<f64>()
    }

    /// One ADMM sweep; returns `(primal, dual)` residuals.
    fn sweep(&self, it: &mut Iterate, cache: &mut Option<Factor>, rho: f64, alpha: f64) -> Result<(f64, f64), LinearSolveError> {
        let grid = self.grid;
        let n = grid.node_count();
        let dim = grid.dim();

        let mut zy = it.z.clone();
        for (a, b) in zy.data_mut().iter_mut().zip(it.y.data()) {
            *a -= b;
        }
        let div = grid::cell_divergence(grid, &zy);
        let mut rhs = vec![0.0; n];
        for &k in grid.interior_nodes() {
            rhs[k] = self.base[k] - rho * div.0[k];
        }
        it.v = GridFunction(self.solve_v(&rhs, rho, cache)?);

        // z-update with over-relaxation
        let gv = grid::cell_gradient(grid, &it.v);
        let mut dz2 = 0.0;
        let mut r2 = 0.0;
        let mut hat = [0.0; 2];
        let mut arg = vec![0.0; dim];
        for t in 0..grid.cell_count() {
            for a in 0..dim {
                hat[a] = alpha * gv.get(t)[a] + (1.0 - alpha) * it.z.get(t)[a];
                arg[a] = hat[a] + it.y.get(t)[a];
            }
            let znew = match &self.data.g_cells {
                Some(g) => project_ball(&arg, g.0[t]),
                None => arg.clone(),
            };
            for a in 0..dim {
                it.y.get_mut(t)[a] += hat[a] - znew[a];
                dz2 += (znew[a] - it.z.get(t)[a]).powi(2);
                r2 += (gv.get(t)[a] - znew[a]).powi(2);
                it.z.get_mut(t)[a] = znew[a];
            }
        }
        let vol = grid.cell_volume();
        Ok(((r2 * vol).sqrt(), rho * (dz2 * vol).sqrt()))
    }

    fn run(&self, v0: &GridFunction, opts: &AdmmOptions) -> Result<OracleSolution, OracleError> {
        check_options(opts)?;
        let gmax = self.data.g_cells.as_ref().map_or(1.0, |g| g.max());
        let mut rho = opts.rho;
        let mut cache = None;
        let mut it = self.start(v0);
        let mut history = Vec::new();
        let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iters {
            iterations += 1;
            (primal, dual) = self.sweep(&mut it, &mut cache, rho, opts.relaxation)?;
            if iterations % opts.check_every != 0 {
                continue;
            }
            history.push(HistoryRow {
                iter: iterations,
                primal_res: primal,
                dual_res: dual,
                energy: self.objective(&it.v),
                rho,
            });
            if primal <= opts.primal_tol
                && dual <= opts.dual_tol
                && grad_violation(self.grid, self.data, &it.v) <= opts.feasibility_tol * gmax
            {
                converged = true;
                break;
            }
            if iterations <= opts.adapt_until {
                let scale = if primal > opts.balance_ratio * dual {
                    2.0
                } else if dual > opts.balance_ratio * primal {
                    0.5
                } else {
                    1.0
                };
                if scale != 1.0 {
                    rho *= scale;
                    // scaled dual
                    for v in it.y.data_mut() {
                        *v /= scale;
                    }
                }
            }
        }
        let u = match &self.data.psi {
            Some(psi) => project_obstacle(&it.v, psi),
            None => it.v.clone(),
        };
        let sol = OracleSolution {
            energy: self.objective(&u),
            grad_violation: grad_violation(self.grid, self.data, &u),
            obstacle_violation: obstacle_violation(self.data, &u),
            u,
            history,
            primal_residual: primal,
            dual_residual: dual,
            iterations,
            converged,
        };
        if converged {
            Ok(sol)
        } else {
            Err(OracleError::MaxItersExceeded(Box::new(sol)))
        }
    }
}

/// Solves the discrete variational inequality.
pub fn solve_vi_admm(grid: &Grid, data: &SampledProblem, opts: &AdmmOptions) -> Result<OracleSolution, OracleError> {
    check_nonempty(grid, data, opts)?;
    let split = Splitting::new(grid, data, 1.0, 0.0, data.f.0.clone());
    split.run(&GridFunction::zeros(grid), opts)
}

/// Euclidean (control-volume weighted) projection of `p` onto `K`.
pub fn project_onto_k(
    grid: &Grid,
    data: &SampledProblem,
    p: &GridFunction,
    opts: &AdmmOptions,
) -> Result<OracleSolution, OracleError> {
    let split = Splitting::new(grid, data, 0.0, 1.0, p.0.clone());
    let mut start = p.clone();
    for k in 0..grid.node_count() {
        if grid.is_boundary(k) {
            start.0[k] = 0.0;
        }
    }
    split.run(&start, opts)
}

/// Projects `0` onto `K` and fails when the projection cannot be made
/// feasible.
pub fn check_nonempty(grid: &Grid, data: &SampledProblem, opts: &AdmmOptions) -> Result<(), OracleError> {
    let zero = GridFunction::zeros(grid);
    if grad_violation(grid, data, &zero) == 0.0 && obstacle_violation(data, &zero) == 0.0 {
        return Ok(());
    }
    let probe = AdmmOptions {
        max_iters: opts.max_iters.min(20_000),
        ..opts.clone()
    };
    match project_onto_k(grid, data, &zero, &probe) {
        Ok(_) => Ok(()),
        Err(OracleError::MaxItersExceeded(s)) => {
            let gmax = data.g_cells.as_ref().map_or(1.0, |g| g.max());
            if s.grad_violation <= 1e-4 * gmax {
                Ok(())
            } else {
                Err(OracleError::IllPosedData(format!(
                    "projection of 0 still violates |grad v| <= g by {:e}",
                    s.grad_violation
                )))
            }
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViCheckReport {
    pub trials: usize,
    /// `min over trials of <grad u, grad(v - u)> - (f, v - u)`.
    pub worst_margin: f64,
    /// Scale used for the relative tolerance: `|grad u| |grad(v - u)| + |f| |v - u|`
    /// at the worst trial.
    pub scale: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub margins: Vec<f64>,
}

/// `<grad u, grad(v - u)>_h - (f, v - u)_h` and its natural scale.
pub fn vi_margin(grid: &Grid, data: &SampledProblem, u: &GridFunction, v: &GridFunction) -> (f64, f64) {
    let d = v.zip_map(u, |a, b| a - b);
    let gu = grid::cell_gradient(grid, u);
    let gd = grid::cell_gradient(grid, &d);
    let lin = grid::cell_inner(grid, &gu, &gd);
    let load = load_part(grid, data, &d);
    let vol = grid.interior_volume();
    let dnorm = (vol * grid.interior_nodes().iter().map(|&k| d.0[k] * d.0[k]).sum::<f64>()).sqrt();
    let fnorm = (vol * grid.interior_nodes().iter().map(|&k| data.f.0[k].powi(2)).sum::<f64>()).sqrt();
    let scale = grid::cell_inner(grid, &gu, &gu).sqrt() * grid::cell_inner(grid, &gd, &gd).sqrt() + fnorm * dnorm;
    (lin - load, scale)
}

/// Options for [`vi_residual_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViCheckOptions {
    pub trials: usize,
    pub seed: u64,
    /// Margins down to `-rel_tol * scale` pass.
    pub rel_tol: f64,
    /// Allowed constraint violation of the input.
    pub feasibility_tol: f64,
    pub admm: AdmmOptions,
}

impl Default for ViCheckOptions {
    fn default() -> Self {
        ViCheckOptions {
            trials: 100,
            seed: 0,
            rel_tol: 1e-6,
            feasibility_tol: 1e-6,
            admm: AdmmOptions {
                max_iters: 20_000,
                primal_tol: 1e-9,
                dual_tol: 1e-9,
                ..AdmmOptions::default()
            },
        }
    }
}

/// Random smooth perturbation vanishing on the boundary.
fn random_bump(grid: &Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    let dom = grid.domain();
    let centre: Vec<f64> = dom.bounds().iter().map(|[a, b]| rng.random_range(*a..*b)).collect();
    let width = rng.random_range(0.05..0.5) * dom.diameter();
    let amp = rng.random_range(-1.0..1.0) * width;
    let mut out = GridFunction::zeros(grid);
    for &k in grid.interior_nodes() {
        let x = grid.point(k);
        let r2: f64 = x.iter().zip(&centre).map(|(a, c)| (a - c).powi(2)).sum();
        out.0[k] = amp * (-r2 / (width * width)).exp();
    }
    out
}

/// Tests `<grad u, grad(v - u)> >= (f, v - u)` for random feasible `v` built
/// by projecting perturbations of `u` onto `K`, plus any `extra` fields
/// (which are used as given and must be feasible).
pub fn vi_residual_check(
    grid: &Grid,
    data: &SampledProblem,
    u: &GridFunction,
    extra: &[GridFunction],
    opts: &ViCheckOptions,
) -> Result<ViCheckReport, OracleError> {
    let gmax = data.g_cells.as_ref().map_or(1.0, |g| g.max());
    let viol = grad_violation(grid, data, u).max(obstacle_violation(data, u));
    if viol > opts.feasibility_tol * gmax.max(1.0) {
        return Err(OracleError::Infeasible(viol));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut margins = Vec::with_capacity(opts.trials + extra.len());
    let mut worst = (f64::INFINITY, 0.0);
    let mut consider = |v: &GridFunction, margins: &mut Vec<f64>| {
        let (m, s) = vi_margin(grid, data, u, v);
        margins.push(m);
        if m < worst.0 {
            worst = (m, s);
        }
    };
    for _ in 0..opts.trials {
        let mut p = u.clone();
        for _ in 0..3 {
            let bump = random_bump(grid, &mut rng);
            p = p.zip_map(&bump, |a, b| a + b);
        }
        let v = match project_onto_k(grid, data, &p, &opts.admm) {
            Ok(s) => s.u,
            Err(OracleError::MaxItersExceeded(s)) => s.u,
            Err(e) => return Err(e),
        };
        // discard trials that the projection left visibly infeasible
        if grad_violation(grid, data, &v) > 1e-6 * gmax {
            continue;
        }
        consider(&v, &mut margins);
    }
    for v in extra {
        consider(v, &mut margins);
    }
    let tolerance = opts.rel_tol * worst.1;
    Ok(ViCheckReport {
        trials: margins.len(),
        worst_margin: worst.0,
        scale: worst.1,
        tolerance,
        passed: worst.0 >= -tolerance,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::problem::Problem;

    fn sampled(prob: &Problem, n: usize) -> (Grid, SampledProblem) {
        let grid = Grid::uniform(prob.domain.clone(), n).unwrap();
        let data = prob.sample(&grid).unwrap();
        (grid, data)
    }

    fn line(f: &str, g: &str, psi: &str) -> Problem {
        Problem::new(Domain::interval(-1.0, 1.0).unwrap(), f, Some(g), Some(psi)).unwrap()
    }

    #[test]
    fn ball_projection_examples() {
        assert_eq!(project_ball(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        let p = project_ball(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_ball(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn obstacle_projection_examples() {
        let psi = GridFunction(vec![0.0, 0.0, 0.0]);
        assert_eq!(project_obstacle(&GridFunction(vec![1.0, 2.0, 0.5]), &psi).0, vec![1.0, 2.0, 0.5]);
        assert_eq!(project_obstacle(&GridFunction(vec![-1.0; 3]), &psi).0, vec![0.0; 3]);
        let v = GridFunction(vec![-0.5, 0.25, -2.0]);
        let psi = GridFunction(vec![-1.0, 1.0, -2.5]);
        assert_eq!(project_obstacle(&v, &psi).0, vec![-0.5, 1.0, -2.0]);
    }

    #[test]
    fn energy_examples() {
        let (grid, data) = sampled(&line("0.5", "1", "-10"), 201);
        assert_eq!(energy(&grid, &data, &GridFunction::zeros(&grid)), 0.0);
        let v = grid.sample(|x| Ok::<_, ()>(0.25 * (1.0 - x[0] * x[0]))).unwrap();
        assert!((energy(&grid, &data, &v) + 1.0 / 12.0).abs() < 1e-4);
        let v2 = v.map(|x| 2.0 * x);
        let direct = energy(&grid, &data, &v2);
        let split = 4.0 * dirichlet_part(&grid, &v) - 2.0 * load_part(&grid, &data, &v);
        assert!((direct - split).abs() < 1e-14);
    }

    #[test]
    fn zero_force_gives_zero() {
        let (grid, data) = sampled(&line("0", "1", "-1"), 41);
        let s = solve_vi_admm(&grid, &data, &AdmmOptions::default()).unwrap();
        assert!(s.u.0.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn elastic_plastic_closed_form() {
        let (grid, data) = sampled(&line("2", "1", "-10"), 401);
        let s = solve_vi_admm(&grid, &data, &AdmmOptions::default()).unwrap();
        let err = (0..grid.node_count())
            .map(|k| {
                let x = grid.coords(k)[0].abs();
                let exact = if x >= 0.5 { 1.0 - x } else { 0.75 - x * x };
                (s.u.0[k] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "max error {err}");
        assert!(s.grad_violation <= 1e-6);
        assert_eq!(s.obstacle_violation, 0.0);
    }

    #[test]
    fn infeasible_data_is_reported() {
        // psi = 0.9 inside forces slopes of 9 next to the boundary
        let prob = line("0", "1", "0.9 - 0.9*abs(x)^40");
        let (grid, data) = sampled(&prob, 41);
        let opts = AdmmOptions {
            max_iters: 2000,
            ..AdmmOptions::default()
        };
        assert!(matches!(
            solve_vi_admm(&grid, &data, &opts),
            Err(OracleError::IllPosedData(_))
        ));
    }

    #[test]
    fn projection_onto_k_is_feasible_and_idempotent() {
        let (grid, data) = sampled(&line("0", "1", "-0.3"), 101);
        let p = grid.sample(|x| Ok::<_, ()>(-2.0 * (1.0 - x[0] * x[0]))).unwrap();
        let q = project_onto_k(&grid, &data, &p, &AdmmOptions::default()).unwrap();
        assert!(q.grad_violation <= 1e-6);
        assert!(q.u.min() >= -0.3);
        let again = project_onto_k(&grid, &data, &q.u, &AdmmOptions::default()).unwrap();
        assert!(again.u.max_abs_diff(&q.u) < 1e-6);
    }

    #[test]
    fn vi_check_accepts_solution_and_rejects_perturbation() {
        let (grid, data) = sampled(&line("2", "1", "-10"), 101);
        let sol = solve_vi_admm(&grid, &data, &AdmmOptions::default()).unwrap();
        let opts = ViCheckOptions {
            trials: 20,
            ..ViCheckOptions::default()
        };
        let rep = vi_residual_check(&grid, &data, &sol.u, &[], &opts).unwrap();
        assert!(rep.passed, "worst margin {} tol {}", rep.worst_margin, rep.tolerance);

        let bad = sol.u.map(|v| 0.8 * v);
        let rep = vi_residual_check(&grid, &data, &bad, &[sol.u.clone()], &opts).unwrap();
        assert!(!rep.passed);
        assert!(rep.worst_margin < 0.0);
    }

    #[test]
    fn unconstrained_minimizer_has_zero_margins() {
        let (grid, data) = sampled(&line("0.5", "1", "-10"), 101);
        let u = grid.sample(|x| Ok::<_, ()>(0.25 * (1.0 - x[0] * x[0]))).unwrap();
        let opts = ViCheckOptions {
            trials: 10,
            ..ViCheckOptions::default()
        };
        let rep = vi_residual_check(&grid, &data, &u, &[], &opts).unwrap();
        assert!(rep.margins.iter().all(|m| m.abs() <= 1e-12), "{:?}", rep.margins);
    }
}
