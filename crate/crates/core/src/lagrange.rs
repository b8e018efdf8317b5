//! Recovery of the multiplier triple `(u, lambda, chi)` from a continuation
//! run, and checks of the limit system
//!
//! ```text
//! -div(lambda grad u) = f + (-laplacian(psi) - f)^+ chi_{u = psi}
//! lambda >= 1,  (lambda - 1)(|grad u| - g) = 0,  |grad u| <= g,  u >= psi
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, CellField, Grid, GridFunction, VectorField};
use crate::io;
use crate::oracle::{self, OracleError, OracleSolution, ViCheckOptions, ViCheckReport};
use crate::problem::SampledProblem;
use crate::solver::{ContinuationResult, PenalizedSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LagrangeError {
    #[error("need at least 2 converged continuation entries, found {0}")]
    NoConvergedEntries(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Tolerances that define the contact masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactTolerances {
    /// Cells with `|grad u| >= g - tol_g` are in gradient contact.
    pub tol_g: f64,
    /// Nodes with `u <= psi + tol_psi` are candidates for obstacle contact.
    pub tol_psi: f64,
    /// Candidates must also have `theta <= -1 + tol_theta`.
    pub tol_theta: f64,
}

impl ContactTolerances {
    pub fn for_eps(eps_min: f64, g_max: f64) -> ContactTolerances {
        ContactTolerances {
            tol_g: eps_min.sqrt() * g_max,
            tol_psi: 10.0 * eps_min,
            tol_theta: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeFields {
    pub eps: f64,
    pub u: GridFunction,
    /// Multiplier per cell (`k_eps` at the smallest `eps`).
    pub lambda: CellField,
    /// Raw obstacle multiplier `theta_eps(u - psi)`, in `[-1, 0]`.
    pub chi: GridFunction,
    /// `-1` on the obstacle-contact mask, `0` elsewhere.
    pub chi_binary: GridFunction,
    pub grad: VectorField,
    /// `lambda grad u` per cell.
    pub flux: VectorField,
    /// Per cell.
    pub grad_contact: Vec<bool>,
    /// Per node.
    pub obstacle_contact: Vec<bool>,
    pub tolerances: ContactTolerances,
}

impl LagrangeFields {
    pub fn min_lambda(&self) -> f64 {
        self.lambda.min()
    }

    /// Obstacle-contact nodes that touch a gradient-contact cell.
    pub fn mask_overlap(&self, grid: &Grid) -> usize {
        let node_cells = grid.node_cells();
        (0..grid.node_count())
            .filter(|&k| self.obstacle_contact[k] && node_cells[k].iter().any(|&t| self.grad_contact[t]))
            .count()
    }

    pub fn node_csv(&self, grid: &Grid) -> String {
        let lam = self.lambda.to_nodal(grid);
        let mask: Vec<f64> = self.obstacle_contact.iter().map(|&b| b as u8 as f64).collect();
        io::node_csv(
            grid,
            &[
                ("u", &self.u.0),
                ("lambda", &lam.0),
                ("chi", &self.chi.0),
                ("chi_binary", &self.chi_binary.0),
                ("obstacle_contact", &mask),
            ],
        )
    }

    pub fn cell_csv(&self, grid: &Grid) -> String {
        let mask: Vec<f64> = self.grad_contact.iter().map(|&b| b as u8 as f64).collect();
        let comps: Vec<Vec<f64>> = (0..grid.dim()).map(|a| self.flux.component(a)).collect();
        let names = ["flux_x", "flux_y"];
        let mut cols: Vec<(&str, &[f64])> = vec![("lambda", &self.lambda.0)];
        for (a, c) in comps.iter().enumerate() {
            cols.push((names[a], c));
        }
        cols.push(("grad_contact", &mask));
        io::cell_csv(grid, &cols)
    }
}

fn converged_entries(cr: &ContinuationResult) -> Result<Vec<&PenalizedSolution>, LagrangeError> {
    let conv: Vec<_> = cr.converged().collect();
    if conv.len() < 2 {
        return Err(LagrangeError::NoConvergedEntries(conv.len()));
    }
    Ok(conv)
}

/// Takes the fields of the smallest converged `eps` and builds the masks.
pub fn extract_fields(
    grid: &Grid,
    data: &SampledProblem,
    cr: &ContinuationResult,
    tol: ContactTolerances,
) -> Result<LagrangeFields, LagrangeError> {
    let conv = converged_entries(cr)?;
    let fin = conv
        .iter()
        .min_by(|a, b| a.eps.total_cmp(&b.eps))
        .expect("at least two entries");
    Ok(fields_from(grid, data, fin, tol))
}

/// Builds [`LagrangeFields`] from a single penalized solution.
pub fn fields_from(grid: &Grid, data: &SampledProblem, sol: &PenalizedSolution, tol: ContactTolerances) -> LagrangeFields {
    let grad = grid::cell_gradient(grid, &sol.u);
    let flux = grad.scaled(&sol.khat.0);
    let grad_contact = match &data.g_cells {
        Some(g) => grad.magnitudes().iter().zip(&g.0).map(|(m, gc)| *m >= gc - tol.tol_g).collect(),
        None => vec![false; grid.cell_count()],
    };
    let obstacle_contact: Vec<bool> = match &data.psi {
        Some(psi) => (0..grid.node_count())
            .map(|k| {
                !grid.is_boundary(k) && sol.u.0[k] <= psi.0[k] + tol.tol_psi && sol.theta.0[k] <= -1.0 + tol.tol_theta
            })
            .collect(),
        None => vec![false; grid.node_count()],
    };
    let chi_binary = GridFunction(obstacle_contact.iter().map(|&b| if b { -1.0 } else { 0.0 }).collect());
    LagrangeFields {
        eps: sol.eps,
        u: sol.u.clone(),
        lambda: sol.khat.clone(),
        chi: sol.theta.clone(),
        chi_binary,
        grad,
        flux,
        grad_contact,
        obstacle_contact,
        tolerances: tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    /// Discrete L2 norm of `-div(lambda grad u) - c chi_{u=psi} - f`
    /// with `c = (-laplacian(psi) - f)^+`.
    pub eq_residual_norm: f64,
    /// The same with the raw `chi` in place of the contact indicator.
    pub eq_residual_raw_norm: f64,
    /// L1 norm of `(lambda - 1)(|grad u| - g)`.
    pub comp_grad: f64,
    /// L1 norm of `c chi (u - psi)`.
    pub comp_obs: f64,
    pub min_lambda: f64,
    /// `max(|grad u| - g)` (signed).
    pub max_grad_excess: f64,
    /// `min(u - psi)` (signed).
    pub min_obstacle_gap: f64,
    /// Max over interior contact nodes of `|(-laplacian(u) - f) - c|`.
    pub sign_identity_residual: f64,
    pub grad_contact_cells: usize,
    pub obstacle_contact_nodes: usize,
    pub mask_overlap: usize,
}

/// Acceptance thresholds for [`ComplementarityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_lambda: f64,
    pub comp_grad: f64,
    pub comp_obs: f64,
    pub eq_residual: f64,
    pub sign_identity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_lambda: 1.0 - 1e-12,
            comp_grad: 1e-2,
            comp_obs: 1e-3,
            eq_residual: 5e-2,
            sign_identity: 0.1,
        }
    }
}

impl ComplementarityReport {
    /// Names of the lines that fail, each with the offending value.
    pub fn failures(&self, t: &Thresholds) -> Vec<String> {
        let mut out = Vec::new();
        if self.min_lambda < t.min_lambda {
            out.push(format!("lambda >= 1: min_lambda = {:e}", self.min_lambda));
        }
        if self.comp_grad > t.comp_grad {
            out.push(format!("(lambda - 1)(|grad u| - g) = 0: comp_grad = {:e}", self.comp_grad));
        }
        if self.comp_obs > t.comp_obs {
            out.push(format!("chi (u - psi) = 0: comp_obs = {:e}", self.comp_obs));
        }
        if self.eq_residual_norm > t.eq_residual {
            out.push(format!(
                "-div(lambda grad u) = f + c chi: eq_residual_norm = {:e}",
                self.eq_residual_norm
            ));
        }
        if self.sign_identity_residual > t.sign_identity {
            out.push(format!(
                "-laplacian(u) - f = c on contact: sign_identity_residual = {:e}",
                self.sign_identity_residual
            ));
        }
        out
    }
}

fn interior_l2(grid: &Grid, r: &[f64]) -> f64 {
    (grid.interior_volume() * grid.interior_nodes().iter().map(|&k| r[k] * r[k]).sum::<f64>()).sqrt()
}

pub fn complementarity_report(grid: &Grid, data: &SampledProblem, lf: &LagrangeFields) -> ComplementarityReport {
    let zero = vec![0.0; grid.node_count()];
    let c = data.obstacle_weight.as_ref().map_or(&zero, |w| &w.0);
    let div_flux = grid::cell_divergence(grid, &lf.flux);
    let mut r_bin = vec![0.0; grid.node_count()];
    let mut r_raw = vec![0.0; grid.node_count()];
    for &k in grid.interior_nodes() {
        let base = -div_flux.0[k] - data.f.0[k];
        r_bin[k] = base + c[k] * lf.chi_binary.0[k];
        r_raw[k] = base + c[k] * lf.chi.0[k];
    }

    let vol = grid.cell_volume();
    let mags = lf.grad.magnitudes();
    let (comp_grad, max_grad_excess) = match &data.g_cells {
        Some(g) => (
            vol * (0..grid.cell_count())
                .map(|t| ((lf.lambda.0[t] - 1.0) * (mags[t] - g.0[t])).abs())
                .sum::<f64>(),
            (0..grid.cell_count()).map(|t| mags[t] - g.0[t]).fold(f64::NEG_INFINITY, f64::max),
        ),
        None => (0.0, f64::NEG_INFINITY),
    };

    let (comp_obs, min_obstacle_gap) = match &data.psi {
        Some(psi) => (
            grid.interior_volume()
                * grid
                    .interior_nodes()
                    .iter()
                    .map(|&k| (c[k] * lf.chi.0[k] * (lf.u.0[k] - psi.0[k])).abs())
                    .sum::<f64>(),
            lf.u.zip_map(psi, |a, b| a - b).min(),
        ),
        None => (0.0, f64::INFINITY),
    };

    let lap = grid::cell_divergence(grid, &lf.grad);
    let sign_identity_residual = grid
        .interior_nodes()
        .iter()
        .filter(|&&k| lf.obstacle_contact[k])
        .map(|&k| ((-lap.0[k] - data.f.0[k]) - c[k]).abs())
        .fold(0.0, f64::max);

    ComplementarityReport {
        eq_residual_norm: interior_l2(grid, &r_bin),
        eq_residual_raw_norm: interior_l2(grid, &r_raw),
        comp_grad,
        comp_obs,
        min_lambda: lf.min_lambda(),
        max_grad_excess,
        min_obstacle_gap,
        sign_identity_residual,
        grad_contact_cells: lf.grad_contact.iter().filter(|&&b| b).count(),
        obstacle_contact_nodes: lf.obstacle_contact.iter().filter(|&&b| b).count(),
        mask_overlap: lf.mask_overlap(grid),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxIdentityRow {
    pub eps: f64,
    /// `int khat_eps |grad u_eps|^2`
    pub energy: f64,
    /// `|energy - int lambda |grad u|^2| / int lambda |grad u|^2`
    pub energy_rel_gap: f64,
    /// `int khat_eps |grad(u_eps - u)|^2`
    pub strong_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxIdentityReport {
    pub rows: Vec<FluxIdentityRow>,
    /// `int lambda |grad u|^2` at the finest entry.
    pub limit_energy: f64,
    /// `int (f - c chi) u` at the finest entry, the other side of the
    /// identity obtained by testing the equation with `u`.
    pub tested_equation: f64,
    /// Relative gap between `limit_energy` and `tested_equation`.
    pub identity_rel_gap: f64,
    /// Whether `strong_gap` decreases along the schedule.
    pub strong_gap_decreasing: bool,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn lambda_flux_identity_check(
    grid: &Grid,
    data: &SampledProblem,
    cr: &ContinuationResult,
) -> Result<FluxIdentityReport, LagrangeError> {
    let mut conv = converged_entries(cr)?;
    conv.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let fin = *conv.last().expect("at least two entries");
    let weighted = |k: &CellField, w: &VectorField| -> f64 {
        let m = w.magnitudes();
        grid.cell_volume() * k.0.iter().zip(&m).map(|(k, m)| k * m * m).sum::<f64>()
    };
    let limit_energy = weighted(&fin.khat, &fin.grad);
    let rows: Vec<FluxIdentityRow> = conv
        .iter()
        .map(|e| {
            let energy = weighted(&e.khat, &e.grad);
            let diff = grid::cell_gradient(grid, &e.u.zip_map(&fin.u, |a, b| a - b));
            FluxIdentityRow {
                eps: e.eps,
                energy,
                energy_rel_gap: rel_gap(energy, limit_energy),
                strong_gap: weighted(&e.khat, &diff),
            }
        })
        .collect();
    let zero = vec![0.0; grid.node_count()];
    let c = data.obstacle_weight.as_ref().map_or(&zero, |w| &w.0);
    let tested_equation = grid.interior_volume()
        * grid
            .interior_nodes()
            .iter()
            .map(|&k| (data.f.0[k] - c[k] * fin.theta.0[k]) * fin.u.0[k])
            .sum::<f64>();
    let gaps: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| r.strong_gap).collect();
    Ok(FluxIdentityReport {
        strong_gap_decreasing: gaps.windows(2).all(|w| w[1] < w[0]),
        identity_rel_gap: rel_gap(limit_energy, tested_equation),
        limit_energy,
        tested_equation,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Report {
    pub vi: ViCheckReport,
    /// `max |u - u_oracle|`.
    pub oracle_diff: f64,
    pub oracle_converged: bool,
}

/// Checks that the extracted `u` solves the variational inequality, both by
/// random feasible trials and against the ADMM solution (which is also
/// offered as a trial).
pub fn step2_vi_check(
    grid: &Grid,
    data: &SampledProblem,
    lf: &LagrangeFields,
    oracle_solution: &OracleSolution,
    opts: &ViCheckOptions,
) -> Result<Step2Report, LagrangeError> {
    let vi = oracle::vi_residual_check(grid, data, &lf.u, std::slice::from_ref(&oracle_solution.u), opts)?;
    Ok(Step2Report {
        vi,
        oracle_diff: lf.u.max_abs_diff(&oracle_solution.u),
        oracle_converged: oracle_solution.converged,
    })
}

/// VI-check options suited to a penalized solution at `eps`: the input may
/// violate the constraints by `O(eps)`, and margins are allowed the same
/// relative slack.
pub fn penalized_vi_options(eps: f64, trials: usize, seed: u64) -> ViCheckOptions {
    ViCheckOptions {
        trials,
        seed,
        rel_tol: 10.0 * eps,
        feasibility_tol: 10.0 * eps,
        ..ViCheckOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::oracle::{solve_vi_admm, AdmmOptions};
    use crate::problem::Problem;
    use crate::solver::{continuation_solve, default_schedule, SolveOptions};

    fn run(prob: &Problem, n: usize) -> (Grid, SampledProblem, ContinuationResult) {
        let grid = Grid::uniform(prob.domain.clone(), n).unwrap();
        let data = prob.sample(&grid).unwrap();
        let cr = continuation_solve(&grid, &data, &default_schedule(), 4.0, &SolveOptions::default()).unwrap();
        (grid, data, cr)
    }

    fn line(f: &str, g: &str, psi: &str) -> Problem {
        Problem::new(Domain::interval(-1.0, 1.0).unwrap(), f, Some(g), Some(psi))
            .unwrap()
            .with_laplacian_psi("0")
            .unwrap()
    }

    fn fields(grid: &Grid, data: &SampledProblem, cr: &ContinuationResult) -> LagrangeFields {
        extract_fields(grid, data, cr, ContactTolerances::for_eps(1e-4, 1.0)).unwrap()
    }

    #[test]
    fn trivial_problem() {
        let (grid, data, cr) = run(&line("0", "1", "-1"), 201);
        let lf = fields(&grid, &data, &cr);
        assert!(lf.lambda.0.iter().all(|&l| l == 1.0));
        assert!(lf.chi.0.iter().all(|&c| c == 0.0));
        assert!(!lf.grad_contact.iter().any(|&b| b));
        assert!(!lf.obstacle_contact.iter().any(|&b| b));
        let rep = complementarity_report(&grid, &data, &lf);
        for v in [rep.eq_residual_norm, rep.comp_grad, rep.comp_obs, rep.sign_identity_residual] {
            assert!(v <= 1e-10);
        }
        let fi = lambda_flux_identity_check(&grid, &data, &cr).unwrap();
        assert_eq!(fi.limit_energy, 0.0);
        assert_eq!(fi.tested_equation, 0.0);
        let o = solve_vi_admm(&grid, &data, &AdmmOptions::default()).unwrap();
        let s2 = step2_vi_check(&grid, &data, &lf, &o, &penalized_vi_options(1e-4, 5, 0)).unwrap();
        assert_eq!(s2.oracle_diff, 0.0);
    }

    #[test]
    fn needs_two_converged_entries() {
        let prob = line("0", "1", "-1");
        let grid = Grid::uniform(prob.domain.clone(), 11).unwrap();
        let data = prob.sample(&grid).unwrap();
        let cr = continuation_solve(&grid, &data, &[0.1], 4.0, &SolveOptions::default()).unwrap();
        assert_eq!(
            extract_fields(&grid, &data, &cr, ContactTolerances::for_eps(0.1, 1.0)),
            Err(LagrangeError::NoConvergedEntries(1))
        );
    }

    #[test]
    fn inactive_constraint_gives_unit_multiplier() {
        let (grid, data, cr) = run(&line("0.5", "1", "-10"), 201);
        let lf = fields(&grid, &data, &cr);
        assert!(lf.lambda.0.iter().all(|&l| (l - 1.0).abs() <= 1e-6));
    }

    #[test]
    fn elastic_plastic_multiplier() {
        let (grid, data, cr) = run(&line("2", "1", "-10"), 2001);
        let lf = fields(&grid, &data, &cr);
        let mut worst: f64 = 0.0;
        for (t, cell) in grid.cells().iter().enumerate() {
            let x = cell.centroid[0].abs();
            let exact = if x > 0.5 { 1.0 + 2.0 * (x - 0.5) } else { 1.0 };
            worst = worst.max((lf.lambda.0[t] - exact).abs() / exact);
        }
        assert!(worst <= 0.05, "relative error {worst}");
        let rep = complementarity_report(&grid, &data, &lf);
        assert!(rep.min_lambda >= 1.0 - 1e-12);
        assert!(rep.comp_grad <= 1e-2, "{}", rep.comp_grad);
        assert!(rep.eq_residual_norm <= 5e-2, "{}", rep.eq_residual_norm);
        assert!(rep.failures(&Thresholds::default()).is_empty());

        let fi = lambda_flux_identity_check(&grid, &data, &cr).unwrap();
        assert!(fi.identity_rel_gap <= 0.05, "{}", fi.identity_rel_gap);
        assert!(fi.strong_gap_decreasing, "{:?}", fi.rows);

        let mut doubled = lf.clone();
        doubled.lambda = CellField(lf.lambda.0.iter().map(|l| 2.0 * l).collect());
        doubled.flux = doubled.grad.scaled(&doubled.lambda.0);
        let bad = complementarity_report(&grid, &data, &doubled);
        assert!(bad.failures(&Thresholds::default()).iter().any(|f| f.contains("comp_grad")));
    }

    #[test]
    fn obstacle_contact_identity() {
        let (grid, data, cr) = run(&line("-4", "1", "-0.3"), 2001);
        let lf = fields(&grid, &data, &cr);
        let rep = complementarity_report(&grid, &data, &lf);
        assert!(rep.obstacle_contact_nodes > 0);
        assert!(rep.sign_identity_residual <= 0.1, "{}", rep.sign_identity_residual);
        assert!(rep.comp_obs <= 1e-3, "{}", rep.comp_obs);
        assert_eq!(rep.mask_overlap, 0);
        assert!(rep.min_obstacle_gap >= -1e-4 - 1e-12);
        // chi vanishes away from the obstacle
        let psi = data.psi.as_ref().unwrap();
        for k in 0..grid.node_count() {
            if lf.u.0[k] > psi.0[k] + lf.tolerances.tol_psi {
                assert!(lf.chi.0[k].abs() <= 1e-8);
            }
            assert!((-1.0..=0.0).contains(&lf.chi.0[k]));
        }
    }
}
