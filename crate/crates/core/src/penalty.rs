//! The penalty functions `k_eps`, `theta_eps` and assembly of the penalized
//! system
//!
//! ```text
//! -div(k_eps(|grad u|^2 - g^2) grad u) + (-lap psi - f)^+ theta_eps(u - psi) = f
//! ```
//!
//! The discrete system is the gradient of the convex energy
//!
//! ```text
//! E(u) = sum_T |T| K(|grad_T u|^2 - g_T^2) / 2 + sum_i vol (c_i Theta(u_i - psi_i) - f_i u_i)
//! ```
//!
//! with `K' = k_eps`, `Theta' = theta_eps` and `c = (-lap psi - f)^+`, scaled
//! by the control volume. Its Jacobian is the Hessian of `E`, hence symmetric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, CellField, Grid, GridFunction, VectorField};
use crate::problem::{Problem, ProblemError, SampledProblem};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("eps must lie in (0, 1), got {0}")]
    Eps(f64),
    #[error("exponent r must exceed max(2, d/2) = {bound}, got {r}")]
    Exponent { r: f64, bound: f64 },
}

/// Default exponent in `k_eps`.
pub const DEFAULT_R: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub eps: f64,
    pub r: f64,
}

impl PenaltyParams {
    pub fn new(eps: f64, r: f64) -> Result<PenaltyParams, PenaltyError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(PenaltyError::Eps(eps));
        }
        if !(r > 2.0) || !r.is_finite() {
            return Err(PenaltyError::Exponent { r, bound: 2.0 });
        }
        Ok(PenaltyParams { eps, r })
    }

    /// Also enforces `r > d/2`.
    pub fn for_dim(eps: f64, r: f64, dim: usize) -> Result<PenaltyParams, PenaltyError> {
        let p = PenaltyParams::new(eps, r)?;
        let bound = (dim as f64 / 2.0).max(2.0);
        if !(r > bound) {
            return Err(PenaltyError::Exponent { r, bound });
        }
        Ok(p)
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

/// `1` for `s <= 0`, `1 + (s/eps)^r` for `s > 0`.
pub fn k_eps(s: f64, p: &PenaltyParams) -> f64 {
    if s <= 0.0 {
        1.0
    } else {
        1.0 + pow(s / p.eps, p.r)
    }
}

/// Derivative of [`k_eps`]: `(r/eps)(s/eps)^(r-1)` for `s > 0`.
pub fn dk_eps(s: f64, p: &PenaltyParams) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        p.r / p.eps * pow(s / p.eps, p.r - 1.0)
    }
}

/// `-1` for `s <= -eps`, `s/eps` for `-eps < s < 0`, `0` for `s >= 0`.
pub fn theta_eps(s: f64, p: &PenaltyParams) -> f64 {
    if s >= 0.0 {
        0.0
    } else if s > -p.eps {
        s / p.eps
    } else {
        -1.0
    }
}

/// A.e. derivative of [`theta_eps`]: `1/eps` on the open linear branch, `0`
/// elsewhere including the kinks.
pub fn dtheta_eps(s: f64, p: &PenaltyParams) -> f64 {
    if s < 0.0 && s > -p.eps {
        1.0 / p.eps
    } else {
        0.0
    }
}

/// Primitive of [`k_eps`] vanishing at 0.
pub fn k_primitive(s: f64, p: &PenaltyParams) -> f64 {
    if s <= 0.0 {
        s
    } else {
        s + p.eps * pow(s / p.eps, p.r + 1.0) / (p.r + 1.0)
    }
}

/// Primitive of [`theta_eps`] vanishing on `[0, inf)`.
pub fn theta_primitive(s: f64, p: &PenaltyParams) -> f64 {
    if s >= 0.0 {
        0.0
    } else if s > -p.eps {
        s * s / (2.0 * p.eps)
    } else {
        -s - p.eps / 2.0
    }
}

/// `phi(s) = k_eps(s^2 - a) s`, nondecreasing in `s` for every `a`.
pub fn phi_eps(s: f64, a: f64, p: &PenaltyParams) -> f64 {
    k_eps(s * s - a, p) * s
}

/// Residual, Jacobian and coefficient fields at one iterate.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Strong-form residual at interior nodes, `u` itself on the boundary.
    pub residual: GridFunction,
    /// Derivative of `residual`; identity rows and columns on the boundary.
    pub jacobian: SparseOperator,
    /// `k_eps(|grad_T u|^2 - g_T^2)` per cell.
    pub khat: CellField,
    /// `theta_eps(u - psi)` per node (zero without an obstacle).
    pub theta: GridFunction,
    /// Cell gradients of `u`.
    pub grad: VectorField,
}

/// Per-cell `|grad u|^2 - g^2` (or `-inf` without a gradient constraint).
pub fn constraint_slack(grid: &Grid, data: &SampledProblem, grad: &VectorField) -> Vec<f64> {
    let mags = grad.magnitudes();
    match &data.g_cells {
        Some(g) => mags.iter().zip(&g.0).map(|(m, gc)| m * m - gc * gc).collect(),
        None => vec![f64::NEG_INFINITY; grid.cell_count()],
    }
}

/// `theta_eps(u - psi)` at every node; zero on the boundary and without an
/// obstacle.
pub fn theta_field(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> GridFunction {
    match &data.psi {
        Some(psi) => GridFunction(
            (0..grid.node_count())
                .map(|k| if grid.is_boundary(k) { 0.0 } else { theta_eps(u.0[k] - psi.0[k], p) })
                .collect(),
        ),
        None => GridFunction::zeros(grid),
    }
}

fn obstacle_weight(grid: &Grid, data: &SampledProblem) -> Vec<f64> {
    match &data.obstacle_weight {
        Some(c) => c.0.clone(),
        None => vec![0.0; grid.node_count()],
    }
}

/// `-div(k grad u)` at interior nodes for a per-cell coefficient `k`.
pub fn flux_divergence(grid: &Grid, k: &CellField, grad: &VectorField) -> GridFunction {
    let mut out = grid::cell_divergence(grid, &grad.scaled(&k.0));
    for v in &mut out.0 {
        *v = -*v;
    }
    out
}

/// Principal part `A(u) = -div(k_eps(|grad u|^2 - g^2) grad u)`.
pub fn principal_operator(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> GridFunction {
    let grad = grid::cell_gradient(grid, u);
    let slack = constraint_slack(grid, data, &grad);
    let khat = CellField(slack.iter().map(|&s| k_eps(s, p)).collect());
    flux_divergence(grid, &khat, &grad)
}

fn finish_residual(
    grid: &Grid,
    data: &SampledProblem,
    u: &GridFunction,
    mut flux: GridFunction,
    theta: &GridFunction,
    c: &[f64],
) -> GridFunction {
    for k in 0..grid.node_count() {
        flux.0[k] = if grid.is_boundary(k) {
            u.0[k]
        } else {
            flux.0[k] + c[k] * theta.0[k] - data.f.0[k]
        };
    }
    flux
}

/// The residual alone, without the Jacobian.
pub fn residual(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> GridFunction {
    let flux = principal_operator(grid, data, u, p);
    let theta = theta_field(grid, data, u, p);
    finish_residual(grid, data, u, flux, &theta, &obstacle_weight(grid, data))
}

/// Assembles residual and Jacobian at `u`.
pub fn assemble(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> AssembledSystem {
    let n = grid.node_count();
    let d = grid.dim();
    let grad = grid::cell_gradient(grid, u);
    let slack = constraint_slack(grid, data, &grad);
    let khat = CellField(slack.iter().map(|&s| k_eps(s, p)).collect());
    let theta = theta_field(grid, data, u, p);
    let c = obstacle_weight(grid, data);
    let residual = finish_residual(grid, data, u, flux_divergence(grid, &khat, &grad), &theta, &c);

    let scale = grid.cell_volume() / grid.interior_volume();
    let h = grid.spacing();
    let mut triplets = Vec::with_capacity(grid.cell_count() * 9 + n);
    for (t, cell) in grid.cells().iter().enumerate() {
        let xi = grad.get(t);
        let dk = dk_eps(slack[t], p);
        // H = k I + 2 k' xi xi^T in gradient coordinates
        let mut hess = [[0.0; 2]; 2];
        for a in 0..d {
            for b in 0..d {
                hess[a][b] = 2.0 * dk * xi[a] * xi[b];
            }
            hess[a][a] += khat.0[t];
        }
        for a in 0..d {
            let (pa, ma) = cell.diffs[a];
            for b in 0..d {
                let (pb, mb) = cell.diffs[b];
                let w = scale * hess[a][b] / (h[a] * h[b]);
                if w == 0.0 {
                    continue;
                }
                for (i, si) in [(pa, 1.0), (ma, -1.0)] {
                    if grid.is_boundary(i) {
                        continue;
                    }
                    for (j, sj) in [(pb, 1.0), (mb, -1.0)] {
                        if grid.is_boundary(j) {
                            continue;
                        }
                        triplets.push((i, j, si * sj * w));
                    }
                }
            }
        }
    }
    for k in 0..n {
        if grid.is_boundary(k) {
            triplets.push((k, k, 1.0));
        } else if let Some(psi) = &data.psi {
            let dt = dtheta_eps(u.0[k] - psi.0[k], p);
            if dt != 0.0 {
                triplets.push((k, k, c[k] * dt));
            }
        }
    }
    AssembledSystem {
        residual,
        jacobian: SparseOperator::from_triplets(n, triplets),
        khat,
        theta,
        grad,
    }
}

/// Matrix of `v -> -div(k grad v)` at interior nodes with identity rows and
/// columns on the boundary.
pub fn stiffness(grid: &Grid, k: &CellField) -> SparseOperator {
    let n = grid.node_count();
    let scale = grid.cell_volume() / grid.interior_volume();
    let h = grid.spacing();
    let mut triplets = Vec::with_capacity(grid.cell_count() * 4 * grid.dim() + n);
    for (t, cell) in grid.cells().iter().enumerate() {
        for a in 0..grid.dim() {
            let (pa, ma) = cell.diffs[a];
            let w = scale * k.0[t] / (h[a] * h[a]);
            for (i, si) in [(pa, 1.0), (ma, -1.0)] {
                if grid.is_boundary(i) {
                    continue;
                }
                for (j, sj) in [(pa, 1.0), (ma, -1.0)] {
                    if !grid.is_boundary(j) {
                        triplets.push((i, j, si * sj * w));
                    }
                }
            }
        }
    }
    for k in 0..n {
        if grid.is_boundary(k) {
            triplets.push((k, k, 1.0));
        }
    }
    SparseOperator::from_triplets(n, triplets)
}

/// Samples `prob` on `grid` and assembles at `u`.
pub fn assemble_problem(
    grid: &Grid,
    prob: &Problem,
    u: &GridFunction,
    p: &PenaltyParams,
) -> Result<AssembledSystem, ProblemError> {
    Ok(assemble(grid, &prob.sample(grid)?, u, p))
}

/// `F_eps = f - (-lap psi - f)^+ theta_eps(u - psi)`.
pub fn f_eps(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> GridFunction {
    let theta = theta_field(grid, data, u, p);
    let c = obstacle_weight(grid, data);
    GridFunction((0..grid.node_count()).map(|k| data.f.0[k] - c[k] * theta.0[k]).collect())
}

/// The convex energy whose scaled gradient is the residual.
pub fn energy(grid: &Grid, data: &SampledProblem, u: &GridFunction, p: &PenaltyParams) -> f64 {
    let grad = grid::cell_gradient(grid, u);
    let slack = constraint_slack(grid, data, &grad);
    let mut e = 0.0;
    match &data.g_cells {
        Some(g) => {
            for (s, gc) in slack.iter().zip(&g.0) {
                // shift by the constant K(-g^2) so that E(0) = 0
                e += grid.cell_volume() * (k_primitive(*s, p) + gc * gc) / 2.0;
            }
        }
        None => {
            for m in grad.magnitudes() {
                e += grid.cell_volume() * m * m / 2.0;
            }
        }
    }
    let c = obstacle_weight(grid, data);
    let vol = grid.interior_volume();
    for &k in grid.interior_nodes() {
        let obst = match &data.psi {
            Some(psi) => c[k] * theta_primitive(u.0[k] - psi.0[k], p),
            None => 0.0,
        };
        e += vol * (obst - data.f.0[k] * u.0[k]);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pp(eps: f64) -> PenaltyParams {
        PenaltyParams::new(eps, 4.0).unwrap()
    }

    #[test]
    fn k_eps_examples() {
        assert_eq!(k_eps(-3.0, &pp(0.1)), 1.0);
        assert_eq!(k_eps(0.1, &pp(0.1)), 2.0);
        assert_eq!(k_eps(0.2, &pp(0.1)), 17.0);
        assert_eq!(dk_eps(-1.0, &pp(0.1)), 0.0);
        assert!((dk_eps(0.1, &pp(0.1)) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn dk_eps_matches_central_difference() {
        let p = pp(0.1);
        let (s, d) = (0.05, 1e-7);
        let fd = (k_eps(s + d, &p) - k_eps(s - d, &p)) / (2.0 * d);
        assert!((fd - dk_eps(s, &p)).abs() <= 1e-6 * dk_eps(s, &p));
    }

    #[test]
    fn theta_eps_examples() {
        let p = pp(0.1);
        assert_eq!(theta_eps(-0.2, &p), -1.0);
        assert_eq!(theta_eps(0.3, &p), 0.0);
        assert_eq!(theta_eps(-0.05, &p), -0.5);
        assert_eq!(theta_eps(-0.1, &p), -1.0);
        assert_eq!(dtheta_eps(-0.05, &p), 10.0);
        assert_eq!(dtheta_eps(-0.1, &p), 0.0);
        assert_eq!(dtheta_eps(0.0, &p), 0.0);
    }

    #[test]
    fn params_are_validated() {
        assert!(PenaltyParams::new(0.0, 4.0).is_err());
        assert!(PenaltyParams::new(1.0, 4.0).is_err());
        assert!(PenaltyParams::new(0.5, 2.0).is_err());
        assert!(PenaltyParams::for_dim(0.5, 2.5, 2).is_ok());
    }

    #[test]
    fn primitives_differentiate_back() {
        let p = pp(0.1);
        let d = 1e-6;
        for s in [-0.3, -0.07, -0.02, 0.01, 0.05, 0.2] {
            let fk = (k_primitive(s + d, &p) - k_primitive(s - d, &p)) / (2.0 * d);
            assert!((fk - k_eps(s, &p)).abs() < 1e-6 * k_eps(s, &p), "K' at {s}");
            let ft = (theta_primitive(s + d, &p) - theta_primitive(s - d, &p)) / (2.0 * d);
            assert!((ft - theta_eps(s, &p)).abs() < 1e-6, "Theta' at {s}");
        }
    }

    proptest! {
        #[test]
        fn phi_is_nondecreasing(s1 in -3.0f64..3.0, ds in 0.0f64..2.0, a in 0.0f64..4.0, eps in 0.01f64..0.9) {
            let p = PenaltyParams::new(eps, 4.0).unwrap();
            prop_assert!(phi_eps(s1 + ds, a, &p) >= phi_eps(s1, a, &p));
        }

        #[test]
        fn penalty_functions_are_monotone_and_bounded(s1 in -2.0f64..2.0, ds in 0.0f64..1.0, eps in 0.001f64..0.9) {
            let p = PenaltyParams::new(eps, 4.0).unwrap();
            let s2 = s1 + ds;
            prop_assert!(k_eps(s2, &p) >= k_eps(s1, &p));
            prop_assert!(theta_eps(s2, &p) >= theta_eps(s1, &p));
            prop_assert!(k_eps(s1, &p) >= 1.0);
            prop_assert!((-1.0..=0.0).contains(&theta_eps(s1, &p)));
        }
    }

    fn test_problem(dim: usize, n: usize) -> (Grid, SampledProblem) {
        let domain = if dim == 1 {
            Domain::interval(-1.0, 1.0).unwrap()
        } else {
            Domain::rectangle([-1.0, 1.0], [-1.0, 1.0]).unwrap()
        };
        let prob = Problem::new(domain, "1 + x", Some("0.5 + 0.1*cos(x)"), Some("-0.1 - 0.2*x^2")).unwrap();
        let grid = Grid::uniform(prob.domain.clone(), n).unwrap();
        let data = prob.sample(&grid).unwrap();
        (grid, data)
    }

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> GridFunction {
        GridFunction(
            (0..grid.node_count())
                .map(|k| {
                    if grid.is_boundary(k) {
                        0.0
                    } else {
                        let x = grid.coords(k);
                        amp * ((1.3 * x[0] + 0.4).sin() + 0.7 * (2.1 * x[1]).cos()) + 0.05 * rng.random_range(-1.0..1.0)
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn trivial_residuals() {
        let prob = Problem::new(Domain::interval(-1.0, 1.0).unwrap(), "0", Some("1"), Some("-1")).unwrap();
        let grid = Grid::uniform(prob.domain.clone(), 11).unwrap();
        let u = GridFunction::zeros(&grid);
        let sys = assemble_problem(&grid, &prob, &u, &pp(0.1)).unwrap();
        assert!(sys.residual.0.iter().all(|&r| r == 0.0));
        let prob = Problem::new(Domain::interval(-1.0, 1.0).unwrap(), "1", Some("1"), Some("-1")).unwrap();
        let sys = assemble_problem(&grid, &prob, &u, &pp(0.1)).unwrap();
        for k in 0..grid.node_count() {
            let want = if grid.is_boundary(k) { 0.0 } else { -1.0 };
            assert_eq!(sys.residual.0[k], want);
        }
    }

    #[test]
    fn jacobian_matches_directional_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [1, 2] {
            let (grid, data) = test_problem(dim, 33);
            let p = pp(0.05);
            let u = random_field(&grid, &mut rng, 0.8);
            let dir = random_field(&grid, &mut rng, 1.0);
            let sys = assemble(&grid, &data, &u, &p);
            let jd = sys.jacobian.mul_vec(&dir.0);
            let t = 1e-7;
            let up = u.zip_map(&dir, |a, b| a + t * b);
            let um = u.zip_map(&dir, |a, b| a - t * b);
            let rp = assemble(&grid, &data, &up, &p).residual;
            let rm = assemble(&grid, &data, &um, &p).residual;
            let fd: Vec<f64> = rp.0.iter().zip(&rm.0).map(|(a, b)| (a - b) / (2.0 * t)).collect();
            let err = fd.iter().zip(&jd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let size = jd.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-5 * size, "dim {dim}: {err} vs {size}");
        }
    }

    #[test]
    fn residual_is_scaled_energy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (grid, data) = test_problem(2, 9);
        // moderate penalty keeps the energy small enough for differencing
        let p = pp(0.5);
        let u = random_field(&grid, &mut rng, 0.3);
        let sys = assemble(&grid, &data, &u, &p);
        assert!(sys.khat.max() > 2.0);
        let t = 1e-5;
        for &k in grid.interior_nodes() {
            let e_at = |shift: f64| {
                let mut v = u.clone();
                v.0[k] += shift;
                energy(&grid, &data, &v, &p)
            };
            // fourth-order central difference
            let g = (-e_at(2.0 * t) + 8.0 * e_at(t) - 8.0 * e_at(-t) + e_at(-2.0 * t)) / (12.0 * t);
            let r = sys.residual.0[k] * grid.interior_volume();
            assert!((g - r).abs() <= 1e-6 * r.abs().max(1e-3), "node {k}: {g} vs {r}");
        }
    }

    #[test]
    fn jacobian_is_symmetric_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (dim, n) in [(1, 17), (2, 9)] {
            let (grid, data) = test_problem(dim, n);
            let u = random_field(&grid, &mut rng, 1.0);
            let sys = assemble(&grid, &data, &u, &pp(0.05));
            assert!(sys.jacobian.asymmetry() <= 1e-9 * sys.jacobian.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let dense = sys.jacobian.to_dense();
            let m = nalgebra::DMatrix::from_fn(dense.len(), dense.len(), |i, j| dense[i][j]);
            let sym = (&m + m.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-8, "smallest eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn principal_part_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (dim, n) in [(1, 33), (2, 17)] {
            let (grid, data) = test_problem(dim, n);
            let p = pp(0.01);
            for _ in 0..20 {
                let (au_amp, av_amp) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
                let u = random_field(&grid, &mut rng, au_amp);
                let v = random_field(&grid, &mut rng, av_amp);
                let au = principal_operator(&grid, &data, &u, &p);
                let av = principal_operator(&grid, &data, &v, &p);
                let diff = au.zip_map(&av, |a, b| a - b);
                let du = u.zip_map(&v, |a, b| a - b);
                assert!(grid::inner(&grid, &diff, &du) >= -1e-10 * au.max().abs().max(1.0));
            }
        }
    }

    #[test]
    fn assembled_fields_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (grid, data) = test_problem(2, 17);
        let p = pp(0.01);
        for _ in 0..10 {
            let u = random_field(&grid, &mut rng, 2.0);
            let sys = assemble(&grid, &data, &u, &p);
            assert!(sys.khat.min() >= 1.0);
            assert!(sys.theta.min() >= -1.0 && sys.theta.max() <= 0.0);
            let fe = f_eps(&grid, &data, &u, &p);
            let c = data.obstacle_weight.as_ref().unwrap();
            for k in 0..grid.node_count() {
                assert!(fe.0[k] >= data.f.0[k] && fe.0[k] <= data.f.0[k] + c.0[k]);
            }
        }
    }

    #[test]
    fn stiffness_applies_flux_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (grid, _) = test_problem(2, 9);
        let k = CellField((0..grid.cell_count()).map(|_| rng.random_range(1.0..5.0)).collect());
        let u = random_field(&grid, &mut rng, 1.0);
        let a = stiffness(&grid, &k).mul_vec(&u.0);
        let b = flux_divergence(&grid, &k, &grid::cell_gradient(&grid, &u));
        for &i in grid.interior_nodes() {
            assert!((a[i] - b.0[i]).abs() < 1e-10 * b.0[i].abs().max(1.0));
        }
    }

    #[test]
    fn f_eps_branches() {
        let prob = Problem::new(Domain::interval(-1.0, 1.0).unwrap(), "-4", Some("1"), Some("-0.3")).unwrap();
        let grid = Grid::uniform(prob.domain.clone(), 11).unwrap();
        let data = prob.sample(&grid).unwrap();
        let p = pp(0.1);
        let above = GridFunction(vec![0.0; 11]);
        let below = GridFunction(vec![-1.0; 11]);
        let fa = f_eps(&grid, &data, &above, &p);
        let fb = f_eps(&grid, &data, &below, &p);
        for &k in grid.interior_nodes() {
            assert_eq!(fa.0[k], -4.0);
            assert_eq!(fb.0[k], 0.0);
        }
        let prob = Problem::new(Domain::interval(-1.0, 1.0).unwrap(), "1", Some("1"), Some("-1 + 0*x")).unwrap();
        let data = prob.sample(&grid).unwrap();
        assert_eq!(f_eps(&grid, &data, &below, &p), data.f);
    }
}
