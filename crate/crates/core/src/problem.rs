//! Problem descriptions: domain, force `f`, gradient bound `g` and obstacle
//! `psi`, plus sampled checks of the standing hypotheses on the data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::grid::{self, CellField, Domain, Grid, GridError, GridFunction};

/// Round-off allowance in the `laplacian(g^2) <= 0` check.
pub const TOL_SIGN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid problem file: {0}")]
    Json(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("expression `{name}` uses {used} coordinate(s) on a {dim}-dimensional domain")]
    ExprDimension { name: &'static str, used: usize, dim: usize },
    #[error("validation needs at least 3 samples per axis, got {0}")]
    TooFewSamples(usize),
}

/// Continuum data of a variational inequality with gradient constraint
/// `|grad u| <= g` and obstacle `u >= psi`, homogeneous Dirichlet data.
///
/// `g = None` drops the gradient constraint and `psi = None` drops the
/// obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub domain: Domain,
    pub f: Expr,
    #[serde(default)]
    pub g: Option<Expr>,
    #[serde(default)]
    pub psi: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplacian_psi: Option<Expr>,
}

impl Problem {
    /// Builds a problem from expression strings.
    pub fn new(domain: Domain, f: &str, g: Option<&str>, psi: Option<&str>) -> Result<Problem, ProblemError> {
        let p = Problem {
            domain,
            f: Expr::parse(f)?,
            g: g.map(Expr::parse).transpose()?,
            psi: psi.map(Expr::parse).transpose()?,
            laplacian_psi: None,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    /// Builds a problem from parsed expressions.
    pub fn from_parts(
        domain: Domain,
        f: Expr,
        g: Option<Expr>,
        psi: Option<Expr>,
        laplacian_psi: Option<Expr>,
    ) -> Result<Problem, ProblemError> {
        let p = Problem {
            domain,
            f,
            g,
            psi,
            laplacian_psi,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn with_laplacian_psi(mut self, text: &str) -> Result<Problem, ProblemError> {
        self.laplacian_psi = Some(Expr::parse(text)?);
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Problem, ProblemError> {
        let p: Problem = serde_json::from_str(text).map_err(|e| ProblemError::Json(e.to_string()))?;
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialises")
    }

    fn check_dimensions(&self) -> Result<(), ProblemError> {
        let dim = self.domain.dim();
        let exprs = [
            ("f", Some(&self.f)),
            ("g", self.g.as_ref()),
            ("psi", self.psi.as_ref()),
            ("laplacian_psi", self.laplacian_psi.as_ref()),
        ];
        for (name, e) in exprs {
            if let Some(e) = e {
                if e.dimension() > dim {
                    return Err(ProblemError::ExprDimension {
                        name,
                        used: e.dimension(),
                        dim,
                    });
                }
            }
        }
        Ok(())
    }

    /// `g* = max g` estimated on a grid (infinity without a constraint).
    pub fn g_max(&self, grid: &Grid) -> Result<f64, ProblemError> {
        match &self.g {
            None => Ok(f64::INFINITY),
            Some(g) => Ok(grid.sample(|x| g.eval(x))?.max()),
        }
    }

    /// Evaluates the data on `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<SampledProblem, ProblemError> {
        let f = grid.sample(|x| self.f.eval(x))?;
        let (g_nodes, g_cells) = match &self.g {
            Some(g) => (
                Some(grid.sample(|x| g.eval(x))?),
                Some(grid.sample_cells(|x| g.eval(x))?),
            ),
            None => (None, None),
        };
        let (psi, lap_psi, obstacle_weight) = match &self.psi {
            Some(psi_expr) => {
                let psi = grid.sample(|x| psi_expr.eval(x))?;
                let lap = match &self.laplacian_psi {
                    Some(l) => grid.sample(|x| l.eval(x))?,
                    None => grid::laplacian(grid, &psi),
                };
                let weight = GridFunction(
                    lap.0
                        .iter()
                        .zip(&f.0)
                        .enumerate()
                        .map(|(k, (l, fk))| if grid.is_boundary(k) { 0.0 } else { (-l - fk).max(0.0) })
                        .collect(),
                );
                (Some(psi), Some(lap), Some(weight))
            }
            None => (None, None, None),
        };
        Ok(SampledProblem {
            f,
            g_nodes,
            g_cells,
            psi,
            lap_psi,
            obstacle_weight,
        })
    }
}

/// Problem data evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledProblem {
    pub f: GridFunction,
    /// `g` at nodes (reporting).
    pub g_nodes: Option<GridFunction>,
    /// `g` at cell centroids; the discrete constraint is `|grad_T u| <= g_T`.
    pub g_cells: Option<CellField>,
    pub psi: Option<GridFunction>,
    pub lap_psi: Option<GridFunction>,
    /// `(-laplacian(psi) - f)^+` at interior nodes, zero on the boundary.
    pub obstacle_weight: Option<GridFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `min g > 0`
    GPositive,
    /// `laplacian(g^2) <= 0`
    LaplacianGSquared,
    /// `psi <= 0` on the boundary
    ObstacleBoundary,
    /// `|grad psi| < g`
    ObstacleSlope,
}

impl Hypothesis {
    pub fn describe(self) -> &'static str {
        match self {
            Hypothesis::GPositive => "min g > 0",
            Hypothesis::LaplacianGSquared => "laplacian(g^2) <= 0",
            Hypothesis::ObstacleBoundary => "psi <= 0 on the boundary",
            Hypothesis::ObstacleSlope => "|grad psi| < g",
        }
    }
}

/// Outcome of one sampled hypothesis. `worst` is the extreme sampled value of
/// the quantity that must stay on the admissible side: `-g`, `laplacian(g^2)`,
/// boundary `psi`, and `|grad psi| - g` respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    pub worst: f64,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples_per_axis: usize,
    pub checks: Vec<HypothesisCheck>,
    /// Sampled `g_* = min g`.
    pub g_min: Option<f64>,
    /// `min (g - |grad psi|)` over samples.
    pub slope_margin: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, h: Hypothesis) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == h)
    }
}

fn worst_of(grid: &Grid, values: &[f64], nodes: impl Iterator<Item = usize>) -> (f64, Vec<f64>) {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in nodes {
        if values[k] > best.0 {
            best = (values[k], k);
        }
    }
    (best.0, grid.point(best.1))
}

/// Checks the data hypotheses on an `n`-per-axis sample grid.
pub fn validate_data(p: &Problem, n: usize) -> Result<ValidationReport, ProblemError> {
    if n < 3 {
        return Err(ProblemError::TooFewSamples(n));
    }
    let grid = Grid::uniform(p.domain.clone(), n)?;
    let mut checks = Vec::new();
    let mut g_min = None;
    let mut slope_margin = None;
    let all = 0..grid.node_count();

    let g_vals = match &p.g {
        Some(g) => Some(grid.sample(|x| g.eval(x))?),
        None => None,
    };
    if let Some(g) = &g_vals {
        let neg: Vec<f64> = g.0.iter().map(|v| -v).collect();
        let (worst, witness) = worst_of(&grid, &neg, all.clone());
        g_min = Some(-worst);
        checks.push(HypothesisCheck {
            hypothesis: Hypothesis::GPositive,
            passed: worst < 0.0,
            worst,
            witness,
        });

        let g2 = g.map(|v| v * v);
        let lap = grid::laplacian(&grid, &g2);
        let (worst, witness) = worst_of(&grid, &lap.0, grid.interior_nodes().iter().copied());
        checks.push(HypothesisCheck {
            hypothesis: Hypothesis::LaplacianGSquared,
            passed: worst <= TOL_SIGN,
            worst,
            witness,
        });
    }

    if let Some(psi_expr) = &p.psi {
        let psi = grid.sample(|x| psi_expr.eval(x))?;
        let boundary: Vec<usize> = all.clone().filter(|&k| grid.is_boundary(k)).collect();
        let (worst, witness) = worst_of(&grid, &psi.0, boundary.into_iter());
        checks.push(HypothesisCheck {
            hypothesis: Hypothesis::ObstacleBoundary,
            passed: worst <= 0.0,
            worst,
            witness,
        });

        if let Some(g) = &g_vals {
            let slope = grid::gradient(&grid, &psi).magnitudes();
            let excess: Vec<f64> = slope.iter().zip(&g.0).map(|(s, gv)| s - gv).collect();
            let (worst, witness) = worst_of(&grid, &excess, all.clone());
            slope_margin = Some(-worst);
            checks.push(HypothesisCheck {
                hypothesis: Hypothesis::ObstacleSlope,
                passed: worst < 0.0,
                worst,
                witness,
            });
        }
    }

    Ok(ValidationReport {
        samples_per_axis: n,
        checks,
        g_min,
        slope_margin,
    })
}
