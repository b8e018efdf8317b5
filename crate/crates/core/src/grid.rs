//! Uniform tensor grids on boxes, nodal and cell fields, and the discrete
//! differential operators built on them.
//!
//! Two operator families live here:
//!
//! * nodal operators ([`gradient`], [`divergence`], [`laplacian`]) using
//!   centred differences with a first-order boundary closure, so that
//!   `divergence` is the exact negative adjoint of `gradient` in the
//!   trapezoidal inner product for fields vanishing on the boundary;
//! * cell operators ([`cell_gradient`], [`cell_divergence`]) on the piecewise
//!   linear interpolant (intervals in 1D, two right triangles per square in
//!   2D). `cell_divergence(cell_gradient(v))` reproduces the 3-point / 5-point
//!   Laplacian exactly, and the pair is what the solvers discretise with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("domain dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: empty interval [{lo}, {hi}]")]
    EmptyInterval { axis: usize, lo: f64, hi: f64 },
    #[error("dimension {dim} does not match {bounds} bound pair(s)")]
    BoundsMismatch { dim: usize, bounds: usize },
    #[error("axis {axis} needs at least 3 points, got {n}")]
    TooFewPoints { axis: usize, n: usize },
    #[error("expected {expected} per-axis point counts, got {got}")]
    CountMismatch { expected: usize, got: usize },
}

#[derive(Deserialize)]
struct DomainRepr {
    dim: usize,
    bounds: Vec<[f64; 2]>,
}

/// An axis-aligned box `(a_1, b_1) x ... x (a_d, b_d)` with `d` in {1, 2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    dim: usize,
    bounds: Vec<[f64; 2]>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = GridError;

    fn try_from(r: DomainRepr) -> Result<Self, GridError> {
        if r.dim != r.bounds.len() {
            return Err(GridError::BoundsMismatch {
                dim: r.dim,
                bounds: r.bounds.len(),
            });
        }
        Domain::new(r.bounds)
    }
}

impl Domain {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Domain, GridError> {
        let dim = bounds.len();
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        for (axis, &[lo, hi]) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(GridError::EmptyInterval { axis, lo, hi });
            }
        }
        Ok(Domain { dim, bounds })
    }

    pub fn interval(a: f64, b: f64) -> Result<Domain, GridError> {
        Domain::new(vec![[a, b]])
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2]) -> Result<Domain, GridError> {
        Domain::new(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|[a, b]| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn measure(&self) -> f64 {
        self.bounds.iter().map(|[a, b]| b - a).product()
    }
}

/// One element of the piecewise linear interpolant.
///
/// Component `a` of the element gradient is `(v[plus] - v[minus]) / h_a`
/// with `(plus, minus) = diffs[a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub diffs: [(usize, usize); 2],
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    n: Vec<usize>,
    h: Vec<f64>,
    cells: Vec<Cell>,
    interior: Vec<usize>,
    unknown_of: Vec<Option<usize>>,
}

/// Grid metadata written next to field CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub nodes: usize,
    pub cells: usize,
}

impl Grid {
    pub fn new(domain: Domain, n: &[usize]) -> Result<Grid, GridError> {
        let dim = domain.dim();
        if n.len() != dim {
            return Err(GridError::CountMismatch {
                expected: dim,
                got: n.len(),
            });
        }
        for (axis, &k) in n.iter().enumerate() {
            if k < 3 {
                return Err(GridError::TooFewPoints { axis, n: k });
            }
        }
        let h: Vec<f64> = domain
            .bounds()
            .iter()
            .zip(n)
            .map(|([a, b], &k)| (b - a) / (k - 1) as f64)
            .collect();
        let mut grid = Grid {
            domain,
            n: n.to_vec(),
            h,
            cells: Vec::new(),
            interior: Vec::new(),
            unknown_of: Vec::new(),
        };
        grid.cells = grid.build_cells();
        let total = grid.node_count();
        grid.unknown_of = vec![None; total];
        for node in 0..total {
            if !grid.is_boundary(node) {
                grid.unknown_of[node] = Some(grid.interior.len());
                grid.interior.push(node);
            }
        }
        Ok(grid)
    }

    /// Same number of points on every axis.
    pub fn uniform(domain: Domain, n: usize) -> Result<Grid, GridError> {
        let counts = vec![n; domain.dim()];
        Grid::new(domain, &counts)
    }

    fn build_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        if self.dim() == 1 {
            let a = self.domain.bounds()[0][0];
            for e in 0..self.n[0] - 1 {
                cells.push(Cell {
                    diffs: [(e + 1, e), (0, 0)],
                    centroid: [a + (e as f64 + 0.5) * self.h[0], 0.0],
                });
            }
        } else {
            let (nx, ny) = (self.n[0], self.n[1]);
            let (ax, ay) = (self.domain.bounds()[0][0], self.domain.bounds()[1][0]);
            let id = |i: usize, j: usize| i + j * nx;
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let x = ax + i as f64 * self.h[0];
                    let y = ay + j as f64 * self.h[1];
                    // lower-left triangle (i,j), (i+1,j), (i,j+1)
                    cells.push(Cell {
                        diffs: [(id(i + 1, j), id(i, j)), (id(i, j + 1), id(i, j))],
                        centroid: [x + self.h[0] / 3.0, y + self.h[1] / 3.0],
                    });
                    // upper-right triangle (i+1,j+1), (i,j+1), (i+1,j)
                    cells.push(Cell {
                        diffs: [(id(i + 1, j + 1), id(i, j + 1)), (id(i + 1, j + 1), id(i + 1, j))],
                        centroid: [x + 2.0 * self.h[0] / 3.0, y + 2.0 * self.h[1] / 3.0],
                    });
                }
            }
        }
        cells
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn node_count(&self) -> usize {
        self.n.iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Volume of one element.
    pub fn cell_volume(&self) -> f64 {
        let box_vol: f64 = self.h.iter().product();
        if self.dim() == 1 {
            box_vol
        } else {
            0.5 * box_vol
        }
    }

    /// Control volume of an interior node, `prod h_i`.
    pub fn interior_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [node, 0]
        } else {
            [node % self.n[0], node / self.n[0]]
        }
    }

    pub fn node_index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] + idx[1] * self.n[0]
        }
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let idx = self.multi_index(node);
        let mut x = [0.0; 2];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim()) {
            let [lo, hi] = self.domain.bounds()[a];
            // pin the last node to the exact upper bound
            *xa = if idx[a] == self.n[a] - 1 {
                hi
            } else {
                lo + idx[a] as f64 * self.h[a]
            };
        }
        x
    }

    /// Coordinates of `node` as a slice of length `dim`.
    pub fn point(&self, node: usize) -> Vec<f64> {
        self.coords(node)[..self.dim()].to_vec()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim()).any(|a| idx[a] == 0 || idx[a] == self.n[a] - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|k| self.is_boundary(k)).collect()
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Position of `node` among the interior unknowns.
    pub fn unknown_index(&self, node: usize) -> Option<usize> {
        self.unknown_of[node]
    }

    /// Trapezoidal quadrature weight of `node`.
    pub fn node_weight(&self, node: usize) -> f64 {
        let idx = self.multi_index(node);
        (0..self.dim())
            .map(|a| {
                if idx[a] == 0 || idx[a] == self.n[a] - 1 {
                    0.5 * self.h[a]
                } else {
                    self.h[a]
                }
            })
            .product()
    }

    /// Cells touching each node.
    pub fn node_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.node_count()];
        for (c, cell) in self.cells.iter().enumerate() {
            for node in self.cell_nodes(cell) {
                if !out[node].contains(&c) {
                    out[node].push(c);
                }
            }
        }
        out
    }

    /// Distinct vertices of a cell.
    pub fn cell_nodes(&self, cell: &Cell) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(3);
        for &(p, m) in &cell.diffs[..self.dim()] {
            for v in [p, m] {
                if !nodes.contains(&v) {
                    nodes.push(v);
                }
            }
        }
        nodes
    }

    /// True when the cell has a vertex on the boundary.
    pub fn cell_touches_boundary(&self, cell: &Cell) -> bool {
        self.cell_nodes(cell).into_iter().any(|k| self.is_boundary(k))
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            dim: self.dim(),
            bounds: self.domain.bounds().to_vec(),
            n: self.n.clone(),
            h: self.h.clone(),
            nodes: self.node_count(),
            cells: self.cell_count(),
        }
    }

    /// Samples `f` at every node.
    pub fn sample<E>(&self, mut f: impl FnMut(&[f64]) -> Result<f64, E>) -> Result<GridFunction, E> {
        let mut values = Vec::with_capacity(self.node_count());
        for k in 0..self.node_count() {
            values.push(f(&self.coords(k)[..self.dim()])?);
        }
        Ok(GridFunction(values))
    }

    /// Samples `f` at every cell centroid.
    pub fn sample_cells<E>(&self, mut f: impl FnMut(&[f64]) -> Result<f64, E>) -> Result<CellField, E> {
        let mut values = Vec::with_capacity(self.cell_count());
        for cell in &self.cells {
            values.push(f(&cell.centroid[..self.dim()])?);
        }
        Ok(CellField(values))
    }
}

pub fn build_grid(domain: Domain, n: &[usize]) -> Result<Grid, GridError> {
    Grid::new(domain, n)
}

/// Scalar field at the nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFunction(pub Vec<f64>);

/// Scalar field, one value per cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellField(pub Vec<f64>);

/// `dim` components per location (node or cell), stored location-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    dim: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> GridFunction {
        GridFunction(vec![0.0; grid.node_count()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.len(), other.len());
        GridFunction(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl CellField {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CellField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Nodal values obtained by averaging the adjacent cells.
    pub fn to_nodal(&self, grid: &Grid) -> GridFunction {
        let mut sum = vec![0.0; grid.node_count()];
        let mut count = vec![0usize; grid.node_count()];
        for (c, cell) in grid.cells().iter().enumerate() {
            for k in grid.cell_nodes(cell) {
                sum[k] += self.0[c];
                count[k] += 1;
            }
        }
        GridFunction(sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect())
    }
}

impl VectorField {
    pub fn zeros(dim: usize, locations: usize) -> VectorField {
        VectorField {
            dim,
            data: vec![0.0; dim * locations],
        }
    }

    pub fn from_data(dim: usize, data: Vec<f64>) -> VectorField {
        assert!(dim > 0 && data.len() % dim == 0);
        VectorField { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn get_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component(&self, a: usize) -> Vec<f64> {
        self.data.iter().skip(a).step_by(self.dim).copied().collect()
    }

    /// Euclidean length at every location.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Multiplies the vector at location `k` by `s[k]`.
    pub fn scaled(&self, s: &[f64]) -> VectorField {
        assert_eq!(s.len(), self.len());
        let mut out = self.clone();
        for (k, chunk) in out.data.chunks_mut(self.dim).enumerate() {
            for x in chunk {
                *x *= s[k];
            }
        }
        out
    }
}

/// Difference along `axis` at node `idx` with the first-order boundary
/// closure.
fn axis_difference(grid: &Grid, v: &[f64], node: usize, axis: usize) -> f64 {
    let idx = grid.multi_index(node);
    let n = grid.points_per_axis()[axis];
    let h = grid.spacing()[axis];
    let step = |delta: isize| {
        let mut j = idx;
        j[axis] = (j[axis] as isize + delta) as usize;
        v[grid.node_index(j)]
    };
    if idx[axis] == 0 {
        (step(1) - v[node]) / h
    } else if idx[axis] == n - 1 {
        (v[node] - step(-1)) / h
    } else {
        (step(1) - step(-1)) / (2.0 * h)
    }
}

/// Nodal gradient: centred differences inside, one-sided at the boundary.
pub fn gradient(grid: &Grid, v: &GridFunction) -> VectorField {
    assert_eq!(v.len(), grid.node_count());
    let d = grid.dim();
    let mut out = VectorField::zeros(d, grid.node_count());
    for k in 0..grid.node_count() {
        for a in 0..d {
            out.get_mut(k)[a] = axis_difference(grid, &v.0, k, a);
        }
    }
    out
}

/// Nodal divergence, the negative adjoint of [`gradient`]:
/// `<divergence(w), v> = -<w, gradient(v)>` in the trapezoidal inner product
/// whenever `v` vanishes on the boundary.
pub fn divergence(grid: &Grid, w: &VectorField) -> GridFunction {
    assert_eq!(w.len(), grid.node_count());
    let d = grid.dim();
    let mut out = vec![0.0; grid.node_count()];
    for a in 0..d {
        let comp = w.component(a);
        for (k, o) in out.iter_mut().enumerate() {
            *o += axis_difference(grid, &comp, k, a);
        }
    }
    GridFunction(out)
}

/// 3-point (1D) / 5-point (2D) Laplacian at interior nodes; zero on the
/// boundary.
pub fn laplacian(grid: &Grid, v: &GridFunction) -> GridFunction {
    assert_eq!(v.len(), grid.node_count());
    let mut out = vec![0.0; grid.node_count()];
    for &k in grid.interior_nodes() {
        let idx = grid.multi_index(k);
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            let h = grid.spacing()[a];
            let mut lo = idx;
            let mut hi = idx;
            lo[a] -= 1;
            hi[a] += 1;
            acc += (v.0[grid.node_index(hi)] - 2.0 * v.0[k] + v.0[grid.node_index(lo)]) / (h * h);
        }
        out[k] = acc;
    }
    GridFunction(out)
}

/// Gradient of the piecewise linear interpolant, one vector per cell.
pub fn cell_gradient(grid: &Grid, v: &GridFunction) -> VectorField {
    assert_eq!(v.len(), grid.node_count());
    let d = grid.dim();
    let mut out = VectorField::zeros(d, grid.cell_count());
    for (c, cell) in grid.cells().iter().enumerate() {
        let g = out.get_mut(c);
        for a in 0..d {
            let (p, m) = cell.diffs[a];
            g[a] = (v.0[p] - v.0[m]) / grid.spacing()[a];
        }
    }
    out
}

/// Negative adjoint of [`cell_gradient`] with respect to cell volumes and the
/// interior control volumes; defined at interior nodes, zero on the boundary.
pub fn cell_divergence(grid: &Grid, w: &VectorField) -> GridFunction {
    assert_eq!(w.len(), grid.cell_count());
    let d = grid.dim();
    let mut acc = vec![0.0; grid.node_count()];
    let scale = grid.cell_volume() / grid.interior_volume();
    for (c, cell) in grid.cells().iter().enumerate() {
        let wc = w.get(c);
        for a in 0..d {
            let (p, m) = cell.diffs[a];
            let t = scale * wc[a] / grid.spacing()[a];
            acc[p] -= t;
            acc[m] += t;
        }
    }
    for k in 0..grid.node_count() {
        if grid.is_boundary(k) {
            acc[k] = 0.0;
        }
    }
    GridFunction(acc)
}

/// Discrete `L^p` norm with trapezoidal weights; `p = f64::INFINITY` gives
/// the max norm.
pub fn norm_lp(grid: &Grid, v: &GridFunction, p: f64) -> f64 {
    assert!(p >= 1.0, "norm exponent must be >= 1");
    assert_eq!(v.len(), grid.node_count());
    if p.is_infinite() {
        return v.0.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let sum: f64 = v
        .0
        .iter()
        .enumerate()
        .map(|(k, x)| grid.node_weight(k) * x.abs().powf(p))
        .sum();
    sum.powf(1.0 / p)
}

/// Discrete `L^p` norm of a cell field (exact integral of the piecewise
/// constant function).
pub fn cell_norm_lp(grid: &Grid, v: &CellField, p: f64) -> f64 {
    assert!(p >= 1.0, "norm exponent must be >= 1");
    assert_eq!(v.len(), grid.cell_count());
    if p.is_infinite() {
        return v.0.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let sum: f64 = v.0.iter().map(|x| x.abs().powf(p)).sum();
    (grid.cell_volume() * sum).powf(1.0 / p)
}

/// Trapezoidal inner product of two nodal fields.
pub fn inner(grid: &Grid, a: &GridFunction, b: &GridFunction) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .enumerate()
        .map(|(k, (x, y))| grid.node_weight(k) * x * y)
        .sum()
}

/// Cell-volume weighted inner product of two cell vector fields.
pub fn cell_inner(grid: &Grid, a: &VectorField, b: &VectorField) -> f64 {
    grid.cell_volume() * a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>()
}

/// Node-weighted inner product of two nodal vector fields.
pub fn vector_inner(grid: &Grid, a: &VectorField, b: &VectorField) -> f64 {
    (0..a.len())
        .map(|k| {
            let dot: f64 = a.get(k).iter().zip(b.get(k)).map(|(x, y)| x * y).sum();
            grid.node_weight(k) * dot
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(a: f64, b: f64, n: usize) -> Grid {
        Grid::uniform(Domain::interval(a, b).unwrap(), n).unwrap()
    }

    fn square(n: usize) -> Grid {
        Grid::uniform(Domain::rectangle([0.0, 1.0], [0.0, 1.0]).unwrap(), n).unwrap()
    }

    fn sample(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> GridFunction {
        grid.sample(|x| Ok::<_, ()>(f(x))).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        let g = line(-1.0, 1.0, 5);
        let xs: Vec<f64> = (0..5).map(|k| g.coords(k)[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.spacing(), &[0.5]);

        let s = square(3);
        assert_eq!(s.node_count(), 9);
        assert_eq!(s.boundary_mask().iter().filter(|&&b| b).count(), 8);
        assert_eq!(s.interior_nodes(), &[4]);
        assert_eq!(s.cell_count(), 8);

        assert_eq!(line(0.0, 2.0, 3).spacing(), &[1.0]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(
            Grid::uniform(Domain::interval(0.0, 1.0).unwrap(), 2),
            Err(GridError::TooFewPoints { .. })
        ));
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::new(vec![]).is_err());
        assert!(serde_json::from_str::<Domain>(r#"{"dim":2,"bounds":[[0,1]]}"#).is_err());
        let d: Domain = serde_json::from_str(r#"{"dim":1,"bounds":[[-1,1]]}"#).unwrap();
        assert_eq!(d.diameter(), 2.0);
    }

    #[test]
    fn node_weights_integrate_constants() {
        for g in [line(0.0, 1.0, 7), square(9)] {
            let total: f64 = (0..g.node_count()).map(|k| g.node_weight(k)).sum();
            assert!((total - g.domain().measure()).abs() < 1e-14);
            assert!((g.cell_volume() * g.cell_count() as f64 - g.domain().measure()).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_examples() {
        let g = line(-1.0, 1.0, 11);
        let grad = gradient(&g, &sample(&g, |x| x[0]));
        assert!(grad.data().iter().all(|&d| (d - 1.0).abs() < 1e-14));
        let grad = gradient(&g, &sample(&g, |_| 3.0));
        assert!(grad.data().iter().all(|&d| d == 0.0));

        let g = line(-1.0, 1.0, 101);
        let grad = gradient(&g, &sample(&g, |x| x[0] * x[0]));
        for &k in g.interior_nodes() {
            assert!((grad.get(k)[0] - 2.0 * g.coords(k)[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = line(-1.0, 1.0, 17);
        let w = VectorField::from_data(1, vec![2.5; g.node_count()]);
        assert!(divergence(&g, &w).0.iter().all(|d| d.abs() < 1e-13));
        let w = VectorField::from_data(1, (0..g.node_count()).map(|k| g.coords(k)[0]).collect());
        assert!(divergence(&g, &w).0.iter().all(|d| (d - 1.0).abs() < 1e-13));
    }

    #[test]
    fn laplacian_examples() {
        let g = line(-1.0, 1.0, 21);
        let lap = laplacian(&g, &sample(&g, |x| x[0] * x[0]));
        for &k in g.interior_nodes() {
            assert!((lap.0[k] - 2.0).abs() < 1e-10);
        }
        let lap = laplacian(&g, &sample(&g, |x| 3.0 * x[0] - 1.0));
        assert!(lap.0.iter().all(|d| d.abs() < 1e-10));
        let s = square(11);
        let lap = laplacian(&s, &sample(&s, |x| x[0] * x[0] + x[1] * x[1]));
        for &k in s.interior_nodes() {
            assert!((lap.0[k] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cell_pair_reproduces_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in [line(-1.0, 1.0, 17), square(9)] {
            let v = GridFunction((0..g.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let composed = cell_divergence(&g, &cell_gradient(&g, &v));
            let lap = laplacian(&g, &v);
            for &k in g.interior_nodes() {
                assert!((composed.0[k] - lap.0[k]).abs() <= 1e-12 * lap.0[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn cell_gradient_exact_on_linear() {
        let s = square(7);
        let grad = cell_gradient(&s, &sample(&s, |x| 2.0 * x[0] - 3.0 * x[1] + 1.0));
        for c in 0..s.cell_count() {
            assert!((grad.get(c)[0] - 2.0).abs() < 1e-12);
            assert!((grad.get(c)[1] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nodal_pair_composes_to_laplacian_on_quadratics() {
        let g = line(-1.0, 1.0, 33);
        let v = sample(&g, |x| 1.0 - x[0] * x[0]);
        let composed = divergence(&g, &gradient(&g, &v));
        let lap = laplacian(&g, &v);
        for &k in g.interior_nodes() {
            let idx = g.multi_index(k)[0];
            if idx >= 2 && idx <= 30 {
                assert!((composed.0[k] - lap.0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_examples() {
        let g = line(0.0, 1.0, 101);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert!((norm_lp(&g, &sample(&g, |_| 1.0), p) - 1.0).abs() < 1e-12);
            assert_eq!(norm_lp(&g, &GridFunction::zeros(&g), p), 0.0);
        }
        let v = norm_lp(&g, &sample(&g, |x| x[0]), 2.0);
        assert!((v - (1.0f64 / 3.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn nodal_averaging_of_cell_fields() {
        let g = line(0.0, 1.0, 5);
        let c = CellField(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.to_nodal(&g).0, vec![1.0, 1.5, 2.5, 3.5, 4.0]);
    }
}
