//! Tensor grids, grid functions and the weighted `L²(Ω)` structure.
//!
//! Nodes include the geometric boundary. Node weights are the trapezoidal
//! rule, so `Σ wᵢ = |Ω|` and affine functions integrate exactly. Discrete
//! gradients live on edges; an edge along axis `a` carries the weight
//! `h_a · w_⊥`, where `w_⊥` is the trapezoidal weight transverse to the edge.
//! With that choice [`divergence`] is the exact negative adjoint of
//! [`gradient`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical coordinates of a node. The second entry is zero in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet data imposed through zero ghost values just
    /// outside the boundary nodes.
    Dirichlet,
    /// Natural boundary condition: no edges cross `∂Ω`.
    Neumann,
}

/// A mesh edge. A `None` endpoint is a ghost node carrying the value zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: Option<usize>,
    pub head: Option<usize>,
    pub axis: usize,
    pub length: f64,
    pub weight: f64,
}

impl Edge {
    #[inline]
    pub fn difference(&self, values: &[f64]) -> f64 {
        let head = self.head.map_or(0.0, |i| values[i]);
        let tail = self.tail.map_or(0.0, |i| values[i]);
        (head - tail) / self.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    weights: Vec<f64>,
    boundary_mask: Vec<bool>,
    boundary_nodes: Vec<usize>,
    boundary_weights: Vec<f64>,
    dirichlet_edges: Vec<Edge>,
    neumann_edges: Vec<Edge>,
}

fn trapezoid(count: usize, h: f64) -> Vec<f64> {
    (0..count)
        .map(|k| if k == 0 || k + 1 == count { 0.5 * h } else { h })
        .collect()
}

impl Grid {
    /// Uniform grid on `[0, extents[0]] (× [0, extents[1]])` with
    /// `counts[a]` nodes along axis `a`, boundary nodes included.
    pub fn new(extents: &[f64], counts: &[usize]) -> Result<Arc<Grid>> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) || counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2 with one node count per axis (got {} extents, {} counts)",
                dim,
                counts.len()
            )));
        }
        if extents.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidGrid("extents must be positive and finite".into()));
        }
        if counts.iter().any(|&n| n < 2) {
            return Err(Error::InvalidGrid("at least two nodes per axis are required".into()));
        }

        let spacing: Vec<f64> = extents
            .iter()
            .zip(counts)
            .map(|(&l, &n)| l / (n - 1) as f64)
            .collect();
        let axis_weights: Vec<Vec<f64>> = counts
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| trapezoid(n, h))
            .collect();

        let nx = counts[0];
        let ny = if dim == 2 { counts[1] } else { 1 };
        let total = nx * ny;
        let wy = |j: usize| if dim == 2 { axis_weights[1][j] } else { 1.0 };

        let mut weights = Vec::with_capacity(total);
        let mut boundary_mask = Vec::with_capacity(total);
        let mut boundary_nodes = Vec::new();
        let mut boundary_weights = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                weights.push(axis_weights[0][i] * wy(j));
                let on_x = i == 0 || i + 1 == nx;
                let on_y = dim == 2 && (j == 0 || j + 1 == ny);
                let on_boundary = on_x || on_y;
                boundary_mask.push(on_boundary);
                if on_boundary {
                    boundary_nodes.push(i + nx * j);
                    let bw = if dim == 1 {
                        // counting measure on the two end points
                        1.0
                    } else {
                        let mut bw = 0.0;
                        if on_y {
                            bw += axis_weights[0][i];
                        }
                        if on_x {
                            bw += axis_weights[1][j];
                        }
                        bw
                    };
                    boundary_weights.push(bw);
                }
            }
        }

        let mut neumann_edges = Vec::new();
        let mut dirichlet_edges = Vec::new();
        for axis in 0..dim {
            let (stride, n_axis) = if axis == 0 { (1, nx) } else { (nx, ny) };
            let h = spacing[axis];
            for j in 0..ny {
                for i in 0..nx {
                    let node = i + nx * j;
                    let (k, transverse) = if axis == 0 {
                        (i, wy(j))
                    } else {
                        (j, axis_weights[0][i])
                    };
                    let weight = h * transverse;
                    if k == 0 {
                        dirichlet_edges.push(Edge {
                            tail: None,
                            head: Some(node),
                            axis,
                            length: h,
                            weight,
                        });
                    }
                    if k + 1 < n_axis {
                        let e = Edge {
                            tail: Some(node),
                            head: Some(node + stride),
                            axis,
                            length: h,
                            weight,
                        };
                        neumann_edges.push(e);
                        dirichlet_edges.push(e);
                    } else {
                        dirichlet_edges.push(Edge {
                            tail: Some(node),
                            head: None,
                            axis,
                            length: h,
                            weight,
                        });
                    }
                }
            }
        }

        Ok(Arc::new(Grid {
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
            weights,
            boundary_mask,
            boundary_nodes,
            boundary_weights,
            dirichlet_edges,
            neumann_edges,
        }))
    }

    pub fn interval(length: f64, nodes: usize) -> Result<Arc<Grid>> {
        Grid::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<Grid>> {
        Grid::new(&[lx, ly], &[nx, ny])
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest mesh width over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|Ω|`, the sum of the node weights.
    pub fn measure(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    /// Boundary node indices in increasing order.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Surface quadrature weights aligned with [`Grid::boundary_nodes`].
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn edges(&self, bc: BoundaryCondition) -> &[Edge] {
        match bc {
            BoundaryCondition::Dirichlet => &self.dirichlet_edges,
            BoundaryCondition::Neumann => &self.neumann_edges,
        }
    }

    pub fn point(&self, node: usize) -> Point {
        let nx = self.counts[0];
        let i = node % nx;
        let x = i as f64 * self.spacing[0];
        if self.dimension() == 2 {
            let j = node / nx;
            [x, j as f64 * self.spacing[1]]
        } else {
            [x, 0.0]
        }
    }
}

/// An element of a finite-dimensional weighted `L²` space.
///
/// Implemented by [`GridFunction`] (`L²(Ω)`) and by boundary functions
/// (`L²(∂Ω)`), so time stepping, Picard iteration and the estimate checks
/// are written once for both.
pub trait Element: Clone {
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
    fn weights(&self) -> &[f64];
    fn point(&self, index: usize) -> Point;
    /// Whether both elements belong to the same space.
    fn compatible(&self, other: &Self) -> bool;
    /// A new element of the same space. Panics on a length mismatch.
    fn with_values(&self, values: Vec<f64>) -> Self;

    fn len(&self) -> usize {
        self.values().len()
    }

    fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    fn zeros_like(&self) -> Self {
        self.with_values(vec![0.0; self.len()])
    }

    fn constant_like(&self, c: f64) -> Self {
        self.with_values(vec![c; self.len()])
    }

    /// `|Ω|` of the underlying space.
    fn measure(&self) -> f64 {
        self.weights().iter().sum()
    }
}

#[inline]
pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

#[inline]
pub(crate) fn weighted_norm(w: &[f64], a: &[f64]) -> f64 {
    weighted_dot(w, a, a).sqrt()
}

#[inline]
pub(crate) fn weighted_distance(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a)
        .zip(b)
        .map(|((w, a), b)| w * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `(u, v)_H = Σ wᵢ uᵢ vᵢ`.
pub fn inner_product<S: Element>(u: &S, v: &S) -> Result<f64> {
    if !u.compatible(v) {
        return Err(Error::SpaceMismatch);
    }
    Ok(weighted_dot(u.weights(), u.values(), v.values()))
}

pub fn norm<S: Element>(u: &S) -> f64 {
    weighted_norm(u.weights(), u.values())
}

/// `‖u − v‖_H`.
pub fn distance<S: Element>(u: &S, v: &S) -> Result<f64> {
    if !u.compatible(v) {
        return Err(Error::SpaceMismatch);
    }
    Ok(weighted_distance(u.weights(), u.values(), v.values()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid function values must be finite".into()));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridFunction { grid, values: vec![0.0; n] }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        GridFunction { grid, values: vec![c; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Element for GridFunction {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn weights(&self) -> &[f64] {
        self.grid.weights()
    }

    fn point(&self, index: usize) -> Point {
        self.grid.point(index)
    }

    fn compatible(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.grid.len(), "node count mismatch");
        GridFunction { grid: self.grid.clone(), values }
    }

    fn measure(&self) -> f64 {
        self.grid.measure()
    }
}

/// Discrete gradient: one difference quotient per edge of the edge set
/// selected by the boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    grid: Arc<Grid>,
    bc: BoundaryCondition,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn new(grid: Arc<Grid>, bc: BoundaryCondition, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.edges(bc).len() {
            return Err(Error::InvalidInput(format!(
                "expected {} edge values, got {}",
                grid.edges(bc).len(),
                values.len()
            )));
        }
        Ok(EdgeField { grid, bc, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `Σ_e w_e a_e b_e`.
    pub fn inner_product(&self, other: &EdgeField) -> Result<f64> {
        if self.bc != other.bc || *self.grid != *other.grid {
            return Err(Error::SpaceMismatch);
        }
        Ok(self
            .grid
            .edges(self.bc)
            .iter()
            .zip(&self.values)
            .zip(&other.values)
            .map(|((e, a), b)| e.weight * a * b)
            .sum())
    }
}

pub fn gradient(u: &GridFunction, bc: BoundaryCondition) -> EdgeField {
    let values = u
        .grid
        .edges(bc)
        .iter()
        .map(|e| e.difference(&u.values))
        .collect();
    EdgeField { grid: u.grid.clone(), bc, values }
}

/// Negative adjoint of [`gradient`] in the weighted inner products.
pub fn divergence(q: &EdgeField) -> GridFunction {
    let grid = &q.grid;
    let mut acc = vec![0.0; grid.len()];
    for (e, &qe) in grid.edges(q.bc).iter().zip(&q.values) {
        let flux = e.weight * qe / e.length;
        if let Some(h) = e.head {
            acc[h] -= flux;
        }
        if let Some(t) = e.tail {
            acc[t] += flux;
        }
    }
    for (a, w) in acc.iter_mut().zip(grid.weights()) {
        *a /= w;
    }
    GridFunction { grid: grid.clone(), values: acc }
}
