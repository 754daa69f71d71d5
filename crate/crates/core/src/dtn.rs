//! Boundary evolutions driven by the p-Dirichlet-to-Neumann operator.
//!
//! The state lives in `L²(∂Ω)` and the energy is the reduced functional
//! `φᴴ(u) = min { (1/p)∫|Dû|^p : Tr û = u }`. A time step minimizes
//! `(1/p)∫|Dû|^p + ‖Tr û − z‖²_{∂Ω}/(2τ)` jointly over interior and boundary
//! values, which is the same as the resolvent of `∂φᴴ` at `z`.

use std::cell::RefCell;
use std::sync::Arc;

use crate::energy::{EnergyFunctional, EnergySpec, GraphSpec};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with, zero_forcing, StepOutcome, Stepper, TimeMesh, Trajectory};
use crate::fixedpoint::{solve_perturbed, FixedPointReport, PicardConfig};
use crate::minimize::{minimize, MinimizeOptions};
use crate::perturbation::NemytskiiSpec;
use crate::prox::ProxObjective;
use crate::space::{weighted_distance, weighted_norm, BoundaryCondition, Element, Grid, GridFunction, Point};

/// `L²(∂Ω)` on the boundary nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpace {
    grid: Arc<Grid>,
    nodes: Vec<usize>,
    weights: Vec<f64>,
    interior: Vec<usize>,
}

impl TraceSpace {
    pub fn new(grid: Arc<Grid>) -> Arc<TraceSpace> {
        let nodes = grid.boundary_nodes().to_vec();
        let weights = grid.boundary_weights().to_vec();
        let interior = (0..grid.len()).filter(|i| !grid.boundary_mask()[*i]).collect();
        Arc::new(TraceSpace { grid, nodes, weights, interior })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `|∂Ω|`; the number of endpoints for an interval.
    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction {
    space: Arc<TraceSpace>,
    values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(space: Arc<TraceSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} boundary nodes",
                values.len(),
                space.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("boundary values must be finite".into()));
        }
        Ok(BoundaryFunction { space, values })
    }

    pub fn constant(space: Arc<TraceSpace>, c: f64) -> Self {
        let values = vec![c; space.len()];
        BoundaryFunction { space, values }
    }

    pub fn from_fn(space: Arc<TraceSpace>, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = space.nodes.iter().map(|&n| f(space.grid.point(n))).collect();
        BoundaryFunction { space, values }
    }

    pub fn space(&self) -> &Arc<TraceSpace> {
        &self.space
    }
}

impl Element for BoundaryFunction {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn weights(&self) -> &[f64] {
        &self.space.weights
    }

    fn point(&self, index: usize) -> Point {
        self.space.grid.point(self.space.nodes[index])
    }

    fn compatible(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || self.space == other.space
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        BoundaryFunction { space: self.space.clone(), values }
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Restriction to the boundary nodes.
pub fn trace(space: &Arc<TraceSpace>, u: &GridFunction) -> Result<BoundaryFunction> {
    if !same_grid(space.grid(), u.grid()) {
        return Err(Error::SpaceMismatch);
    }
    let values = space.nodes.iter().map(|&n| u.values()[n]).collect();
    Ok(BoundaryFunction { space: space.clone(), values })
}

/// The p-Dirichlet energy on `Ω` with free boundary values, together with
/// the machinery to reduce it to the boundary.
#[derive(Debug, Clone)]
pub struct DtnEnergy {
    space: Arc<TraceSpace>,
    energy: EnergyFunctional,
    /// Diagonal of the `p = 2` stiffness matrix.
    stiffness_diagonal: Vec<f64>,
    pub options: MinimizeOptions,
}

impl DtnEnergy {
    pub fn new(space: Arc<TraceSpace>, p: f64, epsilon: Option<f64>, options: MinimizeOptions) -> Result<DtnEnergy> {
        let mut spec = EnergySpec::p_dirichlet(p, BoundaryCondition::Neumann);
        spec.epsilon = epsilon;
        let energy = EnergyFunctional::new(space.grid().clone(), spec)?;
        let mut stiffness_diagonal = vec![0.0; space.grid().len()];
        for e in space.grid().edges(BoundaryCondition::Neumann) {
            let k = e.weight / (e.length * e.length);
            for node in [e.head, e.tail].into_iter().flatten() {
                stiffness_diagonal[node] += k;
            }
        }
        if options.tol <= 0.0 {
            return Err(Error::InvalidInput("extension tolerance must be positive".into()));
        }
        Ok(DtnEnergy { space, energy, stiffness_diagonal, options })
    }

    pub fn space(&self) -> &Arc<TraceSpace> {
        &self.space
    }

    pub fn energy(&self) -> &EnergyFunctional {
        &self.energy
    }

    pub fn p(&self) -> f64 {
        self.energy.p()
    }

    fn euclidean_gradient(&self, u: &[f64], out: &mut [f64]) {
        self.energy.smooth_gradient_into(u, out);
        for (o, w) in out.iter_mut().zip(self.space.grid().weights()) {
            *o *= w;
        }
    }

    fn check(&self, u: &BoundaryFunction) -> Result<()> {
        if u.space.as_ref() != self.space.as_ref() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Minimizer of the energy over interior values with `Tr û = u`.
    /// `warm` is a full nodal vector used as the starting point.
    pub fn extension_from(&self, u: &BoundaryFunction, warm: Option<&[f64]>) -> Result<GridFunction> {
        self.check(u)?;
        let grid = self.space.grid();
        let interior = &self.space.interior;
        let mut full = match warm {
            Some(w) if w.len() == grid.len() => w.to_vec(),
            _ => {
                let mean = u.values.iter().zip(&self.space.weights).map(|(v, w)| v * w).sum::<f64>()
                    / self.space.perimeter();
                vec![mean; grid.len()]
            }
        };
        for (&n, &v) in self.space.nodes.iter().zip(&u.values) {
            full[n] = v;
        }
        if !interior.is_empty() {
            let x0: Vec<f64> = interior.iter().map(|&i| full[i]).collect();
            let pre: Vec<f64> = interior.iter().map(|&i| self.stiffness_diagonal[i]).collect();
            let metric: Vec<f64> = interior.iter().map(|&i| grid.weights()[i]).collect();
            let mut work = full.clone();
            let mut g_full = vec![0.0; grid.len()];
            let result = minimize(
                |x, g| {
                    for (&i, &v) in interior.iter().zip(x) {
                        work[i] = v;
                    }
                    self.euclidean_gradient(&work, &mut g_full);
                    for (gi, &i) in g.iter_mut().zip(interior) {
                        *gi = g_full[i];
                    }
                },
                x0,
                &pre,
                &metric,
                self.options,
            )?;
            for (&i, v) in interior.iter().zip(result.x) {
                full[i] = v;
            }
        }
        GridFunction::new(grid.clone(), full)
    }

    pub fn extension(&self, u: &BoundaryFunction) -> Result<GridFunction> {
        self.extension_from(u, None)
    }

    /// `φᴴ(u)`, normalized so that constants have zero energy.
    pub fn reduced_energy(&self, u: &BoundaryFunction) -> Result<f64> {
        Ok(self.energy.evaluate(&self.extension(u)?))
    }

    /// Riesz gradient of `φᴴ` in `L²(∂Ω)`: the boundary part of the energy
    /// derivative at the extension, divided by the surface weights.
    pub fn reduced_gradient_at(&self, extension: &GridFunction) -> Vec<f64> {
        let mut g = vec![0.0; extension.len()];
        self.euclidean_gradient(extension.values(), &mut g);
        self.space.nodes.iter().zip(&self.space.weights).map(|(&n, w)| g[n] / w).collect()
    }

    pub fn reduced_gradient(&self, u: &BoundaryFunction) -> Result<BoundaryFunction> {
        let ext = self.extension(u)?;
        Ok(u.with_values(self.reduced_gradient_at(&ext)))
    }

    /// One implicit step: joint minimization of the energy plus the boundary
    /// fidelity `‖Tr û − z‖²/(2τ)`.
    pub fn joint_step(&self, tau: f64, z: &BoundaryFunction, warm: Option<&[f64]>) -> Result<(GridFunction, f64, usize)> {
        self.check(z)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {tau}")));
        }
        let grid = self.space.grid();
        let x0 = match warm {
            Some(w) if w.len() == grid.len() => w.to_vec(),
            _ => self.extension(z)?.into_values(),
        };
        let mut pre = self.stiffness_diagonal.clone();
        let mut metric = grid.weights().to_vec();
        for (&n, &w) in self.space.nodes.iter().zip(&self.space.weights) {
            pre[n] += w / tau;
            metric[n] = w;
        }
        let nodes = &self.space.nodes;
        let bw = &self.space.weights;
        let zv = &z.values;
        let result = minimize(
            |x, g| {
                self.euclidean_gradient(x, g);
                for ((&n, w), zi) in nodes.iter().zip(bw).zip(zv) {
                    g[n] += w * (x[n] - zi) / tau;
                }
            },
            x0,
            &pre,
            &metric,
            self.options,
        )?;
        Ok((GridFunction::new(grid.clone(), result.x)?, result.residual, result.iterations))
    }
}

/// `p`-harmonic extension of boundary data.
pub fn p_harmonic_extension(u: &BoundaryFunction, p: f64, epsilon: Option<f64>, tol: f64) -> Result<GridFunction> {
    let options = MinimizeOptions { tol, ..Default::default() };
    DtnEnergy::new(u.space.clone(), p, epsilon, options)?.extension(u)
}

/// `φᴴ(u)` at the extension of `u`.
pub fn reduced_energy(u: &BoundaryFunction, p: f64, epsilon: Option<f64>, tol: f64) -> Result<f64> {
    let options = MinimizeOptions { tol, ..Default::default() };
    DtnEnergy::new(u.space.clone(), p, epsilon, options)?.reduced_energy(u)
}

static NO_GRAPH: GraphSpec = GraphSpec::None;

/// `φᴴ` as a prox objective; every evaluation solves an extension problem.
/// Extension failures surface as a NaN objective.
pub struct ReducedEnergy<'a> {
    dtn: &'a DtnEnergy,
    warm: RefCell<Option<Vec<f64>>>,
}

impl<'a> ReducedEnergy<'a> {
    pub fn new(dtn: &'a DtnEnergy) -> Self {
        ReducedEnergy { dtn, warm: RefCell::new(None) }
    }

    fn extend(&self, u: &[f64]) -> Option<GridFunction> {
        let b = BoundaryFunction::new(self.dtn.space.clone(), u.to_vec()).ok()?;
        let warm = self.warm.borrow().clone();
        let ext = self.dtn.extension_from(&b, warm.as_deref()).ok()?;
        *self.warm.borrow_mut() = Some(ext.values().to_vec());
        Some(ext)
    }
}

impl ProxObjective for ReducedEnergy<'_> {
    fn weights(&self) -> &[f64] {
        self.dtn.space.weights()
    }

    fn shift(&self) -> f64 {
        0.0
    }

    fn graph(&self) -> &GraphSpec {
        &NO_GRAPH
    }

    fn smooth_value(&self, u: &[f64]) -> f64 {
        self.extend(u).map_or(f64::NAN, |e| self.dtn.energy.evaluate(&e))
    }

    fn smooth_gradient(&self, u: &[f64], out: &mut [f64]) {
        match self.extend(u) {
            Some(e) => out.copy_from_slice(&self.dtn.reduced_gradient_at(&e)),
            None => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }
}

/// Implicit Euler for the DtN flow, one joint minimization per step.
pub struct DtnStepper<'a> {
    dtn: &'a DtnEnergy,
    warm: Option<Vec<f64>>,
    cached: Option<(Vec<f64>, f64)>,
    trace_constant: f64,
}

impl<'a> DtnStepper<'a> {
    pub fn new(dtn: &'a DtnEnergy) -> Self {
        DtnStepper { dtn, warm: None, cached: None, trace_constant: 0.0 }
    }

    /// Largest `‖Tr û‖_{∂Ω} / (‖û‖_Ω + φ(û)^{1/p})` seen over computed steps.
    pub fn trace_constant(&self) -> f64 {
        self.trace_constant
    }

    fn record(&mut self, full: &GridFunction, energy: f64) {
        let space = &self.dtn.space;
        let tr: Vec<f64> = space.nodes.iter().map(|&n| full.values()[n]).collect();
        let num = weighted_norm(&space.weights, &tr);
        let den = weighted_norm(full.weights(), full.values()) + energy.max(0.0).powf(1.0 / self.dtn.p());
        if den > 0.0 {
            self.trace_constant = self.trace_constant.max(num / den);
        }
        self.cached = Some((tr, energy));
        self.warm = Some(full.values().to_vec());
    }
}

impl Stepper<BoundaryFunction> for DtnStepper<'_> {
    fn omega(&self) -> f64 {
        0.0
    }

    fn energy(&mut self, u: &BoundaryFunction) -> Result<f64> {
        if let Some((values, e)) = &self.cached {
            if values == &u.values {
                return Ok(*e);
            }
        }
        let ext = self.dtn.extension_from(u, self.warm.as_deref())?;
        let e = self.dtn.energy.evaluate(&ext);
        self.record(&ext, e);
        Ok(e)
    }

    fn step(&mut self, tau: f64, anchor: &BoundaryFunction) -> Result<StepOutcome<BoundaryFunction>> {
        let (full, residual, iterations) = self.dtn.joint_step(tau, anchor, self.warm.as_deref())?;
        let state = trace(&self.dtn.space, &full)?;
        let e = self.dtn.energy.evaluate(&full);
        self.record(&full, e);
        Ok(StepOutcome { state, residual, iterations })
    }

    fn inclusion_residual(&mut self, v: &BoundaryFunction, g: &BoundaryFunction) -> Result<f64> {
        let ext = self.dtn.extension_from(v, self.warm.as_deref())?;
        let grad = self.dtn.reduced_gradient_at(&ext);
        Ok(weighted_distance(&self.dtn.space.weights, &grad, &g.values))
    }

    fn reset(&mut self) {
        self.warm = None;
        self.cached = None;
    }
}

#[derive(Debug, Clone)]
pub struct DtnRun {
    pub trajectory: Trajectory<BoundaryFunction>,
    pub report: Option<FixedPointReport>,
    pub trace_constant: f64,
}

/// The DtN flow `u' + ∂φᴴ(u) ∋ Gu` on `∂Ω`; plain implicit Euler without a
/// perturbation, Picard iteration with one.
pub fn evolve_dtn(
    dtn: &DtnEnergy,
    u0: &BoundaryFunction,
    perturbation: Option<&NemytskiiSpec>,
    mesh: &TimeMesh,
    picard: &PicardConfig,
) -> Result<DtnRun> {
    let mut stepper = DtnStepper::new(dtn);
    let (trajectory, report) = match perturbation {
        None => (evolve_with(&mut stepper, u0, &zero_forcing(u0, mesh), mesh)?, None),
        Some(g) => {
            let (tr, report) = solve_perturbed(&mut stepper, g, u0, mesh, picard)?;
            (tr, Some(report))
        }
    };
    Ok(DtnRun { trajectory, report, trace_constant: stepper.trace_constant() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{solve_prox, ProxOptions, ProxProblem};
    use crate::space::distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight() -> MinimizeOptions {
        MinimizeOptions { tol: 1e-11, ..Default::default() }
    }

    #[test]
    fn trace_space_measures_the_boundary() {
        let space = TraceSpace::new(Grid::rectangle(1.0, 2.0, 9, 13).unwrap());
        assert!((space.perimeter() - 6.0).abs() < 1e-12 * 6.0);
        assert!(space.weights().iter().all(|w| *w > 0.0));
        let space = TraceSpace::new(Grid::interval(1.0, 5).unwrap());
        assert_eq!(space.perimeter(), 2.0);
    }

    #[test]
    fn trace_is_linear_restriction() {
        let grid = Grid::rectangle(1.0, 1.0, 6, 5).unwrap();
        let space = TraceSpace::new(grid.clone());
        let one = trace(&space, &GridFunction::constant(grid.clone(), 1.0)).unwrap();
        assert!(one.values().iter().all(|v| *v == 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = GridFunction::from_fn(grid.clone(), |_| rng.gen_range(-1.0..1.0));
        let b = GridFunction::from_fn(grid.clone(), |_| rng.gen_range(-1.0..1.0));
        let sum = a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| 2.0 * x + y).collect());
        let (ta, tb, ts) = (trace(&space, &a).unwrap(), trace(&space, &b).unwrap(), trace(&space, &sum).unwrap());
        for i in 0..ts.len() {
            assert_eq!(ts.values()[i], 2.0 * ta.values()[i] + tb.values()[i]);
        }
        let other = Grid::rectangle(1.0, 1.0, 5, 5).unwrap();
        assert!(trace(&space, &GridFunction::zeros(other)).is_err());
    }

    #[test]
    fn constants_and_ramps() {
        let space = TraceSpace::new(Grid::rectangle(1.0, 1.0, 9, 9).unwrap());
        let c = BoundaryFunction::constant(space.clone(), 0.7);
        let ext = p_harmonic_extension(&c, 3.0, None, 1e-10).unwrap();
        assert!(ext.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(reduced_energy(&c, 3.0, None, 1e-10).unwrap().abs() < 1e-20);

        let space = TraceSpace::new(Grid::interval(1.0, 21).unwrap());
        for p in [1.5, 2.0, 3.0, 4.0] {
            let u = BoundaryFunction::new(space.clone(), vec![0.0, 1.0]).unwrap();
            let ext = p_harmonic_extension(&u, p, None, 1e-12).unwrap();
            for (i, v) in ext.values().iter().enumerate() {
                assert!((v - i as f64 / 20.0).abs() < 1e-7, "p={p}");
            }
            assert_eq!(trace(&space, &ext).unwrap().values(), u.values());
            let e = reduced_energy(&u, p, None, 1e-12).unwrap();
            assert!((e - 1.0 / p).abs() < 1e-8, "p={p}: {e}");
        }
    }

    #[test]
    fn constant_data_is_stationary() {
        let space = TraceSpace::new(Grid::rectangle(1.0, 1.0, 7, 7).unwrap());
        let dtn = DtnEnergy::new(space.clone(), 3.0, None, tight()).unwrap();
        let u0 = BoundaryFunction::constant(space, -0.3);
        let mesh = TimeMesh::uniform(0.1, 5).unwrap();
        let run = evolve_dtn(&dtn, &u0, None, &mesh, &PicardConfig::default()).unwrap();
        for u in &run.trajectory.states {
            assert!(distance(u, &u0).unwrap() < 1e-12);
        }
    }

    #[test]
    fn step_matches_prox_of_reduced_energy() {
        let space = TraceSpace::new(Grid::rectangle(1.0, 1.0, 9, 9).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2.0, 3.0] {
            let dtn = DtnEnergy::new(space.clone(), p, None, tight()).unwrap();
            let z = BoundaryFunction::from_fn(space.clone(), |_| rng.gen_range(-1.0..1.0));
            let tau = 0.02;
            let mut stepper = DtnStepper::new(&dtn);
            let joint = stepper.step(tau, &z).unwrap().state;
            let reduced = ReducedEnergy::new(&dtn);
            let prox = solve_prox(&ProxProblem {
                objective: &reduced,
                tau,
                anchor: &z,
                options: ProxOptions::with_tol(1e-10),
            })
            .unwrap();
            let gap = distance(&joint, &prox.minimizer).unwrap();
            assert!(gap < 1e-9, "p={p}: {gap}");
            let g = z.with_values(z.values().iter().zip(joint.values()).map(|(a, b)| (a - b) / tau).collect());
            assert!(stepper.inclusion_residual(&joint, &g).unwrap() < 1e-8);
        }
    }

    #[test]
    fn trace_constant_is_recorded() {
        let space = TraceSpace::new(Grid::rectangle(1.0, 1.0, 9, 9).unwrap());
        let dtn = DtnEnergy::new(space.clone(), 2.0, None, tight()).unwrap();
        let u0 = BoundaryFunction::from_fn(space, |x| x[0] - x[1] * x[1]);
        let mesh = TimeMesh::uniform(0.05, 5).unwrap();
        let run = evolve_dtn(&dtn, &u0, None, &mesh, &PicardConfig::default()).unwrap();
        assert!(run.trace_constant > 0.0 && run.trace_constant.is_finite());
        assert!(run.trajectory.energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
